#include "nl2bpf/util/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>

namespace nl2bpf::util {

namespace {

bool is_executable(const std::string& path) {
    struct stat st {};
    return ::stat(path.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(path.c_str(), X_OK) == 0;
}

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

}  // namespace

std::optional<std::string> find_executable(const std::string& name) {
    if (name.empty()) return std::nullopt;
    if (name.find('/') != std::string::npos) {
        if (is_executable(name)) return name;
        return std::nullopt;
    }
    const char* path = std::getenv("PATH");
    if (!path) return std::nullopt;
    std::stringstream dirs(path);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
        if (dir.empty()) continue;
        std::string candidate = dir + "/" + name;
        if (is_executable(candidate)) return candidate;
    }
    return std::nullopt;
}

std::optional<ProcessResult> run_process(const std::vector<std::string>& argv, const std::string& input,
                                         std::chrono::milliseconds timeout) {
    if (argv.empty()) return std::nullopt;
    auto resolved = find_executable(argv[0]);
    if (!resolved) return std::nullopt;

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) return std::nullopt;
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        return std::nullopt;
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        return std::nullopt;
    }

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
        return std::nullopt;
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::execv(resolved->c_str(), args.data());
        ::_exit(127);
    }

    int to_child = in_pipe[1];
    int from_out = out_pipe[0];
    int from_err = err_pipe[0];
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::fcntl(to_child, F_SETFL, O_NONBLOCK);
    ::signal(SIGPIPE, SIG_IGN);

    ProcessResult result;
    std::size_t written = 0;
    if (input.empty()) close_fd(to_child);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buffer[8192];

    while (from_out >= 0 || from_err >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            ::kill(pid, SIGKILL);
            break;
        }
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        pollfd fds[3];
        int n = 0;
        int idx_in = -1, idx_out = -1, idx_err = -1;
        if (to_child >= 0) {
            fds[n] = {to_child, POLLOUT, 0};
            idx_in = n++;
        }
        if (from_out >= 0) {
            fds[n] = {from_out, POLLIN, 0};
            idx_out = n++;
        }
        if (from_err >= 0) {
            fds[n] = {from_err, POLLIN, 0};
            idx_err = n++;
        }
        int ready = ::poll(fds, static_cast<nfds_t>(n), static_cast<int>(std::min<long long>(remaining, 100)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (fds[idx_in].revents & POLLOUT) {
                ssize_t w = ::write(to_child, input.data() + written, input.size() - written);
                if (w > 0) written += static_cast<std::size_t>(w);
                if (w < 0 && errno != EAGAIN) close_fd(to_child);
            } else {
                close_fd(to_child);
            }
            if (written >= input.size()) close_fd(to_child);
        }
        auto drain = [&](int idx, int& fd, std::string& sink) {
            if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
            ssize_t r = ::read(fd, buffer, sizeof(buffer));
            if (r > 0) {
                sink.append(buffer, static_cast<std::size_t>(r));
            } else if (r == 0 || errno != EAGAIN) {
                close_fd(fd);
            }
        };
        drain(idx_out, from_out, result.out);
        drain(idx_err, from_err, result.err);
    }
    close_fd(to_child);
    close_fd(from_out);
    close_fd(from_err);

    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!result.timed_out) {
        if (WIFEXITED(status)) {
            result.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result.exit_code = 128 + WTERMSIG(status);
        }
    }
    if (result.exit_code == 127 && result.out.empty()) return std::nullopt;
    return result;
}

}  // namespace nl2bpf::util
