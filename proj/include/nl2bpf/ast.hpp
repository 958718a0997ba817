#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace nl2bpf::ast {

struct SourceLoc {
    int line = 0;
    int column = 0;
};

// Owning pointer with value semantics: copies deeply, compares by pointee.
template <typename T>
class Box {
public:
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;
    ~Box() = default;

    const T& operator*() const { return *ptr_; }
    T& operator*() { return *ptr_; }
    const T* operator->() const { return ptr_.get(); }
    T* operator->() { return ptr_.get(); }

    friend bool operator==(const Box& a, const Box& b) { return *a.ptr_ == *b.ptr_; }

private:
    std::unique_ptr<T> ptr_;
};

struct Expr;
using ExprBox = Box<Expr>;

struct IntLit {
    uint64_t value = 0;
    int width = 64;
    bool hex = false;
    bool operator==(const IntLit&) const = default;
};

struct StrLit {
    std::string value;  // unescaped
    bool operator==(const StrLit&) const = default;
};

// tid, pid, comm, arg0..arg9, retval, or args.<field>.
struct BuiltinVar {
    std::string name;
    bool operator==(const BuiltinVar&) const = default;
};

struct ScratchVar {
    std::string name;  // without the leading '$'
    bool operator==(const ScratchVar&) const = default;
};

struct MapAccess {
    std::string name;  // without the leading '@'
    std::vector<Expr> keys;
    bool operator==(const MapAccess&) const;
};

struct FieldAccess {
    std::string name;
    bool arrow = true;  // reached via "->" (otherwise ".")
    bool operator==(const FieldAccess&) const = default;
};

struct FieldChain {
    ExprBox base;
    std::vector<FieldAccess> fields;
    bool operator==(const FieldChain&) const = default;
};

struct Cast {
    std::string type_name;  // normalized, e.g. "struct sock *", "uint16"
    ExprBox operand;
    bool operator==(const Cast&) const = default;
};

enum class UnaryOp { LogicalNot, BitNot, Negate };

struct Unary {
    UnaryOp op;
    ExprBox operand;
    bool operator==(const Unary&) const = default;
};

enum class BinaryOp {
    Add, Sub, Mul, Div, Mod,
    BitAnd, BitOr, BitXor, Shl, Shr,
    Eq, Ne, Lt, Le, Gt, Ge,
    LogicalAnd, LogicalOr,
};

struct Binary {
    BinaryOp op;
    ExprBox lhs;
    ExprBox rhs;
    bool operator==(const Binary&) const = default;
};

// ntop, bswap, sizeof, time, str.
struct Call {
    std::string name;
    std::vector<Expr> args;
    bool operator==(const Call&) const;
};

using ExprNode = std::variant<IntLit, StrLit, BuiltinVar, ScratchVar, MapAccess, FieldChain, Cast,
                              Unary, Binary, Call>;

struct Expr {
    ExprNode node;
    SourceLoc loc;

    // Structural equality; source positions are ignored.
    friend bool operator==(const Expr& a, const Expr& b) { return a.node == b.node; }
};

inline bool MapAccess::operator==(const MapAccess& o) const {
    return name == o.name && keys == o.keys;
}
inline bool Call::operator==(const Call& o) const { return name == o.name && args == o.args; }

struct Stmt;

struct Assign {
    std::string var;
    Expr value;
    bool operator==(const Assign&) const = default;
};

struct MapAssign {
    std::string map;
    std::vector<Expr> keys;
    Expr value;
    bool operator==(const MapAssign&) const = default;
};

// Write through a pointer field, e.g. `$sk->x = 1;`. Parsed so the safety
// gate can reject it.
struct FieldAssign {
    Expr target;  // always a FieldChain
    Expr value;
    bool operator==(const FieldAssign&) const = default;
};

struct Delete {
    std::string map;
    std::vector<Expr> keys;
    bool operator==(const Delete&) const = default;
};

struct Printf {
    std::string format;  // unescaped
    std::vector<Expr> args;
    bool operator==(const Printf&) const = default;
};

struct ExprStmt {
    Expr expr;
    bool operator==(const ExprStmt&) const = default;
};

struct If {
    Expr cond;
    std::vector<Stmt> then_body;
    std::vector<Stmt> else_body;
    bool has_else = false;
    bool operator==(const If&) const;
};

struct Unroll {
    uint64_t count = 0;
    std::vector<Stmt> body;
    bool operator==(const Unroll&) const;
};

struct Assume {
    Expr cond;
    bool operator==(const Assume&) const = default;
};

struct Assert {
    Expr cond;
    bool operator==(const Assert&) const = default;
};

using StmtNode = std::variant<Assign, MapAssign, FieldAssign, Delete, Printf, ExprStmt, If, Unroll,
                              Assume, Assert>;

struct Stmt {
    StmtNode node;
    SourceLoc loc;

    friend bool operator==(const Stmt& a, const Stmt& b) { return a.node == b.node; }
};

inline bool If::operator==(const If& o) const {
    return cond == o.cond && then_body == o.then_body && else_body == o.else_body &&
           has_else == o.has_else;
}
inline bool Unroll::operator==(const Unroll& o) const {
    return count == o.count && body == o.body;
}

enum class ProbeKind { Kprobe, Kretprobe, Tracepoint, Uprobe, Uretprobe };

struct ProbeSpec {
    ProbeKind kind = ProbeKind::Kprobe;
    std::string target;
    SourceLoc loc;

    friend bool operator==(const ProbeSpec& a, const ProbeSpec& b) {
        return a.kind == b.kind && a.target == b.target;
    }
};

struct ProbeClause {
    std::vector<ProbeSpec> attach_points;
    std::optional<Expr> predicate;
    std::vector<Stmt> body;
    SourceLoc loc;

    friend bool operator==(const ProbeClause& a, const ProbeClause& b) {
        return a.attach_points == b.attach_points && a.predicate == b.predicate &&
               a.body == b.body;
    }
};

struct Program {
    std::vector<ProbeClause> clauses;
    bool operator==(const Program&) const = default;
};

std::string_view to_string(ProbeKind kind);
std::optional<ProbeKind> probe_kind_from_string(std::string_view text);

// "kprobe:tcp_connect"
std::string to_string(const ProbeSpec& probe);

std::string_view to_string(BinaryOp op);
std::string_view to_string(UnaryOp op);

}  // namespace nl2bpf::ast
