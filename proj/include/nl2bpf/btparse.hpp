#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nl2bpf/ast.hpp"

namespace nl2bpf::btparse {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message);

    int line() const { return line_; }
    int column() const { return column_; }
    // Message without the "line:col:" prefix.
    const std::string& detail() const { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

class EmptyProgram : public std::runtime_error {
public:
    EmptyProgram() : std::runtime_error("program contains no probe clauses") {}
};

// Parses the bpftrace subset (probe clauses, predicates, scratch/map
// variables, field chains, if/else, unroll, printf, delete, assume/assert).
// Throws ParseError or EmptyProgram.
ast::Program parse(std::string_view source);

// Parses a single expression, e.g. the subject of a contract condition.
ast::Expr parse_expression(std::string_view source);

std::string render(const ast::Program& program);
std::string render(const ast::ProbeClause& clause);
std::string render(const ast::Stmt& stmt);
std::string render(const ast::Expr& expr);

// One entry per attach point in source order, duplicates kept.
std::vector<ast::ProbeSpec> extract_probes(const ast::Program& program);

// Removes every Assume/Assert statement (recursively); everything else is
// kept in order.
ast::Program strip_annotations(const ast::Program& program);

bool has_annotations(const ast::Program& program);
std::size_t count_annotations(const ast::Program& program);

}  // namespace nl2bpf::btparse
