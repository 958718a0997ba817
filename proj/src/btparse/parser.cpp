#include <cctype>
#include <charconv>
#include <optional>
#include <set>
#include <string>

#include "nl2bpf/btparse.hpp"

namespace nl2bpf::btparse {

using namespace ast;

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      detail_(message) {}

namespace {

enum class Tok { Ident, Int, String, Scratch, Map, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;  // identifier/punct spelling; unescaped string body
    uint64_t int_value = 0;
    bool hex = false;
    SourceLoc loc;
};

const std::set<std::string, std::less<>> kBuiltins = {
    "tid", "pid", "comm", "retval", "arg0", "arg1", "arg2", "arg3",
    "arg4", "arg5", "arg6", "arg7", "arg8", "arg9",
};

const std::set<std::string, std::less<>> kCalls = {"ntop", "bswap", "sizeof", "time", "str"};

const std::set<std::string, std::less<>> kIntTypes = {
    "int8", "int16", "int32", "int64", "uint8", "uint16", "uint32", "uint64",
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    SourceLoc loc() const { return {line_, col_}; }
    int line_count() const { return line_; }

    // Skips whitespace, comments, and a leading shebang line.
    void skip_trivia() {
        for (;;) {
            if (pos_ == 0 && src_.starts_with("#!")) {
                while (!eof() && cur() != '\n') advance();
                continue;
            }
            if (eof()) return;
            char c = cur();
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '/' && peek_char(1) == '/') {
                while (!eof() && cur() != '\n') advance();
            } else if (c == '/' && peek_char(1) == '*') {
                SourceLoc start = loc();
                advance();
                advance();
                while (!eof() && !(cur() == '*' && peek_char(1) == '/')) advance();
                if (eof()) throw ParseError(start.line, start.column, "unterminated comment");
                advance();
                advance();
            } else {
                return;
            }
        }
    }

    bool at_end() {
        skip_trivia();
        return eof();
    }

    // Reads `kind:target` where target runs to the next whitespace, ',' or
    // '{' (and '/' except for uprobe paths).
    ProbeSpec lex_probe() {
        skip_trivia();
        ProbeSpec spec;
        spec.loc = loc();
        if (eof()) throw error("expected probe specification");
        std::string kind;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_')) {
            kind.push_back(cur());
            advance();
        }
        auto parsed = probe_kind_from_string(kind);
        if (!parsed) {
            throw ParseError(spec.loc.line, spec.loc.column,
                             kind.empty() ? "expected probe specification"
                                          : "unknown probe type '" + kind + "'");
        }
        spec.kind = *parsed;
        if (eof() || cur() != ':') throw error("expected ':' after probe type");
        advance();
        bool allow_slash = spec.kind == ProbeKind::Uprobe || spec.kind == ProbeKind::Uretprobe;
        while (!eof()) {
            char c = cur();
            if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '{') break;
            if (c == '/' && !allow_slash) break;
            spec.target.push_back(c);
            advance();
        }
        if (spec.target.empty()) throw error("empty probe target");
        return spec;
    }

    Token next() {
        skip_trivia();
        Token t;
        t.loc = loc();
        if (eof()) {
            t.kind = Tok::End;
            return t;
        }
        char c = cur();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            t.kind = Tok::Ident;
            t.text = read_ident();
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) return read_number(t);
        if (c == '"') return read_string(t);
        if (c == '$') {
            advance();
            t.kind = Tok::Scratch;
            t.text = read_ident();
            if (t.text.empty()) throw ParseError(t.loc.line, t.loc.column, "expected variable name after '$'");
            return t;
        }
        if (c == '@') {
            advance();
            t.kind = Tok::Map;
            t.text = read_ident();
            return t;
        }
        static constexpr std::string_view kTwoChar[] = {"->", "==", "!=", "<=", ">=",
                                                        "<<", ">>", "&&", "||"};
        for (auto op : kTwoChar) {
            if (src_.substr(pos_).starts_with(op)) {
                advance();
                advance();
                t.kind = Tok::Punct;
                t.text = std::string(op);
                return t;
            }
        }
        static constexpr std::string_view kOneChar = "(){}[],;=+-*/%&|^!~<>.:";
        if (kOneChar.find(c) != std::string_view::npos) {
            advance();
            t.kind = Tok::Punct;
            t.text = std::string(1, c);
            return t;
        }
        throw ParseError(t.loc.line, t.loc.column, std::string("unexpected character '") + c + "'");
    }

private:
    bool eof() const { return pos_ >= src_.size(); }
    char cur() const { return src_[pos_]; }
    char peek_char(std::size_t n) const {
        return pos_ + n < src_.size() ? src_[pos_ + n] : '\0';
    }
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }
    ParseError error(const std::string& msg) const { return ParseError(line_, col_, msg); }

    std::string read_ident() {
        std::string out;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_')) {
            out.push_back(cur());
            advance();
        }
        return out;
    }

    Token read_number(Token t) {
        t.kind = Tok::Int;
        std::string digits;
        int base = 10;
        if (cur() == '0' && (peek_char(1) == 'x' || peek_char(1) == 'X')) {
            advance();
            advance();
            base = 16;
            t.hex = true;
        }
        while (!eof() && std::isalnum(static_cast<unsigned char>(cur()))) {
            digits.push_back(cur());
            advance();
        }
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t.int_value, base);
        if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
            throw ParseError(t.loc.line, t.loc.column, "invalid integer literal");
        }
        return t;
    }

    Token read_string(Token t) {
        t.kind = Tok::String;
        advance();
        while (!eof() && cur() != '"') {
            if (cur() == '\n') break;
            if (cur() == '\\') {
                advance();
                if (eof()) break;
                switch (cur()) {
                    case 'n': t.text.push_back('\n'); break;
                    case 't': t.text.push_back('\t'); break;
                    case 'r': t.text.push_back('\r'); break;
                    case '0': t.text.push_back('\0'); break;
                    case '"': t.text.push_back('"'); break;
                    case '\\': t.text.push_back('\\'); break;
                    default: throw error(std::string("unknown escape '\\") + cur() + "'");
                }
                advance();
                continue;
            }
            t.text.push_back(cur());
            advance();
        }
        if (eof() || cur() != '"') throw ParseError(t.loc.line, t.loc.column, "unterminated string literal");
        advance();
        return t;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

int precedence(std::string_view op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "|") return 3;
    if (op == "^") return 4;
    if (op == "&") return 5;
    if (op == "==" || op == "!=") return 6;
    if (op == "<" || op == "<=" || op == ">" || op == ">=") return 7;
    if (op == "<<" || op == ">>") return 8;
    if (op == "+" || op == "-") return 9;
    if (op == "*" || op == "/" || op == "%") return 10;
    return 0;
}

BinaryOp binary_op(std::string_view op) {
    if (op == "+") return BinaryOp::Add;
    if (op == "-") return BinaryOp::Sub;
    if (op == "*") return BinaryOp::Mul;
    if (op == "/") return BinaryOp::Div;
    if (op == "%") return BinaryOp::Mod;
    if (op == "&") return BinaryOp::BitAnd;
    if (op == "|") return BinaryOp::BitOr;
    if (op == "^") return BinaryOp::BitXor;
    if (op == "<<") return BinaryOp::Shl;
    if (op == ">>") return BinaryOp::Shr;
    if (op == "==") return BinaryOp::Eq;
    if (op == "!=") return BinaryOp::Ne;
    if (op == "<") return BinaryOp::Lt;
    if (op == "<=") return BinaryOp::Le;
    if (op == ">") return BinaryOp::Gt;
    if (op == ">=") return BinaryOp::Ge;
    if (op == "&&") return BinaryOp::LogicalAnd;
    return BinaryOp::LogicalOr;
}

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    Program parse_program() {
        Program program;
        for (;;) {
            if (!lookahead_.empty()) {
                if (lookahead_.front().kind == Tok::End) break;
                throw error_at(lookahead_.front(), "expected probe specification");
            }
            if (lex_.at_end()) break;
            program.clauses.push_back(parse_clause());
        }
        if (program.clauses.empty()) throw EmptyProgram();
        return program;
    }

    Expr parse_standalone_expr() {
        Expr e = parse_expr();
        if (peek().kind != Tok::End) throw error_at(peek(), "unexpected '" + peek().text + "' after expression");
        return e;
    }

private:
    const Token& peek(std::size_t n = 0) {
        while (lookahead_.size() <= n) lookahead_.push_back(lex_.next());
        return lookahead_[n];
    }

    Token take() {
        Token t = peek();
        lookahead_.erase(lookahead_.begin());
        return t;
    }

    bool is_punct(const Token& t, std::string_view p) const { return t.kind == Tok::Punct && t.text == p; }
    bool is_ident(const Token& t, std::string_view name) const { return t.kind == Tok::Ident && t.text == name; }

    static ParseError error_at(const Token& t, const std::string& msg) {
        return ParseError(t.loc.line, t.loc.column, msg);
    }

    static std::string describe(const Token& t) {
        switch (t.kind) {
            case Tok::End: return "end of input";
            case Tok::String: return "string literal";
            case Tok::Int: return "integer literal";
            case Tok::Scratch: return "'$" + t.text + "'";
            case Tok::Map: return "'@" + t.text + "'";
            default: return "'" + t.text + "'";
        }
    }

    Token expect(std::string_view punct) {
        if (!is_punct(peek(), punct)) {
            throw error_at(peek(), "expected '" + std::string(punct) + "' but found " + describe(peek()));
        }
        return take();
    }

    ProbeClause parse_clause() {
        ProbeClause clause;
        clause.attach_points.push_back(lex_.lex_probe());
        clause.loc = clause.attach_points.front().loc;
        while (is_punct(peek(), ",")) {
            take();
            clause.attach_points.push_back(lex_.lex_probe());
        }
        if (is_punct(peek(), "/")) {
            take();
            in_predicate_ = true;
            clause.predicate = parse_expr();
            in_predicate_ = false;
            expect("/");
        }
        clause.body = parse_block();
        return clause;
    }

    std::vector<Stmt> parse_block() {
        expect("{");
        std::vector<Stmt> body;
        for (;;) {
            const Token& t = peek();
            if (is_punct(t, "}")) break;
            if (t.kind == Tok::End) throw error_at(t, "expected '}' before end of input");
            if (is_punct(t, ";")) {
                take();
                continue;
            }
            body.push_back(parse_stmt());
        }
        take();
        return body;
    }

    void end_simple_stmt() {
        if (is_punct(peek(), ";")) {
            take();
            return;
        }
        if (!is_punct(peek(), "}")) throw error_at(peek(), "expected ';' but found " + describe(peek()));
    }

    Stmt parse_stmt() {
        const Token start = peek();
        Stmt stmt;
        stmt.loc = start.loc;
        if (start.kind == Tok::Ident) {
            if (start.text == "if") {
                stmt.node = parse_if();
                return stmt;
            }
            if (start.text == "unroll") {
                take();
                expect("(");
                const Token count = peek();
                if (count.kind != Tok::Int) throw error_at(count, "unroll count must be an integer literal");
                take();
                if (count.int_value == 0) throw error_at(count, "unroll count must be positive");
                expect(")");
                stmt.node = Unroll{count.int_value, parse_block()};
                return stmt;
            }
            if ((start.text == "assume" || start.text == "assert") && is_punct(peek(1), "(")) {
                take();
                expect("(");
                Expr cond = parse_expr();
                expect(")");
                end_simple_stmt();
                if (start.text == "assume") {
                    stmt.node = Assume{std::move(cond)};
                } else {
                    stmt.node = Assert{std::move(cond)};
                }
                return stmt;
            }
            if (start.text == "printf" && is_punct(peek(1), "(")) {
                take();
                expect("(");
                if (peek().kind != Tok::String) throw error_at(peek(), "printf requires a format string");
                Printf p{take().text, {}};
                while (is_punct(peek(), ",")) {
                    take();
                    p.args.push_back(parse_expr());
                }
                expect(")");
                end_simple_stmt();
                stmt.node = std::move(p);
                return stmt;
            }
            if (start.text == "delete" && is_punct(peek(1), "(")) {
                take();
                expect("(");
                if (peek().kind != Tok::Map) throw error_at(peek(), "delete requires a map argument");
                Expr target = parse_primary();
                auto& access = std::get<MapAccess>(target.node);
                expect(")");
                end_simple_stmt();
                stmt.node = Delete{access.name, std::move(access.keys)};
                return stmt;
            }
        }
        if (start.kind == Tok::Scratch && is_punct(peek(1), "=")) {
            take();
            take();
            Expr value = parse_expr();
            end_simple_stmt();
            stmt.node = Assign{start.text, std::move(value)};
            return stmt;
        }

        Expr e = parse_expr();
        if (is_punct(peek(), "=")) {
            const Token eq = take();
            if (auto* access = std::get_if<MapAccess>(&e.node)) {
                Expr value = parse_expr();
                end_simple_stmt();
                stmt.node = MapAssign{access->name, std::move(access->keys), std::move(value)};
                return stmt;
            }
            if (std::holds_alternative<FieldChain>(e.node)) {
                Expr value = parse_expr();
                end_simple_stmt();
                stmt.node = FieldAssign{std::move(e), std::move(value)};
                return stmt;
            }
            throw error_at(eq, "invalid assignment target");
        }
        end_simple_stmt();
        stmt.node = ExprStmt{std::move(e)};
        return stmt;
    }

    If parse_if() {
        take();
        expect("(");
        If node{parse_expr(), {}, {}, false};
        expect(")");
        node.then_body = parse_block();
        if (is_ident(peek(), "else")) {
            take();
            node.has_else = true;
            if (is_ident(peek(), "if")) {
                Stmt nested;
                nested.loc = peek().loc;
                nested.node = parse_if();
                node.else_body.push_back(std::move(nested));
            } else {
                node.else_body = parse_block();
            }
        }
        return node;
    }

    Expr parse_expr(int min_prec = 1) {
        Expr lhs = parse_unary();
        for (;;) {
            const Token& op = peek();
            if (op.kind != Tok::Punct) break;
            int prec = precedence(op.text);
            if (prec == 0 || prec < min_prec) break;
            // A '/' directly followed by '{' closes a predicate.
            if (in_predicate_ && op.text == "/" && is_punct(peek(1), "{")) break;
            Token tok = take();
            Expr rhs = parse_expr(prec + 1);
            Expr combined;
            combined.loc = lhs.loc;
            combined.node = Binary{binary_op(tok.text), std::move(lhs), std::move(rhs)};
            lhs = std::move(combined);
        }
        return lhs;
    }

    bool at_cast() {
        if (!is_punct(peek(), "(")) return false;
        const Token& t = peek(1);
        return t.kind == Tok::Ident && (t.text == "struct" || kIntTypes.contains(t.text));
    }

    std::string parse_type_name() {
        std::string name;
        Token t = take();
        if (t.text == "struct") {
            const Token& tag = peek();
            if (tag.kind != Tok::Ident) throw error_at(tag, "expected struct name");
            name = "struct " + take().text;
        } else {
            name = t.text;
        }
        int stars = 0;
        while (is_punct(peek(), "*")) {
            take();
            ++stars;
        }
        if (stars > 0) name += " " + std::string(stars, '*');
        return name;
    }

    Expr parse_unary() {
        const Token t = peek();
        Expr out;
        out.loc = t.loc;
        if (t.kind == Tok::Punct && (t.text == "!" || t.text == "~" || t.text == "-")) {
            take();
            UnaryOp op = t.text == "!" ? UnaryOp::LogicalNot : t.text == "~" ? UnaryOp::BitNot : UnaryOp::Negate;
            out.node = Unary{op, parse_unary()};
            return out;
        }
        if (at_cast()) {
            take();
            std::string type = parse_type_name();
            expect(")");
            out.node = Cast{std::move(type), parse_unary()};
            return out;
        }
        return parse_postfix(parse_primary());
    }

    Expr parse_postfix(Expr base) {
        for (;;) {
            const Token& t = peek();
            bool arrow = is_punct(t, "->");
            bool dot = is_punct(t, ".");
            if (!arrow && !dot) return base;
            if (dot && !std::holds_alternative<FieldChain>(base.node)) {
                throw error_at(t, "'.' field access is only allowed after '->' or on args");
            }
            take();
            const Token& name = peek();
            if (name.kind != Tok::Ident) throw error_at(name, "expected field name");
            FieldAccess field{take().text, arrow};
            if (auto* chain = std::get_if<FieldChain>(&base.node)) {
                chain->fields.push_back(std::move(field));
            } else {
                Expr chained;
                chained.loc = base.loc;
                chained.node = FieldChain{std::move(base), {std::move(field)}};
                base = std::move(chained);
            }
        }
    }

    std::vector<Expr> parse_args(std::string_view close) {
        std::vector<Expr> args;
        if (is_punct(peek(), close)) {
            take();
            return args;
        }
        for (;;) {
            args.push_back(parse_expr());
            if (is_punct(peek(), ",")) {
                take();
                continue;
            }
            expect(close);
            return args;
        }
    }

    Expr parse_primary() {
        const Token t = take();
        Expr out;
        out.loc = t.loc;
        switch (t.kind) {
            case Tok::Int:
                out.node = IntLit{t.int_value, 64, t.hex};
                return out;
            case Tok::String:
                out.node = StrLit{t.text};
                return out;
            case Tok::Scratch:
                out.node = ScratchVar{t.text};
                return out;
            case Tok::Map: {
                MapAccess access{t.text, {}};
                if (is_punct(peek(), "[")) {
                    take();
                    access.keys = parse_args("]");
                    if (access.keys.empty()) throw error_at(t, "map key list is empty");
                }
                out.node = std::move(access);
                return out;
            }
            case Tok::Ident: {
                if (is_punct(peek(), "(")) {
                    if (!kCalls.contains(t.text)) throw error_at(t, "unsupported function '" + t.text + "'");
                    take();
                    out.node = Call{t.text, parse_args(")")};
                    return out;
                }
                if (t.text == "args") {
                    const Token& sep = peek();
                    if (!is_punct(sep, ".") && !is_punct(sep, "->")) throw error_at(sep, "expected '.' after args");
                    take();
                    const Token& field = peek();
                    if (field.kind != Tok::Ident) throw error_at(field, "expected tracepoint field name");
                    out.node = BuiltinVar{"args." + take().text};
                    return out;
                }
                if (kBuiltins.contains(t.text)) {
                    out.node = BuiltinVar{t.text};
                    return out;
                }
                throw error_at(t, "unknown identifier '" + t.text + "'");
            }
            case Tok::Punct:
                if (t.text == "(") {
                    bool saved = in_predicate_;
                    in_predicate_ = false;
                    Expr inner = parse_expr();
                    in_predicate_ = saved;
                    expect(")");
                    return inner;
                }
                throw error_at(t, "unexpected '" + t.text + "'");
            case Tok::End:
                throw error_at(t, "unexpected end of input");
        }
        throw error_at(t, "unexpected token");
    }

    Lexer lex_;
    std::vector<Token> lookahead_;
    bool in_predicate_ = false;
};

}  // namespace

Program parse(std::string_view source) {
    Parser parser(source);
    return parser.parse_program();
}

Expr parse_expression(std::string_view source) {
    Parser parser(source);
    return parser.parse_standalone_expr();
}

}  // namespace nl2bpf::btparse
