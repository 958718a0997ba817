#include "nl2bpf/symexec/term.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace nl2bpf::symexec {

BitValue mask_of(unsigned width) {
    if (width == 0) return 1;
    if (width >= 128) return ~BitValue{0};
    return (BitValue{1} << width) - 1;
}

BitValue byte_swap(BitValue value, unsigned width) {
    BitValue out = 0;
    for (unsigned i = 0; i < width / 8; ++i) {
        BitValue byte = (value >> (8 * i)) & 0xff;
        out |= byte << (width - 8 * (i + 1));
    }
    return out;
}

std::string to_hex(BitValue value, unsigned width) {
    static constexpr char kDigits[] = "0123456789abcdef";
    unsigned digits = std::max(1u, (width + 3) / 4);
    std::string out(digits, '0');
    for (unsigned i = 0; i < digits; ++i) {
        out[digits - 1 - i] = kDigits[static_cast<unsigned>((value >> (4 * i)) & 0xf)];
    }
    return "0x" + out;
}

std::string to_decimal(BitValue value) {
    if (value == 0) return "0";
    std::string out;
    while (value > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
        value /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

bool is_predicate(Op op) {
    switch (op) {
        case Op::Eq:
        case Op::Ult:
        case Op::Ule:
        case Op::Slt:
        case Op::Sle:
        case Op::BoolAnd:
        case Op::BoolOr:
        case Op::BoolNot: return true;
        default: return false;
    }
}

std::string_view op_name(Op op) {
    switch (op) {
        case Op::Add: return "bvadd";
        case Op::Sub: return "bvsub";
        case Op::Mul: return "bvmul";
        case Op::UDiv: return "bvudiv";
        case Op::SDiv: return "bvsdiv";
        case Op::URem: return "bvurem";
        case Op::SRem: return "bvsrem";
        case Op::And: return "bvand";
        case Op::Or: return "bvor";
        case Op::Xor: return "bvxor";
        case Op::Shl: return "bvshl";
        case Op::LShr: return "bvlshr";
        case Op::AShr: return "bvashr";
        case Op::Not: return "bvnot";
        case Op::Neg: return "bvneg";
        case Op::ZeroExt: return "zero_extend";
        case Op::SignExt: return "sign_extend";
        case Op::Extract: return "extract";
        case Op::Bswap: return "bswap";
        case Op::Ite: return "ite";
        case Op::Eq: return "=";
        case Op::Ult: return "bvult";
        case Op::Ule: return "bvule";
        case Op::Slt: return "bvslt";
        case Op::Sle: return "bvsle";
        case Op::BoolAnd: return "and";
        case Op::BoolOr: return "or";
        case Op::BoolNot: return "not";
    }
    return "?";
}

namespace {

using Signed = __int128;

Signed to_signed(BitValue v, unsigned width) {
    if (width >= 128) return static_cast<Signed>(v);
    BitValue sign = BitValue{1} << (width - 1);
    if (v & sign) return static_cast<Signed>(v) - static_cast<Signed>(BitValue{1} << width);
    return static_cast<Signed>(v);
}

bool msb(BitValue v, unsigned width) { return ((v >> (width - 1)) & 1) != 0; }

BitValue udiv(BitValue a, BitValue b, unsigned width) { return b == 0 ? mask_of(width) : a / b; }
BitValue urem(BitValue a, BitValue b) { return b == 0 ? a : a % b; }

BitValue negate(BitValue v, unsigned width) { return (~v + 1) & mask_of(width); }

BitValue eval_op(Op op, unsigned width, unsigned param, std::span<const BitValue> v,
                 std::span<const unsigned> widths) {
    const BitValue m = mask_of(width);
    switch (op) {
        case Op::Add: return (v[0] + v[1]) & m;
        case Op::Sub: return (v[0] - v[1]) & m;
        case Op::Mul: return (v[0] * v[1]) & m;
        case Op::UDiv: return udiv(v[0], v[1], width);
        case Op::URem: return urem(v[0], v[1]);
        case Op::SDiv: {
            bool ns = msb(v[0], width), nt = msb(v[1], width);
            BitValue as = ns ? negate(v[0], width) : v[0];
            BitValue at = nt ? negate(v[1], width) : v[1];
            BitValue q = udiv(as, at, width);
            return ns != nt ? negate(q, width) : q;
        }
        case Op::SRem: {
            bool ns = msb(v[0], width), nt = msb(v[1], width);
            BitValue as = ns ? negate(v[0], width) : v[0];
            BitValue at = nt ? negate(v[1], width) : v[1];
            BitValue r = urem(as, at);
            return ns ? negate(r, width) : r;
        }
        case Op::And: return v[0] & v[1];
        case Op::Or: return v[0] | v[1];
        case Op::Xor: return v[0] ^ v[1];
        case Op::Shl: return v[1] >= width ? 0 : (v[0] << static_cast<unsigned>(v[1])) & m;
        case Op::LShr: return v[1] >= width ? 0 : v[0] >> static_cast<unsigned>(v[1]);
        case Op::AShr: {
            bool neg = msb(v[0], width);
            if (v[1] >= width) return neg ? m : 0;
            unsigned s = static_cast<unsigned>(v[1]);
            BitValue shifted = v[0] >> s;
            if (neg && s > 0) shifted |= m & ~(m >> s);
            return shifted;
        }
        case Op::Not: return ~v[0] & m;
        case Op::Neg: return negate(v[0], width);
        case Op::ZeroExt: return v[0];
        case Op::SignExt: {
            unsigned from = widths[0];
            if (msb(v[0], from)) return (v[0] | (mask_of(param) & ~mask_of(from))) & mask_of(param);
            return v[0];
        }
        case Op::Extract: return v[0] & mask_of(param);
        case Op::Bswap: return byte_swap(v[0], width);
        case Op::Ite: return v[0] ? v[1] : v[2];
        case Op::Eq: return v[0] == v[1];
        case Op::Ult: return v[0] < v[1];
        case Op::Ule: return v[0] <= v[1];
        case Op::Slt: return to_signed(v[0], widths[0]) < to_signed(v[1], widths[0]);
        case Op::Sle: return to_signed(v[0], widths[0]) <= to_signed(v[1], widths[0]);
        case Op::BoolAnd: return v[0] && v[1];
        case Op::BoolOr: return v[0] || v[1];
        case Op::BoolNot: return !v[0];
    }
    return 0;
}

unsigned result_width(Op op, const std::vector<TermRef>& args, unsigned param) {
    auto require = [&](bool ok, const char* what) {
        if (!ok) throw std::logic_error(std::string("ill-sorted term: ") + what + " in " + std::string(op_name(op)));
    };
    auto arity = [&](std::size_t n) { require(args.size() == n, "arity"); };
    switch (op) {
        case Op::Add: case Op::Sub: case Op::Mul: case Op::UDiv: case Op::SDiv: case Op::URem:
        case Op::SRem: case Op::And: case Op::Or: case Op::Xor: case Op::Shl: case Op::LShr:
        case Op::AShr:
            arity(2);
            require(args[0]->width > 0 && args[0]->width == args[1]->width, "operand widths");
            return args[0]->width;
        case Op::Not: case Op::Neg:
            arity(1);
            require(args[0]->width > 0, "bit-vector operand");
            return args[0]->width;
        case Op::ZeroExt: case Op::SignExt:
            arity(1);
            require(args[0]->width > 0 && param >= args[0]->width && param <= kMaxWidth, "extension width");
            return param;
        case Op::Extract:
            arity(1);
            require(param > 0 && param <= args[0]->width, "extract width");
            return param;
        case Op::Bswap:
            arity(1);
            require(args[0]->width > 0 && args[0]->width % 8 == 0, "byte-multiple width");
            return args[0]->width;
        case Op::Ite:
            arity(3);
            require(args[0]->is_bool() && args[1]->width == args[2]->width, "ite sorts");
            return args[1]->width;
        case Op::Eq:
            arity(2);
            require(args[0]->width == args[1]->width, "operand widths");
            return 0;
        case Op::Ult: case Op::Ule: case Op::Slt: case Op::Sle:
            arity(2);
            require(args[0]->width > 0 && args[0]->width == args[1]->width, "operand widths");
            return 0;
        case Op::BoolAnd: case Op::BoolOr:
            arity(2);
            require(args[0]->is_bool() && args[1]->is_bool(), "Boolean operands");
            return 0;
        case Op::BoolNot:
            arity(1);
            require(args[0]->is_bool(), "Boolean operand");
            return 0;
    }
    return 0;
}

}  // namespace

TermRef TermFactory::intern(Term node) {
    std::vector<uint32_t> ids;
    ids.reserve(node.args.size());
    for (TermRef a : node.args) ids.push_back(a->id);
    Key key{static_cast<uint8_t>(node.kind), static_cast<uint8_t>(node.op), node.width,
            static_cast<uint64_t>(node.value), static_cast<uint64_t>(node.value >> 64), node.name, std::move(ids)};
    auto it = table_.find(key);
    if (it != table_.end()) return it->second;
    node.id = static_cast<uint32_t>(nodes_.size());
    nodes_.push_back(std::move(node));
    TermRef ref = &nodes_.back();
    table_.emplace(std::move(key), ref);
    if (ref->kind == TermKind::Symbol) symbols_.push_back(ref);
    return ref;
}

TermRef TermFactory::constant(BitValue value, unsigned width) {
    if (width > kMaxWidth) throw std::logic_error("width exceeds 128 bits");
    Term t;
    t.kind = TermKind::Const;
    t.width = width;
    t.value = value & mask_of(width);
    return intern(std::move(t));
}

TermRef TermFactory::boolean(bool value) { return constant(value ? 1 : 0, 0); }

TermRef TermFactory::symbol(const std::string& name, unsigned width) {
    for (TermRef s : symbols_) {
        if (s->name == name && s->width != width) {
            throw std::logic_error("symbol '" + name + "' redeclared with a different width");
        }
    }
    Term t;
    t.kind = TermKind::Symbol;
    t.width = width;
    t.name = name;
    return intern(std::move(t));
}

TermRef TermFactory::apply(const std::string& function, std::vector<TermRef> args, unsigned width) {
    if (args.empty()) return symbol(function, width);
    Term t;
    t.kind = TermKind::Apply;
    t.width = width;
    t.name = function;
    t.args = std::move(args);
    return intern(std::move(t));
}

TermRef TermFactory::make(Op op, std::vector<TermRef> args, unsigned param) {
    const unsigned width = result_width(op, args, param);

    bool all_const = std::all_of(args.begin(), args.end(), [](TermRef a) { return a->is_const(); });
    if (all_const) {
        std::vector<BitValue> values;
        std::vector<unsigned> widths;
        for (TermRef a : args) {
            values.push_back(a->value);
            widths.push_back(a->width);
        }
        return constant(eval_op(op, width, param, values, widths), width);
    }

    switch (op) {
        case Op::Add:
        case Op::Mul:
        case Op::And:
        case Op::Or:
        case Op::Xor:
        case Op::Eq:
        case Op::BoolAnd:
        case Op::BoolOr:
            if (args[0]->id > args[1]->id) std::swap(args[0], args[1]);
            break;
        default:
            break;
    }

    switch (op) {
        case Op::Ite:
            if (args[0]->is_const()) return args[0]->value ? args[1] : args[2];
            if (args[1] == args[2]) return args[1];
            break;
        case Op::Eq:
            if (args[0] == args[1]) return boolean(true);
            break;
        case Op::BoolAnd:
            for (int i = 0; i < 2; ++i) {
                if (args[i]->is_const()) return args[i]->value ? args[1 - i] : boolean(false);
            }
            if (args[0] == args[1]) return args[0];
            break;
        case Op::BoolOr:
            for (int i = 0; i < 2; ++i) {
                if (args[i]->is_const()) return args[i]->value ? boolean(true) : args[1 - i];
            }
            if (args[0] == args[1]) return args[0];
            break;
        case Op::BoolNot:
            if (args[0]->kind == TermKind::Op && args[0]->op == Op::BoolNot) return args[0]->args[0];
            break;
        case Op::ZeroExt:
        case Op::SignExt:
        case Op::Extract:
            if (param == args[0]->width) return args[0];
            break;
        default:
            break;
    }

    Term t;
    t.kind = TermKind::Op;
    t.op = op;
    t.width = width;
    t.value = (op == Op::ZeroExt || op == Op::SignExt || op == Op::Extract) ? param : 0;
    t.args = std::move(args);
    return intern(std::move(t));
}

TermRef TermFactory::conjunction(std::span<const TermRef> terms) {
    TermRef out = boolean(true);
    for (TermRef t : terms) out = bool_and(out, t);
    return out;
}

BitValue evaluate(TermRef root, const Assignment& assignment) {
    std::unordered_map<TermRef, BitValue> memo;
    TermRef roots[] = {root};
    for (TermRef t : topological_order(roots)) {
        BitValue v = 0;
        switch (t->kind) {
            case TermKind::Const: v = t->value; break;
            case TermKind::Symbol:
            case TermKind::Apply: v = assignment.get(t) & mask_of(t->width); break;
            case TermKind::Op: {
                std::vector<BitValue> values;
                std::vector<unsigned> widths;
                for (TermRef a : t->args) {
                    values.push_back(memo.at(a));
                    widths.push_back(a->width);
                }
                unsigned param = static_cast<unsigned>(t->value);
                v = eval_op(t->op, t->width, param, values, widths);
                break;
            }
        }
        memo[t] = v;
    }
    return memo.at(root);
}

BitValue evaluate_op(TermRef node, std::span<const BitValue> arg_values) {
    unsigned widths[3] = {0, 0, 0};
    for (std::size_t i = 0; i < node->args.size() && i < 3; ++i) widths[i] = node->args[i]->width;
    return eval_op(node->op, node->width, static_cast<unsigned>(node->value), arg_values,
                   std::span<const unsigned>(widths, node->args.size()));
}

std::vector<TermRef> topological_order(std::span<const TermRef> roots) {
    std::vector<TermRef> order;
    std::unordered_set<TermRef> seen;
    std::vector<std::pair<TermRef, std::size_t>> stack;
    for (TermRef r : roots) {
        if (!seen.insert(r).second) continue;
        stack.emplace_back(r, 0);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->args.size()) {
                TermRef child = node->args[next++];
                if (seen.insert(child).second) stack.emplace_back(child, 0);
                continue;
            }
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

std::vector<TermRef> collect_leaves(std::span<const TermRef> roots) {
    std::vector<TermRef> leaves;
    for (TermRef t : topological_order(roots)) {
        if (t->kind == TermKind::Symbol || t->kind == TermKind::Apply) leaves.push_back(t);
    }
    return leaves;
}

Ackermannized ackermannize(TermFactory& factory, std::span<const TermRef> constraints) {
    Ackermannized out;
    std::unordered_map<TermRef, TermRef> rebuilt;
    struct Instance {
        TermRef app;
        std::vector<TermRef> args;
        TermRef replacement;
    };
    std::vector<Instance> instances;

    for (TermRef t : topological_order(constraints)) {
        TermRef mapped = t;
        if (t->kind == TermKind::Apply || t->kind == TermKind::Op) {
            std::vector<TermRef> args;
            for (TermRef a : t->args) args.push_back(rebuilt.at(a));
            if (t->kind == TermKind::Apply) {
                mapped = factory.symbol("uf!" + std::to_string(t->id), t->width);
                instances.push_back({t, args, mapped});
                out.applications.emplace_back(t, mapped);
            } else {
                mapped = factory.make(t->op, std::move(args), static_cast<unsigned>(t->value));
            }
        }
        rebuilt[t] = mapped;
    }
    for (TermRef c : constraints) out.constraints.push_back(rebuilt.at(c));

    for (std::size_t i = 0; i < instances.size(); ++i) {
        for (std::size_t j = i + 1; j < instances.size(); ++j) {
            const auto& a = instances[i];
            const auto& b = instances[j];
            if (a.app->name != b.app->name || a.app->width != b.app->width || a.args.size() != b.args.size()) continue;
            bool same_signature = true;
            for (std::size_t k = 0; k < a.args.size(); ++k) same_signature &= a.args[k]->width == b.args[k]->width;
            if (!same_signature) continue;
            TermRef args_equal = factory.boolean(true);
            for (std::size_t k = 0; k < a.args.size(); ++k) {
                args_equal = factory.bool_and(args_equal, factory.eq(a.args[k], b.args[k]));
            }
            out.constraints.push_back(
                factory.bool_or(factory.bool_not(args_equal), factory.eq(a.replacement, b.replacement)));
        }
    }
    return out;
}

std::string smtlib_sort(unsigned width) {
    return width == 0 ? "Bool" : "(_ BitVec " + std::to_string(width) + ")";
}

std::string smtlib_symbol(const std::string& name) {
    std::string clean;
    for (char c : name) clean.push_back(c == '|' || c == '\\' ? '_' : c);
    return "|" + clean + "|";
}

std::string to_smtlib_term(TermRef t) {
    switch (t->kind) {
        case TermKind::Const:
            if (t->is_bool()) return t->value ? "true" : "false";
            return "(_ bv" + to_decimal(t->value) + " " + std::to_string(t->width) + ")";
        case TermKind::Symbol: return smtlib_symbol(t->name);
        case TermKind::Apply: {
            std::string out = "(" + smtlib_symbol(t->name);
            for (TermRef a : t->args) out += " " + to_smtlib_term(a);
            return out + ")";
        }
        case TermKind::Op: break;
    }
    const unsigned param = static_cast<unsigned>(t->value);
    std::string head;
    switch (t->op) {
        case Op::ZeroExt:
            head = "(_ zero_extend " + std::to_string(param - t->args[0]->width) + ")";
            break;
        case Op::SignExt:
            head = "(_ sign_extend " + std::to_string(param - t->args[0]->width) + ")";
            break;
        case Op::Extract:
            head = "(_ extract " + std::to_string(param - 1) + " 0)";
            break;
        case Op::Bswap: {
            const std::string inner = to_smtlib_term(t->args[0]);
            const unsigned bytes = t->width / 8;
            if (bytes == 1) return inner;
            std::string out = "(concat";
            for (unsigned i = 0; i < bytes; ++i) {
                out += " ((_ extract " + std::to_string(8 * i + 7) + " " + std::to_string(8 * i) + ") " + inner + ")";
            }
            return out + ")";
        }
        default:
            head = std::string(op_name(t->op));
    }
    std::string out = "(" + head;
    for (TermRef a : t->args) out += " " + to_smtlib_term(a);
    return out + ")";
}

}  // namespace nl2bpf::symexec
