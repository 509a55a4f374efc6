#pragma once

// Driver expressions. Grammar (see docs/generator-grammar.md):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := number | variable | func '(' args ')' | '(' expr ')' | '|' expr '|'
//
// Variables: t, y1..yn, z1..zn (d-vector blocks), y and z (whole vectors), and
// z<i>_<j> coordinates when enabled. Blocks may only appear under norm2(.) and
// |.|; everything else is scalar.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qbsde/conditions.hpp"
#include "qbsde/error.hpp"

namespace qbsde {

struct Signature {
    int n = 2;  // components
    int d = 1;  // Brownian dimension
    bool coordinate_access = false;
};

enum class NodeKind { number, time, y_comp, y_all, z_block, z_all, z_coord, neg, add, sub, mul, div, call, norm };

struct ExprNode {
    NodeKind kind = NodeKind::number;
    double value = 0.0;
    int index = 0;  // component (1-based) for y_comp, z_block, z_coord
    int coord = 0;  // coordinate (1-based) for z_coord
    std::string fn;
    std::vector<std::shared_ptr<const ExprNode>> args;

    bool is_block() const {
        return kind == NodeKind::y_all || kind == NodeKind::z_block || kind == NodeKind::z_all;
    }

    friend bool operator==(const ExprNode& a, const ExprNode& b) {
        if (a.kind != b.kind || a.index != b.index || a.coord != b.coord || a.fn != b.fn ||
            a.args.size() != b.args.size())
            return false;
        if (a.kind == NodeKind::number && !(a.value == b.value || (std::isnan(a.value) && std::isnan(b.value))))
            return false;
        for (std::size_t i = 0; i < a.args.size(); ++i)
            if (!(*a.args[i] == *b.args[i])) return false;
        return true;
    }
};

using ExprPtr = std::shared_ptr<const ExprNode>;

namespace detail {

struct FunctionInfo {
    int arity;
    bool block_arg;  // argument must be a z block
};

inline const std::map<std::string, FunctionInfo, std::less<>>& functions() {
    static const std::map<std::string, FunctionInfo, std::less<>> table{
        {"abs", {1, false}}, {"sq", {1, false}},  {"norm2", {1, true}}, {"exp", {1, false}},
        {"log", {1, false}}, {"min", {2, false}}, {"max", {2, false}},
    };
    return table;
}

class Parser {
public:
    Parser(std::string_view text, const Signature& sig) : s_(text), sig_(sig) {}

    ExprPtr parse() {
        auto e = expr();
        skip();
        if (pos_ != s_.size()) fail(parse_error::kind::syntax, "unexpected '" + std::string(1, s_[pos_]) + "'",
                                    {"operator", "end of input"});
        require_scalar(e, 0);
        return e;
    }

private:
    std::string_view s_;
    Signature sig_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(parse_error::kind k, const std::string& msg, std::vector<std::string> expected = {},
                           std::optional<std::size_t> at = std::nullopt) {
        throw parse_error(k, at.value_or(pos_), msg, std::move(expected));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool peek(char c) {
        skip();
        return pos_ < s_.size() && s_[pos_] == c;
    }

    void expect(char c) {
        if (!peek(c)) {
            const std::string got = pos_ < s_.size() ? "'" + std::string(1, s_[pos_]) + "'" : "end of input";
            fail(parse_error::kind::syntax, "expected '" + std::string(1, c) + "', got " + got,
                 {std::string(1, c)});
        }
        ++pos_;
    }

    static ExprPtr make(NodeKind k, std::vector<ExprPtr> args = {}) {
        auto n = std::make_shared<ExprNode>();
        n->kind = k;
        n->args = std::move(args);
        return n;
    }

    void require_scalar(const ExprPtr& e, std::size_t at) {
        if (e->is_block())
            fail(parse_error::kind::type, "vector operand used as a scalar; wrap it in norm2(.) or |.|", {}, at);
    }

    ExprPtr expr() {
        skip();
        std::size_t at = pos_;
        auto left = term();
        for (;;) {
            skip();
            if (pos_ >= s_.size() || (s_[pos_] != '+' && s_[pos_] != '-')) return left;
            const char op = s_[pos_++];
            require_scalar(left, at);
            skip();
            at = pos_;
            auto right = term();
            require_scalar(right, at);
            left = make(op == '+' ? NodeKind::add : NodeKind::sub, {left, right});
        }
    }

    ExprPtr term() {
        skip();
        std::size_t at = pos_;
        auto left = unary();
        for (;;) {
            skip();
            if (pos_ >= s_.size() || (s_[pos_] != '*' && s_[pos_] != '/')) return left;
            const char op = s_[pos_++];
            require_scalar(left, at);
            skip();
            at = pos_;
            auto right = unary();
            require_scalar(right, at);
            left = make(op == '*' ? NodeKind::mul : NodeKind::div, {left, right});
        }
    }

    ExprPtr unary() {
        skip();
        if (peek('-')) {
            ++pos_;
            skip();
            const std::size_t at = pos_;
            auto e = unary();
            require_scalar(e, at);
            return make(NodeKind::neg, {e});
        }
        return primary();
    }

    ExprPtr primary() {
        skip();
        if (pos_ >= s_.size())
            fail(parse_error::kind::syntax, "unexpected end of input", {"number", "identifier", "(", "|", "-"});
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto e = expr();
            expect(')');
            return e;
        }
        if (c == '|') {
            ++pos_;
            auto e = expr();
            expect('|');
            return make(NodeKind::norm, {e});
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(parse_error::kind::syntax, "unexpected '" + std::string(1, c) + "'",
             {"number", "identifier", "(", "|", "-"});
    }

    ExprPtr number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
            if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
                pos_ = p;
                while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            }
        }
        const std::string text(s_.substr(start, pos_ - start));
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size() || text == ".")
            fail(parse_error::kind::syntax, "malformed number '" + text + "'", {"number"}, start);
        if (!std::isfinite(v)) fail(parse_error::kind::syntax, "number '" + text + "' overflows", {"number"}, start);
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::number;
        n->value = v;
        return n;
    }

    static std::optional<int> parse_index(std::string_view digits) {
        if (digits.empty() || digits.size() > 3 || digits[0] == '0') return std::nullopt;
        int v = 0;
        for (char ch : digits) {
            if (!std::isdigit(static_cast<unsigned char>(ch))) return std::nullopt;
            v = v * 10 + (ch - '0');
        }
        return v;
    }

    ExprPtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        const std::string name(s_.substr(start, pos_ - start));

        const auto& fns = functions();
        if (auto f = fns.find(name); f != fns.end()) return call(name, f->second, start);

        auto n = std::make_shared<ExprNode>();
        if (name == "t") {
            n->kind = NodeKind::time;
            return n;
        }
        if (name == "y") {
            n->kind = NodeKind::y_all;
            return n;
        }
        if (name == "z") {
            n->kind = NodeKind::z_all;
            return n;
        }
        if (name.size() >= 2 && (name[0] == 'y' || name[0] == 'z')) {
            const std::string_view rest = std::string_view(name).substr(1);
            const auto us = rest.find('_');
            const auto comp = parse_index(rest.substr(0, us));
            if (comp && *comp <= sig_.n) {
                if (us == std::string_view::npos) {
                    n->kind = name[0] == 'y' ? NodeKind::y_comp : NodeKind::z_block;
                    n->index = *comp;
                    return n;
                }
                const auto coord = parse_index(rest.substr(us + 1));
                if (name[0] == 'z' && coord && *coord <= sig_.d && sig_.coordinate_access) {
                    n->kind = NodeKind::z_coord;
                    n->index = *comp;
                    n->coord = *coord;
                    return n;
                }
                if (name[0] == 'z' && coord && !sig_.coordinate_access)
                    fail(parse_error::kind::unknown_identifier,
                         "coordinate access '" + name + "' is disabled; use norm2(z" + std::to_string(*comp) +
                             ") or |z" + std::to_string(*comp) + "|",
                         {}, start);
            }
        }
        fail(parse_error::kind::unknown_identifier, "unknown identifier '" + name + "'", expected_names(), start);
    }

    std::vector<std::string> expected_names() const {
        std::vector<std::string> v{"t", "y", "z"};
        for (int i = 1; i <= sig_.n; ++i) v.push_back("y" + std::to_string(i));
        for (int i = 1; i <= sig_.n; ++i) v.push_back("z" + std::to_string(i));
        for (const auto& [name, info] : functions()) v.push_back(name);
        return v;
    }

    ExprPtr call(const std::string& name, const FunctionInfo& info, std::size_t start) {
        expect('(');
        std::vector<ExprPtr> args;
        std::vector<std::size_t> positions;
        if (!peek(')')) {
            for (;;) {
                skip();
                positions.push_back(pos_);
                args.push_back(expr());
                if (!peek(',')) break;
                ++pos_;
            }
        }
        expect(')');
        if (int(args.size()) != info.arity)
            fail(parse_error::kind::arity,
                 name + " takes " + std::to_string(info.arity) + " argument(s), got " + std::to_string(args.size()),
                 {}, start);
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (info.block_arg) {
                if (args[i]->kind != NodeKind::z_block && args[i]->kind != NodeKind::z_all)
                    fail(parse_error::kind::type, name + " applies only to z blocks", {"z1", "z"}, positions[i]);
            } else {
                require_scalar(args[i], positions[i]);
            }
        }
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::call;
        n->fn = name;
        n->args = std::move(args);
        return n;
    }
};

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void print(const ExprNode& e, std::string& out) {
    switch (e.kind) {
        case NodeKind::number: out += format_number(e.value); return;
        case NodeKind::time: out += "t"; return;
        case NodeKind::y_comp: out += "y" + std::to_string(e.index); return;
        case NodeKind::y_all: out += "y"; return;
        case NodeKind::z_block: out += "z" + std::to_string(e.index); return;
        case NodeKind::z_all: out += "z"; return;
        case NodeKind::z_coord: out += "z" + std::to_string(e.index) + "_" + std::to_string(e.coord); return;
        case NodeKind::neg:
            out += "(-";
            print(*e.args[0], out);
            out += ")";
            return;
        case NodeKind::norm:
            out += "|";
            print(*e.args[0], out);
            out += "|";
            return;
        case NodeKind::call:
            out += e.fn + "(";
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                if (i) out += ", ";
                print(*e.args[i], out);
            }
            out += ")";
            return;
        default: {
            const char* op = e.kind == NodeKind::add ? " + " : e.kind == NodeKind::sub ? " - "
                             : e.kind == NodeKind::mul ? " * " : " / ";
            out += "(";
            print(*e.args[0], out);
            out += op;
            print(*e.args[1], out);
            out += ")";
        }
    }
}

}  // namespace detail

struct EvalPoint {
    double t = 0.0;
    std::span<const double> y;  // n values
    std::span<const double> z;  // n*d values, block i at [i*d, (i+1)*d)
};

class Generator {
public:
    Generator() = default;
    Generator(ExprPtr root, Signature sig, std::string source = {})
        : root_(std::move(root)), sig_(sig), source_(std::move(source)) {}

    const ExprNode& root() const { return *root_; }
    const ExprPtr& root_ptr() const { return root_; }
    const Signature& signature() const { return sig_; }
    const std::string& source() const { return source_; }
    explicit operator bool() const { return bool(root_); }

    double eval(const EvalPoint& p) const {
        if (p.y.size() != std::size_t(sig_.n) || p.z.size() != std::size_t(sig_.n) * std::size_t(sig_.d))
            throw invalid_parameter("generator evaluated with y of size " + std::to_string(p.y.size()) +
                                    " and z of size " + std::to_string(p.z.size()) + "; signature is n=" +
                                    std::to_string(sig_.n) + ", d=" + std::to_string(sig_.d));
        return eval_node(*root_, p);
    }

    double eval(double t, std::span<const double> y, std::span<const double> z) const { return eval({t, y, z}); }

    friend bool operator==(const Generator& a, const Generator& b) {
        return a.sig_.n == b.sig_.n && a.sig_.d == b.sig_.d && *a.root_ == *b.root_;
    }

private:
    ExprPtr root_;
    Signature sig_;
    std::string source_;

    double block_norm2(const ExprNode& e, const EvalPoint& p) const {
        std::span<const double> v;
        if (e.kind == NodeKind::z_block)
            v = p.z.subspan(std::size_t(e.index - 1) * sig_.d, std::size_t(sig_.d));
        else if (e.kind == NodeKind::z_all)
            v = p.z;
        else
            v = p.y;
        double s = 0.0;
        for (double c : v) s += c * c;
        return s;
    }

    double eval_node(const ExprNode& e, const EvalPoint& p) const {
        switch (e.kind) {
            case NodeKind::number: return e.value;
            case NodeKind::time: return p.t;
            case NodeKind::y_comp: return p.y[e.index - 1];
            case NodeKind::z_coord: return p.z[std::size_t(e.index - 1) * sig_.d + (e.coord - 1)];
            case NodeKind::neg: return -eval_node(*e.args[0], p);
            case NodeKind::add: return eval_node(*e.args[0], p) + eval_node(*e.args[1], p);
            case NodeKind::sub: return eval_node(*e.args[0], p) - eval_node(*e.args[1], p);
            case NodeKind::mul: return eval_node(*e.args[0], p) * eval_node(*e.args[1], p);
            case NodeKind::div: {
                const double den = eval_node(*e.args[1], p);
                if (den == 0.0) throw eval_error("division by zero");
                return eval_node(*e.args[0], p) / den;
            }
            case NodeKind::norm: {
                const auto& a = *e.args[0];
                if (a.is_block()) return std::sqrt(block_norm2(a, p));
                return std::abs(eval_node(a, p));
            }
            case NodeKind::call: {
                if (e.fn == "norm2") return block_norm2(*e.args[0], p);
                const double a = eval_node(*e.args[0], p);
                if (e.fn == "abs") return std::abs(a);
                if (e.fn == "sq") return a * a;
                if (e.fn == "exp") return std::exp(a);
                if (e.fn == "log") {
                    if (!(a > 0.0)) throw eval_error("log of non-positive value " + detail::format_number(a));
                    return std::log(a);
                }
                const double b = eval_node(*e.args[1], p);
                return e.fn == "min" ? std::min(a, b) : std::max(a, b);
            }
            default: throw eval_error("vector operand evaluated as a scalar");
        }
    }
};

inline Generator parse_generator(std::string_view text, const Signature& sig = {}) {
    if (sig.n < 1 || sig.d < 1) throw invalid_parameter("generator signature needs n >= 1 and d >= 1");
    detail::Parser p(text, sig);
    return Generator(p.parse(), sig, std::string(text));
}

/// Fully parenthesized form; numbers carry 17 significant digits so that
/// parse(pretty_print(g)) reproduces g exactly.
inline std::string pretty_print(const Generator& g) {
    std::string out;
    detail::print(g.root(), out);
    return out;
}

inline std::string pretty_print(const ExprNode& e) {
    std::string out;
    detail::print(e, out);
    return out;
}

/// Names of referenced variables: "t", "y<i>", "z<i>" (whole-vector symbols
/// expand to every component).
inline std::set<std::string> referenced_variables(const Generator& g) {
    std::set<std::string> out;
    const int n = g.signature().n;
    auto walk = [&](auto&& self, const ExprNode& e) -> void {
        switch (e.kind) {
            case NodeKind::time: out.insert("t"); break;
            case NodeKind::y_comp: out.insert("y" + std::to_string(e.index)); break;
            case NodeKind::z_block:
            case NodeKind::z_coord: out.insert("z" + std::to_string(e.index)); break;
            case NodeKind::y_all:
                for (int i = 1; i <= n; ++i) out.insert("y" + std::to_string(i));
                break;
            case NodeKind::z_all:
                for (int i = 1; i <= n; ++i) out.insert("z" + std::to_string(i));
                break;
            default: break;
        }
        for (const auto& a : e.args) self(self, *a);
    };
    walk(walk, g.root());
    return out;
}

inline bool depends_on_y(const Generator& g) {
    for (const auto& v : referenced_variables(g))
        if (v[0] == 'y') return true;
    return false;
}

struct SeparationVerdict {
    bool passed = false;
    std::vector<std::string> offending;
};

/// f^i may reference only t and z_i.
inline SeparationVerdict validate_separation(const Generator& f, const Generator* h, int i) {
    SeparationVerdict v;
    const std::string own = "z" + std::to_string(i);
    for (const auto& name : referenced_variables(f))
        if (name != "t" && name != own) v.offending.push_back(name);
    (void)h;  // h^i may reference every variable of the signature
    v.passed = v.offending.empty();
    return v;
}

/// A joint driver g^i(t, y, z) may reference z only through z_i.
inline SeparationVerdict validate_h5(const Generator& g, int i) {
    SeparationVerdict v;
    const std::string own = "z" + std::to_string(i);
    for (const auto& name : referenced_variables(g))
        if (name[0] == 'z' && name != own) v.offending.push_back(name);
    v.passed = v.offending.empty();
    return v;
}

/// gamma if the expression is gamma * norm2(z_i) (in any of the forms
/// c*norm2(zi), norm2(zi)*c, norm2(zi)/c, norm2(zi)).
inline std::optional<double> match_pure_quadratic(const Generator& g, int i) {
    auto is_norm2 = [i](const ExprNode& e) {
        return e.kind == NodeKind::call && e.fn == "norm2" && e.args[0]->kind == NodeKind::z_block &&
               e.args[0]->index == i;
    };
    const auto& r = g.root();
    if (is_norm2(r)) return 1.0;
    if (r.kind == NodeKind::mul) {
        if (r.args[0]->kind == NodeKind::number && is_norm2(*r.args[1])) return r.args[0]->value;
        if (r.args[1]->kind == NodeKind::number && is_norm2(*r.args[0])) return r.args[1]->value;
    }
    if (r.kind == NodeKind::div && r.args[1]->kind == NodeKind::number && is_norm2(*r.args[0]) &&
        r.args[1]->value != 0.0)
        return 1.0 / r.args[1]->value;
    return std::nullopt;
}

struct SamplingBox {
    double z_max = 4.0;  // |coordinate| bound for every z coordinate
    double y_max = 4.0;  // |coordinate| bound for every y coordinate
    double T = 1.0;
};

struct CertificateEntry {
    std::string name;
    double claimed = 0.0;
    double estimate = 0.0;
    bool passed = false;
    std::size_t samples = 0;
};

struct CoefficientCertificate {
    int component = 1;
    SamplingBox box;
    int grid = 0;
    std::size_t skipped = 0;  // sample points where evaluation raised
    std::vector<CertificateEntry> entries;

    bool passed() const {
        return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
    }
};

namespace detail {

inline double halton(std::size_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * double(index % std::size_t(base));
        index /= std::size_t(base);
    }
    return r;
}

// Unit design in [-1,1]^D: a tensor grid (per-axis count reduced until at most
// 4096 points) followed by 1000 Halton points.
inline std::vector<std::vector<double>> unit_design(int D, int grid) {
    std::vector<std::vector<double>> pts;
    int g = std::max(2, grid);
    while (g > 2 && std::pow(double(g), D) > 4096.0) --g;
    std::size_t total = 1;
    for (int j = 0; j < D; ++j) total *= std::size_t(g);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<double> p(static_cast<std::size_t>(D));
        std::size_t r = idx;
        for (int j = 0; j < D; ++j) {
            p[j] = -1.0 + 2.0 * double(r % std::size_t(g)) / double(g - 1);
            r /= std::size_t(g);
        }
        pts.push_back(std::move(p));
    }
    static constexpr std::array<int, 12> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    for (std::size_t i = 1; i <= 1000; ++i) {
        std::vector<double> p(static_cast<std::size_t>(D));
        for (int j = 0; j < D; ++j) p[j] = 2.0 * halton(i, primes[std::size_t(j) % primes.size()]) - 1.0;
        pts.push_back(std::move(p));
    }
    return pts;
}

inline double norm(std::span<const double> v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
}

inline double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Multiscale sample set 2^k U, k = -6..6, restricted to the box. The set does
// not depend on the box, so estimates grow with the box.
// ids (optional) receives each kept point's position in the unrestricted set.
inline std::vector<std::vector<double>> scaled_samples(const std::vector<std::vector<double>>& unit,
                                                       const std::vector<double>& limits,
                                                       std::vector<std::size_t>* ids = nullptr) {
    std::vector<std::vector<double>> out;
    std::size_t id = 0;
    for (int k = -6; k <= 6; ++k) {
        const double s = std::ldexp(1.0, k);
        for (const auto& u : unit) {
            std::vector<double> p(u.size());
            bool inside = true;
            for (std::size_t j = 0; j < u.size(); ++j) {
                p[j] = s * u[j];
                inside = inside && std::abs(p[j]) <= limits[j];
            }
            if (inside) {
                out.push_back(std::move(p));
                if (ids) ids->push_back(id);
            }
            ++id;
        }
    }
    return out;
}

struct Pair {
    std::vector<double> a, b;
};

// Neighbours are paired only when adjacent in the unrestricted set, so a larger
// box yields a superset of pairs.
inline std::vector<Pair> sample_pairs(const std::vector<std::vector<double>>& pts,
                                      const std::vector<std::size_t>& ids) {
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i + 1 < pts.size() && ids[i + 1] == ids[i] + 1) pairs.push_back({pts[i], pts[i + 1]});
        std::vector<double> zero(pts[i].size(), 0.0), half(pts[i]);
        for (double& v : half) v *= 0.5;
        pairs.push_back({pts[i], zero});
        pairs.push_back({pts[i], half});
    }
    return pairs;
}

struct Ratio {
    double value = -std::numeric_limits<double>::infinity();
    std::size_t samples = 0;
    void add(double r) {
        value = std::max(value, r);
        ++samples;
    }
    double estimate() const { return samples ? value : 0.0; }
};

}  // namespace detail

/// Sampling-based check of the declared constants of component i:
///   (B2) |f| <= C + gamma |z_i|^2              estimate of gamma
///   (B3) |df| <= theta (1+|z|+|z'|)|dz_i|        estimate of theta
///   (B4) |dh| <= alpha |dy| + vartheta (1+|z|+|z'|)|dz|
///   (B5) |h| <= C + beta |y| + eta |z|^2
/// (B4) and (B5) are reported as utilization ratios (claimed 1) next to the
/// single-coefficient estimates obtained from y-only and z-only perturbations.
inline CoefficientCertificate certify_coefficients(const Generator& f, const Generator* h, const CoeffSet& claimed,
                                                   int component, const SamplingBox& box = {}, int grid = 5) {
    if (component < 1 || component > 2) throw invalid_parameter("certify_coefficients: component must be 1 or 2");
    if (grid < 2) throw invalid_parameter("certify_coefficients: grid must be >= 2");
    if (!(box.z_max > 0.0) || !(box.y_max >= 0.0) || !std::isfinite(box.z_max) || !std::isfinite(box.y_max))
        throw invalid_parameter("certify_coefficients: sampling box must be finite");
    const int i = component - 1;
    const Signature& sig = f.signature();
    const int n = sig.n, d = sig.d;
    CoefficientCertificate cert;
    cert.component = component;
    cert.box = box;
    cert.grid = grid;
    const std::array<double, 3> times{0.0, box.T / 2.0, box.T};
    const double tiny = 1e-300;

    auto within = [](double est, double claim) { return est <= claim * (1.0 + 1e-9); };

    {  // f: only z_i varies; other inputs zero
        std::vector<std::size_t> ids;
        const auto pts =
            detail::scaled_samples(detail::unit_design(d, grid), std::vector<double>(std::size_t(d), box.z_max), &ids);
        std::vector<double> y(static_cast<std::size_t>(n), 0.0), z(std::size_t(n) * d, 0.0);
        auto eval_f = [&](double t, const std::vector<double>& zi) {
            std::copy(zi.begin(), zi.end(), z.begin() + std::ptrdiff_t(i) * d);
            return f.eval(t, y, z);
        };
        detail::Ratio growth, lip;
        for (double t : times) {
            for (const auto& p : pts) {
                try {
                    const double v = std::abs(eval_f(t, p));
                    const double zz = detail::norm(p);
                    if (zz * zz > tiny)
                        growth.add((v - claimed.C) / (zz * zz));
                    else if (v > claimed.C * (1.0 + 1e-9))
                        growth.add(std::numeric_limits<double>::infinity());
                } catch (const eval_error&) {
                    ++cert.skipped;
                }
            }
            for (const auto& pr : detail::sample_pairs(pts, ids)) {
                const double dz = detail::dist(pr.a, pr.b);
                if (dz <= tiny) continue;
                try {
                    const double df = std::abs(eval_f(t, pr.a) - eval_f(t, pr.b));
                    lip.add(df / ((1.0 + detail::norm(pr.a) + detail::norm(pr.b)) * dz));
                } catch (const eval_error&) {
                    ++cert.skipped;
                }
            }
        }
        cert.entries.push_back({"B2 gamma", claimed.gamma[i], growth.estimate(), within(growth.estimate(), claimed.gamma[i]), growth.samples});
        cert.entries.push_back({"B3 theta", claimed.theta[i], lip.estimate(), within(lip.estimate(), claimed.theta[i]), lip.samples});
    }

    if (h && *h) {
        const int D = n + n * d;
        std::vector<double> limits(static_cast<std::size_t>(D), box.z_max);
        for (int j = 0; j < n; ++j) limits[j] = box.y_max;
        std::vector<std::size_t> ids;
        const auto pts = detail::scaled_samples(detail::unit_design(D, grid), limits, &ids);
        auto split = [&](const std::vector<double>& p) {
            return std::pair{std::span<const double>(p.data(), std::size_t(n)),
                             std::span<const double>(p.data() + n, std::size_t(n) * d)};
        };
        auto eval_h = [&](double t, const std::vector<double>& p) {
            auto [y, z] = split(p);
            return h->eval(t, y, z);
        };
        const double a = claimed.alpha[i], vt = claimed.vartheta[i], b = claimed.beta[i], eta = claimed.eta[i];
        detail::Ratio b4, b4_alpha, b4_vartheta, b5;
        for (double t : times) {
            for (const auto& p : pts) {
                try {
                    auto [y, z] = split(p);
                    const double hv = std::abs(eval_h(t, p));
                    const double zz = detail::norm(z);
                    const double cap = claimed.C + b * detail::norm(y) + eta * zz * zz;
                    if (cap > tiny)
                        b5.add(hv / cap);
                    else if (hv > tiny)
                        b5.add(std::numeric_limits<double>::infinity());
                } catch (const eval_error&) {
                    ++cert.skipped;
                }
            }
            auto pairs = detail::sample_pairs(pts, ids);
            // y-only and z-only perturbations isolate alpha and vartheta
            const std::size_t base_pairs = pairs.size();
            for (std::size_t k = 0; k < base_pairs; ++k) {
                {
                    auto q = pairs[k].a;
                    std::copy(pairs[k].b.begin(), pairs[k].b.begin() + n, q.begin());
                    pairs.push_back(detail::Pair{pairs[k].a, q});
                }
                {
                    auto q = pairs[k].a;
                    std::copy(pairs[k].b.begin() + n, pairs[k].b.end(), q.begin() + n);
                    pairs.push_back(detail::Pair{pairs[k].a, q});
                }
            }
            for (const auto& pr : pairs) {
                auto [ya, za] = split(pr.a);
                auto [yb, zb] = split(pr.b);
                const double dy = detail::dist(ya, yb), dz = detail::dist(za, zb);
                if (dy <= tiny && dz <= tiny) continue;
                try {
                    const double dh = std::abs(eval_h(t, pr.a) - eval_h(t, pr.b));
                    const double zfac = (1.0 + detail::norm(za) + detail::norm(zb)) * dz;
                    const double cap = a * dy + vt * zfac;
                    if (cap > tiny)
                        b4.add(dh / cap);
                    else if (dh > tiny)
                        b4.add(std::numeric_limits<double>::infinity());
                    if (dz <= tiny) b4_alpha.add(dh / dy);
                    if (dy <= tiny) b4_vartheta.add(dh / zfac);
                } catch (const eval_error&) {
                    ++cert.skipped;
                }
            }
        }
        cert.entries.push_back({"B4 alpha", a, b4_alpha.estimate(), within(b4_alpha.estimate(), a), b4_alpha.samples});
        cert.entries.push_back({"B4 vartheta", vt, b4_vartheta.estimate(), within(b4_vartheta.estimate(), vt), b4_vartheta.samples});
        cert.entries.push_back({"B4 utilization", 1.0, b4.estimate(), within(b4.estimate(), 1.0), b4.samples});
        cert.entries.push_back({"B5 utilization", 1.0, b5.estimate(), within(b5.estimate(), 1.0), b5.samples});
    }
    return cert;
}

/// (H5) for a joint driver g^i(t, y, z): |g(t,0,0)| <= C and
/// |g(y,z) - g(y',z')| <= beta |y-y'| + theta (1+|z|+|z'|)|z-z'|, sampled like
/// certify_coefficients. Component-wise: each g^i is checked with the shared
/// constants.
inline CoefficientCertificate certify_h5(const Generator& g, int component, double C, double beta, double theta,
                                         const SamplingBox& box = {}, int grid = 5) {
    if (grid < 2) throw invalid_parameter("certify_h5: grid must be >= 2");
    const Signature& sig = g.signature();
    const int n = sig.n, d = sig.d;
    CoefficientCertificate cert;
    cert.component = component;
    cert.box = box;
    cert.grid = grid;
    const int D = n + n * d;
    std::vector<double> limits(std::size_t(D), box.z_max);
    for (int j = 0; j < n; ++j) limits[j] = box.y_max;
    std::vector<std::size_t> ids;
    const auto pts = detail::scaled_samples(detail::unit_design(D, grid), limits, &ids);
    auto eval = [&](double t, const std::vector<double>& p) {
        return g.eval(t, std::span<const double>(p.data(), std::size_t(n)),
                      std::span<const double>(p.data() + n, std::size_t(n) * d));
    };
    const double tiny = 1e-300;
    detail::Ratio at_zero, lip_y, lip_z, joint;
    const std::vector<double> origin(std::size_t(D), 0.0);
    for (double t : {0.0, box.T / 2.0, box.T}) {
        try {
            at_zero.add(std::abs(eval(t, origin)));
        } catch (const eval_error&) {
            ++cert.skipped;
        }
        auto pairs = detail::sample_pairs(pts, ids);
        const std::size_t base_pairs = pairs.size();
        for (std::size_t k = 0; k < base_pairs; ++k) {
            auto qy = pairs[k].a;
            std::copy(pairs[k].b.begin(), pairs[k].b.begin() + n, qy.begin());
            pairs.push_back(detail::Pair{pairs[k].a, qy});
            auto qz = pairs[k].a;
            std::copy(pairs[k].b.begin() + n, pairs[k].b.end(), qz.begin() + n);
            pairs.push_back(detail::Pair{pairs[k].a, qz});
        }
        for (const auto& pr : pairs) {
            const std::span<const double> ya(pr.a.data(), std::size_t(n)), yb(pr.b.data(), std::size_t(n));
            const std::span<const double> za(pr.a.data() + n, std::size_t(n) * d),
                zb(pr.b.data() + n, std::size_t(n) * d);
            const double dy = detail::dist(ya, yb), dz = detail::dist(za, zb);
            if (dy <= tiny && dz <= tiny) continue;
            try {
                const double dg = std::abs(eval(t, pr.a) - eval(t, pr.b));
                const double zfac = (1.0 + detail::norm(za) + detail::norm(zb)) * dz;
                const double cap = beta * dy + theta * zfac;
                joint.add(cap > tiny ? dg / cap : (dg > tiny ? std::numeric_limits<double>::infinity() : 0.0));
                if (dz <= tiny) lip_y.add(dg / dy);
                if (dy <= tiny) lip_z.add(dg / zfac);
            } catch (const eval_error&) {
                ++cert.skipped;
            }
        }
    }
    auto entry = [](std::string name, double claim, const detail::Ratio& r) {
        return CertificateEntry{std::move(name), claim, r.estimate(), r.estimate() <= claim * (1.0 + 1e-9), r.samples};
    };
    cert.entries.push_back(entry("H5 |g(t,0,0)| vs C", C, at_zero));
    cert.entries.push_back(entry("H5 beta", beta, lip_y));
    cert.entries.push_back(entry("H5 theta", theta, lip_z));
    cert.entries.push_back(entry("H5 utilization", 1.0, joint));
    return cert;
}

}  // namespace qbsde
