#pragma once

// Arithmetic expressions over time `t` and placeholders `u[k][j]`.
//
// Grammar (whitespace is insignificant):
//
//   expr     = sum ;
//   sum      = product { ("+" | "-") product } ;
//   product  = unary { ("*" | "/") unary } ;
//   unary    = "-" unary | power ;
//   power    = primary [ "^" unary ] ;          (right associative)
//   primary  = number | "t" | placeholder | call | "(" expr ")" ;
//   placeholder = "u" "[" integer "]" "[" integer "]" ;
//   call     = name "(" expr { "," expr } ")" ;
//   name     = "sin" | "cos" | "exp" | "log" | "abs" | "sqrt" | "min" | "max" ;
//   number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//
// Unary minus binds looser than "^", so -2^2 == -(2^2) == -4, and tighter
// than "*" and "/".

#include "fdesolve/error.hpp"

#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdesolve::expr {

enum class NodeKind { number, time, placeholder, negate, add, sub, mul, div, pow, call };

enum class Function { sin, cos, exp, log, abs, sqrt, min, max };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Immutable AST node. Placeholder indices are 1-based.
struct Node {
    NodeKind kind = NodeKind::number;
    double value = 0.0;
    std::size_t component = 0;
    std::size_t deviation = 0;
    Function function = Function::sin;
    std::vector<NodePtr> args;
    std::size_t offset = 0;
};

/// Declared problem shape for placeholder checking. `components` is n and
/// `deviations` is N.
struct Context {
    std::size_t components = 0;
    std::size_t deviations = 0;
    bool allow_placeholders = true;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view src, std::size_t offset)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset && i < src.size(); ++i) {
        if (src[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out += i + 1 == items.size() ? " or " : ", ";
        }
        out += items[i];
    }
    return out;
}

}  // namespace detail

/// Parse failure pinned to a byte offset (reported as 1-based line:column).
class ParseError : public Error {
public:
    ParseError(ErrorKind kind, std::string_view src, std::size_t offset,
               std::vector<std::string> expected, std::string found, std::string detail = {})
        : Error(kind, describe(src, offset, expected, found, detail))
        , offset_(offset)
        , expected_(std::move(expected))
        , found_(std::move(found))
    {
        std::tie(line_, column_) = detail::line_column(src, offset);
    }

    std::size_t offset() const noexcept { return offset_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }
    const std::string& found() const noexcept { return found_; }

private:
    static std::string describe(std::string_view src, std::size_t offset,
                                const std::vector<std::string>& expected,
                                const std::string& found, const std::string& detail)
    {
        const auto [line, col] = detail::line_column(src, offset);
        std::string msg = std::to_string(line) + ":" + std::to_string(col) + ": ";
        if (!detail.empty()) {
            msg += detail;
        } else {
            msg += "expected " + detail::join(expected) + ", found " + found;
        }
        return msg;
    }

    std::size_t offset_;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
    std::vector<std::string> expected_;
    std::string found_;
};

/// Domain fault during evaluation (division by zero, log of a nonpositive
/// value, ...), located at the offending node.
class EvalError : public Error {
public:
    EvalError(std::string_view src, std::size_t offset, const std::string& what)
        : Error(ErrorKind::eval_error, locate(src, offset) + what)
        , offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }

private:
    static std::string locate(std::string_view src, std::size_t offset)
    {
        if (src.empty()) {
            return {};
        }
        const auto [line, col] = detail::line_column(src, offset);
        return std::to_string(line) + ":" + std::to_string(col) + ": ";
    }

    std::size_t offset_;
};

namespace build {

inline NodePtr number(double v, std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::number;
    n->value = v;
    n->offset = offset;
    return n;
}

inline NodePtr time(std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::time;
    n->offset = offset;
    return n;
}

inline NodePtr placeholder(std::size_t component, std::size_t deviation, std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::placeholder;
    n->component = component;
    n->deviation = deviation;
    n->offset = offset;
    return n;
}

inline NodePtr negate(NodePtr a, std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::negate;
    n->args = {std::move(a)};
    n->offset = offset;
    return n;
}

inline NodePtr binary(NodeKind kind, NodePtr a, NodePtr b, std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->args = {std::move(a), std::move(b)};
    n->offset = offset;
    return n;
}

inline NodePtr call(Function f, std::vector<NodePtr> args, std::size_t offset = 0)
{
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::call;
    n->function = f;
    n->args = std::move(args);
    n->offset = offset;
    return n;
}

}  // namespace build

constexpr std::string_view function_name(Function f) noexcept
{
    switch (f) {
    case Function::sin: return "sin";
    case Function::cos: return "cos";
    case Function::exp: return "exp";
    case Function::log: return "log";
    case Function::abs: return "abs";
    case Function::sqrt: return "sqrt";
    case Function::min: return "min";
    case Function::max: return "max";
    }
    return "?";
}

inline std::optional<Function> function_from_name(std::string_view name) noexcept
{
    for (auto f : {Function::sin, Function::cos, Function::exp, Function::log, Function::abs,
                   Function::sqrt, Function::min, Function::max}) {
        if (function_name(f) == name) {
            return f;
        }
    }
    return std::nullopt;
}

constexpr bool is_variadic(Function f) noexcept { return f == Function::min || f == Function::max; }

/// Structural equality, ignoring source offsets.
inline bool equal(const Node& a, const Node& b)
{
    if (a.kind != b.kind || a.args.size() != b.args.size()) {
        return false;
    }
    switch (a.kind) {
    case NodeKind::number:
        if (a.value != b.value) {
            return false;
        }
        break;
    case NodeKind::placeholder:
        if (a.component != b.component || a.deviation != b.deviation) {
            return false;
        }
        break;
    case NodeKind::call:
        if (a.function != b.function) {
            return false;
        }
        break;
    default:
        break;
    }
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!equal(*a.args[i], *b.args[i])) {
            return false;
        }
    }
    return true;
}

inline bool contains_placeholder(const Node& n)
{
    if (n.kind == NodeKind::placeholder) {
        return true;
    }
    for (const auto& a : n.args) {
        if (contains_placeholder(*a)) {
            return true;
        }
    }
    return false;
}

inline bool contains_time(const Node& n)
{
    if (n.kind == NodeKind::time) {
        return true;
    }
    for (const auto& a : n.args) {
        if (contains_time(*a)) {
            return true;
        }
    }
    return false;
}

namespace detail {

// Binding strength used by the printer: + - : 1, * / : 2, unary - : 3, ^ : 4, atoms : 5.
inline int precedence(const Node& n) noexcept
{
    switch (n.kind) {
    case NodeKind::add:
    case NodeKind::sub: return 1;
    case NodeKind::mul:
    case NodeKind::div: return 2;
    case NodeKind::negate: return 3;
    case NodeKind::pow: return 4;
    case NodeKind::number: return n.value < 0 || std::signbit(n.value) ? 3 : 5;
    default: return 5;
    }
}

inline std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void print(const Node& n, std::string& out);

inline void print_child(const Node& child, bool parens, std::string& out)
{
    if (parens) {
        out += '(';
    }
    print(child, out);
    if (parens) {
        out += ')';
    }
}

inline void print(const Node& n, std::string& out)
{
    switch (n.kind) {
    case NodeKind::number: out += format_number(n.value); return;
    case NodeKind::time: out += 't'; return;
    case NodeKind::placeholder:
        out += "u[" + std::to_string(n.component) + "][" + std::to_string(n.deviation) + "]";
        return;
    case NodeKind::negate:
        out += '-';
        print_child(*n.args[0], precedence(*n.args[0]) < 3, out);
        return;
    case NodeKind::call:
        out += function_name(n.function);
        out += '(';
        for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i > 0) {
                out += ", ";
            }
            print(*n.args[i], out);
        }
        out += ')';
        return;
    case NodeKind::pow:
        print_child(*n.args[0], precedence(*n.args[0]) <= 4, out);
        out += '^';
        print_child(*n.args[1], precedence(*n.args[1]) < 3, out);
        return;
    default: {
        const int p = precedence(n);
        const char op = n.kind == NodeKind::add ? '+' : n.kind == NodeKind::sub ? '-'
                      : n.kind == NodeKind::mul ? '*' : '/';
        print_child(*n.args[0], precedence(*n.args[0]) < p, out);
        out += op;
        print_child(*n.args[1], precedence(*n.args[1]) <= p, out);
        return;
    }
    }
}

}  // namespace detail

/// Text form with minimal parentheses; parsing it reproduces the AST.
inline std::string print(const Node& n)
{
    std::string out;
    detail::print(n, out);
    return out;
}

namespace detail {

inline double eval_node(const Node& n, double t, std::span<const double> u,
                        std::size_t deviations, std::string_view src)
{
    auto arg = [&](std::size_t i) { return eval_node(*n.args[i], t, u, deviations, src); };
    switch (n.kind) {
    case NodeKind::number: return n.value;
    case NodeKind::time: return t;
    case NodeKind::placeholder: {
        const std::size_t idx = (n.component - 1) * deviations + (n.deviation - 1);
        if (idx >= u.size()) {
            throw EvalError(src, n.offset, "placeholder u[" + std::to_string(n.component) + "][" +
                                               std::to_string(n.deviation) + "] has no value");
        }
        return u[idx];
    }
    case NodeKind::negate: return -arg(0);
    case NodeKind::add: return arg(0) + arg(1);
    case NodeKind::sub: return arg(0) - arg(1);
    case NodeKind::mul: return arg(0) * arg(1);
    case NodeKind::div: {
        const double a = arg(0);
        const double b = arg(1);
        if (b == 0.0) {
            throw EvalError(src, n.offset, "division by zero");
        }
        return a / b;
    }
    case NodeKind::pow: {
        const double a = arg(0);
        const double b = arg(1);
        if (a == 0.0 && b < 0.0) {
            throw EvalError(src, n.offset, "division by zero in power");
        }
        const double r = std::pow(a, b);
        if (std::isnan(r) && !std::isnan(a) && !std::isnan(b)) {
            throw EvalError(src, n.offset, "negative base with non-integer exponent");
        }
        return r;
    }
    case NodeKind::call: {
        switch (n.function) {
        case Function::sin: return std::sin(arg(0));
        case Function::cos: return std::cos(arg(0));
        case Function::exp: return std::exp(arg(0));
        case Function::abs: return std::abs(arg(0));
        case Function::log: {
            const double a = arg(0);
            if (!(a > 0.0)) {
                throw EvalError(src, n.offset, "log of a nonpositive value");
            }
            return std::log(a);
        }
        case Function::sqrt: {
            const double a = arg(0);
            if (a < 0.0) {
                throw EvalError(src, n.offset, "sqrt of a negative value");
            }
            return std::sqrt(a);
        }
        case Function::min:
        case Function::max: {
            double r = arg(0);
            for (std::size_t i = 1; i < n.args.size(); ++i) {
                const double v = arg(i);
                r = n.function == Function::min ? std::min(r, v) : std::max(r, v);
            }
            return r;
        }
        }
        break;
    }
    }
    throw EvalError(src, n.offset, "malformed expression node");
}

}  // namespace detail

/// A parsed expression together with the context it was checked against.
class Expr {
public:
    Expr() = default;

    Expr(NodePtr root, Context ctx, std::string source)
        : root_(std::move(root))
        , ctx_(ctx)
        , source_(std::move(source))
        , has_placeholders_(root_ && contains_placeholder(*root_))
    {
    }

    explicit operator bool() const noexcept { return root_ != nullptr; }

    const Node& root() const { return *root_; }
    const NodePtr& root_ptr() const noexcept { return root_; }
    const Context& context() const noexcept { return ctx_; }
    const std::string& source() const noexcept { return source_; }

    bool has_placeholders() const noexcept { return has_placeholders_; }
    bool depends_on_time() const { return root_ && contains_time(*root_); }

    /// `u` is the n x N placeholder matrix in row-major order
    /// (u[k][j] at index (k-1)*N + (j-1)).
    double operator()(double t, std::span<const double> u = {}) const
    {
        if (!root_) {
            throw Error(ErrorKind::eval_error, "empty expression");
        }
        if (has_placeholders_ && u.empty()) {
            throw EvalError(source_, root_->offset, "placeholder values required");
        }
        return detail::eval_node(*root_, t, u, ctx_.deviations, source_);
    }

    std::string to_string() const { return root_ ? print(*root_) : std::string{}; }

private:
    NodePtr root_;
    Context ctx_;
    std::string source_;
    bool has_placeholders_ = false;
};

inline double eval_expr(const Expr& e, double t, std::span<const double> u = {}) { return e(t, u); }

namespace detail {

enum class Tok { number, ident, lparen, rparen, lbracket, rbracket, comma, plus, minus, star, slash, caret, end };

struct Token {
    Tok kind = Tok::end;
    std::string_view text;
    std::size_t offset = 0;
    double value = 0.0;
};

inline std::string describe(const Token& tok)
{
    if (tok.kind == Tok::end) {
        return "end of input";
    }
    return "'" + std::string(tok.text) + "'";
}

inline std::vector<Token> tokenize(std::string_view src)
{
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    auto is_alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    while (i < src.size()) {
        const char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (is_digit(c) || (c == '.' && i + 1 < src.size() && is_digit(src[i + 1]))) {
            while (i < src.size() && is_digit(src[i])) ++i;
            if (i < src.size() && src[i] == '.') {
                ++i;
                while (i < src.size() && is_digit(src[i])) ++i;
            }
            if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
                if (j < src.size() && is_digit(src[j])) {
                    i = j;
                    while (i < src.size() && is_digit(src[i])) ++i;
                }
            }
            Token tok{Tok::number, src.substr(start, i - start), start, 0.0};
            const auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.value);
            if (res.ec != std::errc{} || !std::isfinite(tok.value)) {
                throw ParseError(ErrorKind::parse_error, src, start, {"number"}, describe(tok),
                                 "numeric literal out of range");
            }
            out.push_back(tok);
            continue;
        }
        if (is_alpha(c)) {
            while (i < src.size() && (is_alpha(src[i]) || is_digit(src[i]))) ++i;
            out.push_back(Token{Tok::ident, src.substr(start, i - start), start, 0.0});
            continue;
        }
        Tok kind;
        switch (c) {
        case '(': kind = Tok::lparen; break;
        case ')': kind = Tok::rparen; break;
        case '[': kind = Tok::lbracket; break;
        case ']': kind = Tok::rbracket; break;
        case ',': kind = Tok::comma; break;
        case '+': kind = Tok::plus; break;
        case '-': kind = Tok::minus; break;
        case '*': kind = Tok::star; break;
        case '/': kind = Tok::slash; break;
        case '^': kind = Tok::caret; break;
        default:
            throw ParseError(ErrorKind::parse_error, src, start, {"operator", "operand"},
                             "'" + std::string(1, c) + "'");
        }
        out.push_back(Token{kind, src.substr(start, 1), start, 0.0});
        ++i;
    }
    out.push_back(Token{Tok::end, {}, src.size(), 0.0});
    return out;
}

constexpr int kUnaryPrecedence = 3;

class Parser {
public:
    Parser(std::string_view src, Context ctx)
        : src_(src)
        , ctx_(ctx)
        , toks_(tokenize(src))
    {
    }

    NodePtr parse()
    {
        auto root = binary(0);
        if (peek().kind != Tok::end) {
            fail({"operator", "end of input"});
        }
        return root;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }

    [[noreturn]] void fail(std::vector<std::string> expected) const
    {
        throw ParseError(ErrorKind::parse_error, src_, peek().offset, std::move(expected), describe(peek()));
    }

    const Token& expect(Tok kind, const char* what)
    {
        if (peek().kind != kind) {
            fail({what});
        }
        return next();
    }

    static std::optional<std::pair<NodeKind, int>> binary_op(Tok t) noexcept
    {
        switch (t) {
        case Tok::plus: return std::pair{NodeKind::add, 1};
        case Tok::minus: return std::pair{NodeKind::sub, 1};
        case Tok::star: return std::pair{NodeKind::mul, 2};
        case Tok::slash: return std::pair{NodeKind::div, 2};
        case Tok::caret: return std::pair{NodeKind::pow, 4};
        default: return std::nullopt;
        }
    }

    NodePtr binary(int min_prec)
    {
        auto lhs = unary();
        for (;;) {
            const auto op = binary_op(peek().kind);
            if (!op || op->second < min_prec) {
                return lhs;
            }
            const std::size_t at = next().offset;
            const bool right_assoc = op->first == NodeKind::pow;
            auto rhs = binary(right_assoc ? op->second : op->second + 1);
            lhs = build::binary(op->first, std::move(lhs), std::move(rhs), at);
        }
    }

    NodePtr unary()
    {
        if (peek().kind == Tok::minus) {
            const std::size_t at = next().offset;
            return build::negate(binary(kUnaryPrecedence), at);
        }
        return primary();
    }

    std::size_t index()
    {
        const Token& tok = peek();
        if (tok.kind != Tok::number || tok.value != std::floor(tok.value) || tok.value < 0) {
            fail({"integer index"});
        }
        next();
        return static_cast<std::size_t>(tok.value);
    }

    NodePtr primary()
    {
        const Token& tok = peek();
        switch (tok.kind) {
        case Tok::number: next(); return build::number(tok.value, tok.offset);
        case Tok::lparen: {
            next();
            auto inner = binary(0);
            expect(Tok::rparen, "')'");
            return inner;
        }
        case Tok::ident: return identifier();
        default: fail({"number", "'t'", "placeholder", "function", "'('", "'-'"});
        }
    }

    NodePtr identifier()
    {
        const Token tok = next();
        if (tok.text == "t") {
            return build::time(tok.offset);
        }
        if (tok.text == "u") {
            if (!ctx_.allow_placeholders) {
                throw ParseError(ErrorKind::placeholder_forbidden, src_, tok.offset, {}, "'u'",
                                 "placeholders are not allowed here");
            }
            expect(Tok::lbracket, "'['");
            const std::size_t k = index();
            expect(Tok::rbracket, "']'");
            expect(Tok::lbracket, "'['");
            const std::size_t j = index();
            expect(Tok::rbracket, "']'");
            if (k < 1 || k > ctx_.components || j < 1 || j > ctx_.deviations) {
                throw ParseError(ErrorKind::placeholder_out_of_range, src_, tok.offset, {},
                                 "u[" + std::to_string(k) + "][" + std::to_string(j) + "]",
                                 "placeholder u[" + std::to_string(k) + "][" + std::to_string(j) +
                                     "] outside declared n = " + std::to_string(ctx_.components) +
                                     ", N = " + std::to_string(ctx_.deviations));
            }
            return build::placeholder(k, j, tok.offset);
        }
        const auto fn = function_from_name(tok.text);
        if (!fn) {
            throw ParseError(ErrorKind::parse_error, src_, tok.offset, {"'t'", "placeholder", "function"},
                             "'" + std::string(tok.text) + "'",
                             "unknown identifier '" + std::string(tok.text) + "'");
        }
        expect(Tok::lparen, "'('");
        std::vector<NodePtr> args;
        args.push_back(binary(0));
        while (peek().kind == Tok::comma) {
            next();
            args.push_back(binary(0));
        }
        expect(Tok::rparen, "')'");
        const bool ok = is_variadic(*fn) ? args.size() >= 2 : args.size() == 1;
        if (!ok) {
            throw ParseError(ErrorKind::parse_error, src_, tok.offset, {}, "'" + std::string(tok.text) + "'",
                             std::string(tok.text) + (is_variadic(*fn) ? " takes at least 2 arguments"
                                                                        : " takes exactly 1 argument"));
        }
        return build::call(*fn, std::move(args), tok.offset);
    }

    std::string_view src_;
    Context ctx_;
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse(std::string_view src, Context ctx = {})
{
    detail::Parser parser(src, ctx);
    return Expr(parser.parse(), ctx, std::string(src));
}

/// An expression affine in the placeholders: constant + sum of
/// coefficient(t) * u[k][j]. Coefficients are keyed by the flat index
/// (k-1)*N + (j-1) and never contain placeholders. A null constant is zero.
struct AffineForm {
    NodePtr constant;
    std::map<std::size_t, NodePtr> coefficient;
};

namespace detail {

inline bool is_number(const NodePtr& n, double v) { return n && n->kind == NodeKind::number && n->value == v; }

inline NodePtr neg(const NodePtr& a)
{
    if (!a) {
        return a;
    }
    if (a->kind == NodeKind::negate) {
        return a->args[0];
    }
    if (a->kind == NodeKind::number) {
        return build::number(-a->value);
    }
    return build::negate(a);
}

inline NodePtr sum(const NodePtr& a, const NodePtr& b)
{
    if (!a) return b;
    if (!b) return a;
    return build::binary(NodeKind::add, a, b);
}

inline NodePtr product(const NodePtr& a, const NodePtr& b)
{
    if (is_number(a, 1.0)) return b;
    if (is_number(b, 1.0)) return a;
    return build::binary(NodeKind::mul, a, b);
}

inline std::optional<AffineForm> decompose(const NodePtr& n, std::size_t deviations)
{
    if (!contains_placeholder(*n)) {
        return AffineForm{n, {}};
    }
    switch (n->kind) {
    case NodeKind::placeholder: {
        AffineForm f;
        f.coefficient[(n->component - 1) * deviations + (n->deviation - 1)] = build::number(1.0);
        return f;
    }
    case NodeKind::negate: {
        auto f = decompose(n->args[0], deviations);
        if (!f) return std::nullopt;
        f->constant = neg(f->constant);
        for (auto& [idx, c] : f->coefficient) c = neg(c);
        return f;
    }
    case NodeKind::add:
    case NodeKind::sub: {
        auto a = decompose(n->args[0], deviations);
        auto b = decompose(n->args[1], deviations);
        if (!a || !b) return std::nullopt;
        const bool minus = n->kind == NodeKind::sub;
        a->constant = sum(a->constant, minus ? neg(b->constant) : b->constant);
        for (auto& [idx, c] : b->coefficient) {
            auto term = minus ? neg(c) : c;
            auto& slot = a->coefficient[idx];
            slot = sum(slot, term);
        }
        return a;
    }
    case NodeKind::mul: {
        const bool left_free = !contains_placeholder(*n->args[0]);
        const bool right_free = !contains_placeholder(*n->args[1]);
        if (!left_free && !right_free) return std::nullopt;
        const NodePtr& factor = left_free ? n->args[0] : n->args[1];
        auto f = decompose(left_free ? n->args[1] : n->args[0], deviations);
        if (!f) return std::nullopt;
        if (f->constant) {
            f->constant = left_free ? product(factor, f->constant) : product(f->constant, factor);
        }
        for (auto& [idx, c] : f->coefficient) {
            c = left_free ? product(factor, c) : product(c, factor);
        }
        return f;
    }
    case NodeKind::div: {
        if (contains_placeholder(*n->args[1])) return std::nullopt;
        auto f = decompose(n->args[0], deviations);
        if (!f) return std::nullopt;
        const NodePtr& den = n->args[1];
        if (f->constant) f->constant = build::binary(NodeKind::div, f->constant, den);
        for (auto& [idx, c] : f->coefficient) c = build::binary(NodeKind::div, c, den);
        return f;
    }
    default:
        return std::nullopt;
    }
}

}  // namespace detail

/// Structural affine decomposition; nullopt when a placeholder occurs inside
/// a nonlinear function, a power, a denominator, or a placeholder product.
inline std::optional<AffineForm> affine_decompose(const Expr& e)
{
    if (!e) return std::nullopt;
    return detail::decompose(e.root_ptr(), e.context().deviations);
}

/// Lipschitz majorant max_{j,m} |coefficient_{jm}(t)| for RHS expressions
/// that are affine in the placeholders. Constant coefficients are folded to
/// numbers. Returns nullopt for anything not recognizably affine.
inline std::optional<Expr> auto_majorant(const Expr& e)
{
    const auto form = affine_decompose(e);
    if (!form) {
        return std::nullopt;
    }
    std::vector<NodePtr> terms;
    for (const auto& [idx, c] : form->coefficient) {
        if (!contains_time(*c)) {
            try {
                const double v = detail::eval_node(*c, 0.0, {}, e.context().deviations, {});
                terms.push_back(build::number(std::abs(v)));
            } catch (const Error&) {
                return std::nullopt;
            }
        } else {
            terms.push_back(build::call(Function::abs, {c}));
        }
    }
    NodePtr root;
    if (terms.empty()) {
        root = build::number(0.0);
    } else if (terms.size() == 1) {
        root = terms.front();
    } else {
        root = build::call(Function::max, std::move(terms));
    }
    Context ctx = e.context();
    ctx.allow_placeholders = false;
    return parse(print(*root), ctx);
}

}  // namespace fdesolve::expr
