#include "dw/expression.hpp"

#include "dw/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace dw {

namespace {

struct FunctionInfo {
    std::string_view name;
    Op op;
};

constexpr std::array kFunctions{
    FunctionInfo{"add", Op::Add},
    FunctionInfo{"subtract", Op::Subtract},
    FunctionInfo{"multiply", Op::Multiply},
    FunctionInfo{"divide", Op::Divide},
    FunctionInfo{"sum", Op::Sum},
    FunctionInfo{"average", Op::Average},
    FunctionInfo{"count", Op::Count},
    FunctionInfo{"min", Op::Min},
    FunctionInfo{"max", Op::Max},
    FunctionInfo{"and", Op::And},
    FunctionInfo{"or", Op::Or},
    FunctionInfo{"not", Op::Not},
    FunctionInfo{"equal", Op::Equal},
    FunctionInfo{"greater", Op::Greater},
    FunctionInfo{"less", Op::Less},
    FunctionInfo{"day_label", Op::DayLabel},
    FunctionInfo{"month", Op::Month},
    FunctionInfo{"quarter", Op::Quarter},
    FunctionInfo{"year", Op::Year},
};

std::optional<Op> lookup_function(std::string_view name)
{
    if (name == "avg")
        return Op::Average;
    for (const auto& f : kFunctions)
        if (f.name == name)
            return f.op;
    return std::nullopt;
}

std::string_view infix_symbol(Op op)
{
    switch (op) {
    case Op::Add: return "+";
    case Op::Subtract: return "-";
    case Op::Multiply: return "*";
    case Op::Divide: return "/";
    case Op::Equal: return "=";
    case Op::Greater: return ">";
    case Op::Less: return "<";
    case Op::And: return "and";
    case Op::Or: return "or";
    default: return "";
    }
}

bool is_infix(const Expr& e)
{
    return e.kind == NodeKind::Operator && !infix_symbol(e.op).empty();
}

void check_shape(const Expr& e)
{
    auto arity_error = [&](const std::string& expected) {
        return Error(ErrorKind::ArityViolation, "arity violation: '" + std::string(function_name(e.op)) + "' takes " +
                                                    expected + ", got " + std::to_string(e.children.size()));
    };
    switch (e.kind) {
    case NodeKind::Literal:
    case NodeKind::Reference:
        if (!e.children.empty())
            throw Error(ErrorKind::ArityViolation, "arity violation: operands have no children");
        return;
    case NodeKind::Operator:
        break;
    }
    if (is_arithmetic(e.op) || is_comparison(e.op)) {
        if (e.children.size() != 2)
            throw arity_error("2 operands");
    } else if (e.op == Op::And || e.op == Op::Or) {
        if (e.children.size() < 2)
            throw arity_error("at least 2 operands");
    } else if (e.children.size() != 1) {
        throw arity_error("1 operand");
    }
    if (is_aggregation(e.op) && e.children.front().kind != NodeKind::Reference)
        throw Error(ErrorKind::ArityViolation,
                    "arity violation: '" + std::string(function_name(e.op)) + "' aggregates a reference path");
    for (const auto& c : e.children)
        check_shape(c);
}

bool is_boolean_rooted(const Expr& e)
{
    if (e.kind == NodeKind::Literal)
        return e.literal.is<bool>();
    return e.kind == NodeKind::Operator && (is_logical(e.op) || is_comparison(e.op));
}

// ---------------------------------------------------------------------------------------
// Lexer / parser

enum class Tok { End, Number, DateLit, String, Reference, Ident, LParen, RParen, Comma, Plus, Minus, Star, Slash, Eq, Gt, Lt };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    std::size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run()
    {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            Token t;
            t.pos = i_;
            if (i_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            char c = src_[i_];
            if (std::isdigit(static_cast<unsigned char>(c)))
                lex_number(t);
            else if (c == '"')
                lex_quoted(t, '"', Tok::Reference);
            else if (c == '\'')
                lex_quoted(t, '\'', Tok::String);
            else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
                lex_ident(t);
            else {
                ++i_;
                switch (c) {
                case '(': t.kind = Tok::LParen; break;
                case ')': t.kind = Tok::RParen; break;
                case ',': t.kind = Tok::Comma; break;
                case '+': t.kind = Tok::Plus; break;
                case '-': t.kind = Tok::Minus; break;
                case '*': t.kind = Tok::Star; break;
                case '/': t.kind = Tok::Slash; break;
                case '=': t.kind = Tok::Eq; break;
                case '>': t.kind = Tok::Gt; break;
                case '<': t.kind = Tok::Lt; break;
                default:
                    throw Error(ErrorKind::SyntaxError,
                                "syntax error at position " + std::to_string(t.pos) + ": unexpected '" + c + "'");
                }
            }
            out.push_back(std::move(t));
        }
    }

private:
    void skip_space()
    {
        while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_])))
            ++i_;
    }

    bool digit_at(std::size_t k) const { return k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k])); }

    void lex_number(Token& t)
    {
        std::size_t start = i_;
        // YYYY-MM-DD
        if (i_ + 10 <= src_.size() && digit_at(i_) && digit_at(i_ + 1) && digit_at(i_ + 2) && digit_at(i_ + 3) &&
            src_[i_ + 4] == '-' && digit_at(i_ + 5) && digit_at(i_ + 6) && src_[i_ + 7] == '-' && digit_at(i_ + 8) &&
            digit_at(i_ + 9) && !digit_at(i_ + 10)) {
            t.kind = Tok::DateLit;
            t.text = std::string(src_.substr(i_, 10));
            i_ += 10;
            return;
        }
        while (digit_at(i_))
            ++i_;
        if (i_ < src_.size() && src_[i_] == '.' && digit_at(i_ + 1)) {
            ++i_;
            while (digit_at(i_))
                ++i_;
        }
        t.kind = Tok::Number;
        t.text = std::string(src_.substr(start, i_ - start));
    }

    void lex_quoted(Token& t, char quote, Tok kind)
    {
        std::size_t start = i_++;
        std::string out;
        for (;;) {
            if (i_ >= src_.size())
                throw Error(ErrorKind::SyntaxError,
                            "syntax error at position " + std::to_string(start) + ": unterminated quote");
            char c = src_[i_++];
            if (c == quote) {
                if (i_ < src_.size() && src_[i_] == quote) {  // doubled quote escapes itself
                    out += quote;
                    ++i_;
                    continue;
                }
                break;
            }
            out += c;
        }
        t.kind = kind;
        t.text = std::move(out);
    }

    void lex_ident(Token& t)
    {
        std::size_t start = i_;
        while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
            ++i_;
        t.kind = Tok::Ident;
        t.text = std::string(src_.substr(start, i_ - start));
    }

    std::string_view src_;
    std::size_t i_ = 0;
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Expr parse()
    {
        Expr e = parse_or();
        if (peek().kind != Tok::End)
            fail("unexpected trailing input");
        return e;
    }

private:
    const Token& peek() const { return toks_[k_]; }
    const Token& next() { return toks_[k_++]; }
    bool peek_ident(std::string_view word) const { return peek().kind == Tok::Ident && peek().text == word; }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw Error(ErrorKind::SyntaxError,
                    "syntax error at position " + std::to_string(peek().pos) + ": " + what);
    }

    void expect(Tok kind, const char* what)
    {
        if (peek().kind != kind)
            fail(std::string("expected ") + what);
        ++k_;
    }

    Expr parse_or()
    {
        std::vector<Expr> parts{parse_and()};
        while (peek_ident("or")) {
            ++k_;
            parts.push_back(parse_and());
        }
        return parts.size() == 1 ? std::move(parts.front()) : Expr::make(Op::Or, std::move(parts));
    }

    Expr parse_and()
    {
        std::vector<Expr> parts{parse_not()};
        while (peek_ident("and")) {
            ++k_;
            parts.push_back(parse_not());
        }
        return parts.size() == 1 ? std::move(parts.front()) : Expr::make(Op::And, std::move(parts));
    }

    Expr parse_not()
    {
        if (peek_ident("not") && toks_[k_ + 1].kind != Tok::LParen) {
            ++k_;
            return Expr::make(Op::Not, {parse_not()});
        }
        return parse_comparison();
    }

    Expr parse_comparison()
    {
        Expr left = parse_additive();
        std::optional<Op> op;
        switch (peek().kind) {
        case Tok::Eq: op = Op::Equal; break;
        case Tok::Gt: op = Op::Greater; break;
        case Tok::Lt: op = Op::Less; break;
        default: return left;
        }
        ++k_;
        Expr right = parse_additive();
        if (peek().kind == Tok::Eq || peek().kind == Tok::Gt || peek().kind == Tok::Lt)
            fail("comparisons do not chain");
        return Expr::make(*op, {std::move(left), std::move(right)});
    }

    Expr parse_additive()
    {
        Expr left = parse_term();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            Op op = next().kind == Tok::Plus ? Op::Add : Op::Subtract;
            left = Expr::make(op, {std::move(left), parse_term()});
        }
        return left;
    }

    Expr parse_term()
    {
        Expr left = parse_unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            Op op = next().kind == Tok::Star ? Op::Multiply : Op::Divide;
            left = Expr::make(op, {std::move(left), parse_unary()});
        }
        return left;
    }

    Expr parse_unary()
    {
        if (peek().kind == Tok::Minus) {
            ++k_;
            if (peek().kind != Tok::Number)
                fail("unary minus applies to numeric literals only");
            return number_literal("-" + next().text);
        }
        return parse_primary();
    }

    Expr number_literal(const std::string& text)
    {
        if (text.find('.') == std::string::npos) {
            auto d = Decimal::parse(text);
            if (auto i = d ? d->to_int64() : std::nullopt)
                return Expr::lit(Value{*i});
            fail("integer literal out of range");
        }
        return Expr::lit(Value{*Decimal::parse(text)});
    }

    Expr parse_primary()
    {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Number: ++k_; return number_literal(t.text);
        case Tok::DateLit: {
            auto d = Date::parse(t.text);
            if (!d)
                fail("invalid date '" + t.text + "'");
            ++k_;
            return Expr::lit(Value{*d});
        }
        case Tok::String: ++k_; return Expr::lit(Value{t.text});
        case Tok::Reference:
            if (t.text.empty())
                fail("empty reference");
            ++k_;
            return Expr::ref(t.text);
        case Tok::LParen: {
            ++k_;
            Expr inner = parse_or();
            expect(Tok::RParen, "')'");
            return inner;
        }
        case Tok::Ident: {
            if (t.text == "true" || t.text == "false") {
                ++k_;
                return Expr::lit(Value{t.text == "true"});
            }
            if (toks_[k_ + 1].kind != Tok::LParen) {
                if (t.text == "and" || t.text == "or" || t.text == "not")
                    fail("unexpected '" + t.text + "'");
                // Bare name: an unqualified reference.
                ++k_;
                return Expr::ref(t.text);
            }
            auto op = lookup_function(t.text);
            if (!op)
                throw Error(ErrorKind::UnknownOperator, "unknown operator '" + t.text + "' at position " +
                                                            std::to_string(t.pos));
            k_ += 2;
            std::vector<Expr> args;
            if (peek().kind != Tok::RParen) {
                args.push_back(parse_or());
                while (peek().kind == Tok::Comma) {
                    ++k_;
                    args.push_back(parse_or());
                }
            }
            expect(Tok::RParen, "')'");
            Expr e = Expr::make(*op, std::move(args));
            check_shape(e);
            return e;
        }
        default: fail("expected an operand");
        }
    }

    std::vector<Token> toks_;
    std::size_t k_ = 0;
};

std::string quote(std::string_view s, char q)
{
    std::string out(1, q);
    for (char c : s) {
        out += c;
        if (c == q)
            out += q;
    }
    return out + q;
}

std::string print_literal(const Value& v)
{
    if (v.is<std::string>())
        return quote(v.as<std::string>(), '\'');
    // An integral decimal keeps a fraction digit so that it does not read back as an integer.
    if (v.is<Decimal>() && v.as<Decimal>().is_integer())
        return v.to_display() + ".0";
    return v.to_display();
}

} // namespace

std::string_view function_name(Op op)
{
    if (op == Op::Average)
        return "average";
    for (const auto& f : kFunctions)
        if (f.op == op)
            return f.name;
    return "?";
}

bool is_aggregation(Op op)
{
    return op == Op::Sum || op == Op::Average || op == Op::Count || op == Op::Min || op == Op::Max;
}

bool is_arithmetic(Op op)
{
    return op == Op::Add || op == Op::Subtract || op == Op::Multiply || op == Op::Divide;
}

bool is_comparison(Op op)
{
    return op == Op::Equal || op == Op::Greater || op == Op::Less;
}

bool is_logical(Op op)
{
    return op == Op::And || op == Op::Or || op == Op::Not;
}

bool is_date_part(Op op)
{
    return op == Op::DayLabel || op == Op::Month || op == Op::Quarter || op == Op::Year;
}

Expr Expr::lit(Value v)
{
    Expr e;
    e.kind = NodeKind::Literal;
    e.literal = std::move(v);
    return e;
}

Expr Expr::ref(std::string qualified)
{
    Expr e;
    e.kind = NodeKind::Reference;
    e.reference = std::move(qualified);
    return e;
}

Expr Expr::make(Op op, std::vector<Expr> children)
{
    Expr e;
    e.kind = NodeKind::Operator;
    e.op = op;
    e.children = std::move(children);
    return e;
}

ExpressionTree::ExpressionTree(Expr root) : root_(std::move(root))
{
    check_shape(root_);
    kind_ = is_boolean_rooted(root_) ? TreeKind::Selection : TreeKind::Calculation;
}

std::string ExpressionTree::text() const
{
    return print_formula(root_);
}

std::vector<std::string> ExpressionTree::references() const
{
    std::vector<std::string> out;
    auto walk = [&](auto&& self, const Expr& e) -> void {
        if (e.kind == NodeKind::Reference && std::find(out.begin(), out.end(), e.reference) == out.end())
            out.push_back(e.reference);
        for (const auto& c : e.children)
            self(self, c);
    };
    walk(walk, root_);
    return out;
}

ExpressionTree parse_formula(std::string_view text)
{
    Parser p(Lexer(text).run());
    return ExpressionTree(p.parse());
}

std::string print_formula(const Expr& e)
{
    switch (e.kind) {
    case NodeKind::Literal: return print_literal(e.literal);
    case NodeKind::Reference: return quote(e.reference, '"');
    case NodeKind::Operator: break;
    }
    if (e.op == Op::And || e.op == Op::Or) {
        std::string out;
        for (std::size_t i = 0; i < e.children.size(); ++i) {
            if (i)
                out += " " + std::string(infix_symbol(e.op)) + " ";
            const auto& c = e.children[i];
            bool wrap = c.kind == NodeKind::Operator && (c.op == Op::And || c.op == Op::Or);
            out += wrap ? "(" + print_formula(c) + ")" : print_formula(c);
        }
        return out;
    }
    if (is_arithmetic(e.op) || is_comparison(e.op)) {
        auto side = [](const Expr& c) { return is_infix(c) ? "(" + print_formula(c) + ")" : print_formula(c); };
        return side(e.children[0]) + " " + std::string(infix_symbol(e.op)) + " " + side(e.children[1]);
    }
    std::string out = std::string(function_name(e.op)) + "(";
    for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i)
            out += ", ";
        out += print_formula(e.children[i]);
    }
    return out + ")";
}

QualifiedName split_reference(std::string_view reference)
{
    auto dot = reference.find('.');
    if (dot == std::string_view::npos)
        return {"", std::string(reference)};
    return {std::string(reference.substr(0, dot)), std::string(reference.substr(dot + 1))};
}

std::string_view to_string(ExprType type)
{
    switch (type) {
    case ExprType::Unknown: return "unknown";
    case ExprType::Boolean: return "boolean";
    case ExprType::Integer: return "integer";
    case ExprType::Decimal: return "decimal";
    case ExprType::String: return "string";
    case ExprType::Date: return "date";
    case ExprType::Complex: return "complex";
    }
    return "?";
}

std::optional<AttributeType> to_attribute_type(ExprType type)
{
    switch (type) {
    case ExprType::Boolean: return AttributeType::simple(TypeKind::Boolean);
    case ExprType::Integer: return AttributeType::simple(TypeKind::Integer);
    case ExprType::Decimal: return AttributeType::simple(TypeKind::Decimal);
    case ExprType::String: return AttributeType::simple(TypeKind::String);
    case ExprType::Date: return AttributeType::simple(TypeKind::Date);
    default: return std::nullopt;
    }
}

std::optional<ResolvedReference> resolve_reference(const EvaluationContext& ctx, std::string_view reference)
{
    if (!ctx.graph || !ctx.graph->find_class(ctx.anchor))
        return std::nullopt;
    auto name = split_reference(reference);
    std::string cls = name.class_name.empty() ? ctx.anchor : name.class_name;
    if (!ctx.graph->find_class(cls)) {
        // An unqualified attribute name containing a dot, e.g. "adresse.rue"?  Not supported.
        return std::nullopt;
    }
    auto attr = ctx.graph->resolve_attribute(cls, name.attribute);
    if (!attr)
        return std::nullopt;
    auto path = find_path(*ctx.graph, ctx.anchor, cls);
    if (!path)
        return std::nullopt;
    return ResolvedReference{std::string(reference), cls, *attr, *path};
}

namespace {

ExprType from_attribute_type(const AttributeType& t)
{
    switch (t.kind) {
    case TypeKind::String: return ExprType::String;
    case TypeKind::Integer: return ExprType::Integer;
    case TypeKind::Decimal: return ExprType::Decimal;
    case TypeKind::Boolean: return ExprType::Boolean;
    case TypeKind::Date: return ExprType::Date;
    default: return ExprType::Complex;
    }
}

bool numeric(ExprType t)
{
    return t == ExprType::Integer || t == ExprType::Decimal;
}

class Checker {
public:
    Checker(const EvaluationContext& ctx, std::vector<Diagnostic>& out) : ctx_(ctx), out_(out) {}

    ExprType check(const Expr& e, bool in_aggregate = false)
    {
        switch (e.kind) {
        case NodeKind::Literal: return literal_type(e.literal);
        case NodeKind::Reference: return reference_type(e, in_aggregate);
        case NodeKind::Operator: break;
        }
        if (is_aggregation(e.op)) {
            ExprType inner = check(e.children[0], true);
            if (inner == ExprType::Unknown)
                return ExprType::Unknown;
            switch (e.op) {
            case Op::Count: return ExprType::Integer;
            case Op::Sum:
                if (!numeric(inner))
                    return mismatch("sum needs a numeric path, got " + std::string(to_string(inner)));
                return inner;
            case Op::Average:
                if (!numeric(inner))
                    return mismatch("average needs a numeric path, got " + std::string(to_string(inner)));
                return ExprType::Decimal;
            default:
                if (!(numeric(inner) || inner == ExprType::String || inner == ExprType::Date))
                    return mismatch(std::string(function_name(e.op)) + " needs an ordered path");
                return inner;
            }
        }
        std::vector<ExprType> kids;
        for (const auto& c : e.children)
            kids.push_back(check(c));
        if (std::find(kids.begin(), kids.end(), ExprType::Unknown) != kids.end())
            return ExprType::Unknown;
        if (is_arithmetic(e.op)) {
            if (!numeric(kids[0]) || !numeric(kids[1]))
                return mismatch("'" + std::string(infix_symbol(e.op)) + "' needs numeric operands");
            if (e.op == Op::Divide || kids[0] == ExprType::Decimal || kids[1] == ExprType::Decimal)
                return ExprType::Decimal;
            return ExprType::Integer;
        }
        if (is_logical(e.op)) {
            for (auto k : kids)
                if (k != ExprType::Boolean)
                    return mismatch("'" + std::string(function_name(e.op)) + "' needs boolean operands");
            return ExprType::Boolean;
        }
        if (is_comparison(e.op)) {
            bool ok = (numeric(kids[0]) && numeric(kids[1])) ||
                      (kids[0] == kids[1] && (kids[0] == ExprType::String || kids[0] == ExprType::Date)) ||
                      (e.op == Op::Equal && kids[0] == kids[1]);
            if (!ok)
                return mismatch("cannot compare " + std::string(to_string(kids[0])) + " with " +
                                std::string(to_string(kids[1])));
            return ExprType::Boolean;
        }
        // date parts
        if (kids[0] != ExprType::Date)
            return mismatch(std::string(function_name(e.op)) + " needs a date operand");
        return e.op == Op::DayLabel ? ExprType::String : ExprType::Integer;
    }

private:
    static ExprType literal_type(const Value& v)
    {
        if (v.is<bool>())
            return ExprType::Boolean;
        if (v.is<std::int64_t>())
            return ExprType::Integer;
        if (v.is<Decimal>())
            return ExprType::Decimal;
        if (v.is<std::string>())
            return ExprType::String;
        if (v.is<Date>())
            return ExprType::Date;
        return ExprType::Complex;
    }

    ExprType reference_type(const Expr& e, bool in_aggregate)
    {
        auto resolved = resolve_reference(ctx_, e.reference);
        if (!resolved) {
            out_.push_back({"unresolvable-reference",
                            "unresolvable reference \"" + e.reference + "\" from class '" + ctx_.anchor + "'",
                            e.reference});
            return ExprType::Unknown;
        }
        bool single = resolved->path.single_valued();
        if (in_aggregate && single) {
            out_.push_back({"aggregation-over-scalar",
                            "aggregation over scalar: \"" + e.reference + "\" is single-valued from '" + ctx_.anchor +
                                "'",
                            e.reference});
            return ExprType::Unknown;
        }
        if (!in_aggregate && !single) {
            out_.push_back({"multi-valued-reference",
                            "\"" + e.reference + "\" is multi-valued from '" + ctx_.anchor + "'; wrap it in an aggregation",
                            e.reference});
            return ExprType::Unknown;
        }
        return from_attribute_type(resolved->attribute.type);
    }

    ExprType mismatch(const std::string& message)
    {
        out_.push_back({"type-mismatch", message, ""});
        return ExprType::Unknown;
    }

    const EvaluationContext& ctx_;
    std::vector<Diagnostic>& out_;
};

} // namespace

std::vector<Diagnostic> validate(const ExpressionTree& tree, const EvaluationContext& ctx)
{
    std::vector<Diagnostic> out;
    if (!ctx.graph || !ctx.graph->find_class(ctx.anchor)) {
        out.push_back({"unknown-anchor", "anchor class '" + ctx.anchor + "' does not exist", ""});
        return out;
    }
    Checker(ctx, out).check(tree.root());
    return out;
}

ExprType infer_type(const ExpressionTree& tree, const EvaluationContext& ctx)
{
    std::vector<Diagnostic> out;
    if (!ctx.graph || !ctx.graph->find_class(ctx.anchor))
        return ExprType::Unknown;
    auto t = Checker(ctx, out).check(tree.root());
    return out.empty() ? t : ExprType::Unknown;
}

// ---------------------------------------------------------------------------------------
// Evaluation

namespace {

Value numeric_result(Op op, const Value& a, const Value& b)
{
    if (op != Op::Divide && a.is<std::int64_t>() && b.is<std::int64_t>()) {
        std::int64_t x = a.as<std::int64_t>(), y = b.as<std::int64_t>(), r = 0;
        bool overflow = false;
        switch (op) {
        case Op::Add: overflow = __builtin_add_overflow(x, y, &r); break;
        case Op::Subtract: overflow = __builtin_sub_overflow(x, y, &r); break;
        default: overflow = __builtin_mul_overflow(x, y, &r); break;
        }
        if (overflow)
            throw Error(ErrorKind::Overflow, "integer overflow in '" + std::string(infix_symbol(op)) + "'");
        return r;
    }
    Decimal x = a.to_decimal(), y = b.to_decimal();
    switch (op) {
    case Op::Add: return x + y;
    case Op::Subtract: return x - y;
    case Op::Multiply: return x * y;
    default: return Decimal::divide(x, y);
    }
}

/// -1, 0, 1; throws TypeMismatch for incomparable operands.
int compare_values(const Value& a, const Value& b, bool equality)
{
    if (a.is_numeric() && b.is_numeric()) {
        auto c = a.to_decimal() <=> b.to_decimal();
        return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    if (a.data.index() != b.data.index())
        throw Error(ErrorKind::TypeMismatch,
                    "type mismatch: cannot compare " + a.to_display() + " with " + b.to_display());
    if (a.is<std::string>())
        return a.as<std::string>() < b.as<std::string>() ? -1 : (a.as<std::string>() == b.as<std::string>() ? 0 : 1);
    if (a.is<Date>())
        return a.as<Date>() < b.as<Date>() ? -1 : (a.as<Date>() == b.as<Date>() ? 0 : 1);
    if (!equality)
        throw Error(ErrorKind::TypeMismatch, "type mismatch: " + a.to_display() + " is not ordered");
    return a == b ? 0 : 1;
}

class Evaluator {
public:
    explicit Evaluator(const Binding& binding) : binding_(binding) {}

    Value eval(const Expr& e)
    {
        switch (e.kind) {
        case NodeKind::Literal: return e.literal;
        case NodeKind::Reference: {
            const auto& values = lookup(e.reference);
            if (values.size() > 1)
                throw Error(ErrorKind::TypeMismatch,
                            "type mismatch: \"" + e.reference + "\" is multi-valued outside an aggregation");
            return values.empty() ? Value{} : values.front();
        }
        case NodeKind::Operator: break;
        }
        if (is_aggregation(e.op))
            return aggregate(e.op, lookup(e.children[0].reference));

        std::vector<Value> args;
        args.reserve(e.children.size());
        for (const auto& c : e.children) {
            args.push_back(eval(c));
            if (args.back().is_null())
                throw Error(ErrorKind::NullOperand,
                            "null operand for '" + std::string(function_name(e.op)) + "'");
        }
        if (is_arithmetic(e.op)) {
            if (!args[0].is_numeric() || !args[1].is_numeric())
                throw Error(ErrorKind::TypeMismatch,
                            "type mismatch: '" + std::string(infix_symbol(e.op)) + "' needs numbers");
            return numeric_result(e.op, args[0], args[1]);
        }
        if (is_logical(e.op)) {
            for (const auto& a : args)
                if (!a.is<bool>())
                    throw Error(ErrorKind::TypeMismatch, "type mismatch: " + a.to_display() + " is not boolean");
            if (e.op == Op::Not)
                return !args[0].as<bool>();
            bool conj = e.op == Op::And;
            bool acc = conj;
            for (const auto& a : args)
                acc = conj ? (acc && a.as<bool>()) : (acc || a.as<bool>());
            return acc;
        }
        if (is_comparison(e.op)) {
            int c = compare_values(args[0], args[1], e.op == Op::Equal);
            return e.op == Op::Equal ? c == 0 : (e.op == Op::Greater ? c > 0 : c < 0);
        }
        if (!args[0].is<Date>())
            throw Error(ErrorKind::TypeMismatch, "type mismatch: " + args[0].to_display() + " is not a date");
        Date d = args[0].as<Date>();
        switch (e.op) {
        case Op::DayLabel: return day_label(d);
        case Op::Month: return std::int64_t{d.month()};
        case Op::Quarter: return std::int64_t{(d.month() + 2) / 3};
        default: return std::int64_t{d.year()};
        }
    }

private:
    const std::vector<Value>& lookup(const std::string& reference) const
    {
        auto it = binding_.find(reference);
        if (it == binding_.end())
            throw Error(ErrorKind::UnresolvedReference, "binding supplies no value for \"" + reference + "\"");
        return it->second;
    }

    static Value aggregate(Op op, const std::vector<Value>& all)
    {
        std::vector<Value> values;
        for (const auto& v : all)
            if (!v.is_null())
                values.push_back(v);
        if (op == Op::Count)
            return static_cast<std::int64_t>(values.size());
        if (values.empty()) {
            if (op == Op::Sum)
                return std::int64_t{0};
            throw Error(ErrorKind::EmptyAggregate,
                        "'" + std::string(function_name(op)) + "' over an empty collection");
        }
        if (op == Op::Sum || op == Op::Average) {
            Value acc = values.front();
            if (!acc.is_numeric())
                throw Error(ErrorKind::TypeMismatch, "type mismatch: cannot sum " + acc.to_display());
            for (std::size_t i = 1; i < values.size(); ++i) {
                if (!values[i].is_numeric())
                    throw Error(ErrorKind::TypeMismatch, "type mismatch: cannot sum " + values[i].to_display());
                acc = numeric_result(Op::Add, acc, values[i]);
            }
            if (op == Op::Sum)
                return acc;
            return Decimal::divide(acc.to_decimal(), Decimal(static_cast<std::int64_t>(values.size())));
        }
        Value best = values.front();
        for (std::size_t i = 1; i < values.size(); ++i) {
            int c = compare_values(values[i], best, false);
            if ((op == Op::Min && c < 0) || (op == Op::Max && c > 0))
                best = values[i];
        }
        return best;
    }

    const Binding& binding_;
};

} // namespace

Value evaluate(const ExpressionTree& tree, const Binding& binding)
{
    return Evaluator(binding).eval(tree.root());
}

std::string day_label(Date date)
{
    static constexpr std::array<const char*, 7> kNames{"Sunday",   "Monday", "Tuesday", "Wednesday",
                                                       "Thursday", "Friday", "Saturday"};
    return kNames[date.weekday()];
}

std::vector<NamedFormula> derive_date_parameters(const EvaluationContext& ctx, std::string_view reference)
{
    auto resolved = resolve_reference(ctx, reference);
    if (!resolved)
        throw Error(ErrorKind::UnresolvedReference, "unresolvable reference \"" + std::string(reference) + "\"");
    if (resolved->attribute.type.kind != TypeKind::Date)
        throw Error(ErrorKind::NotDateOrAddress, "\"" + std::string(reference) + "\" is a " +
                                                     resolved->attribute.type.to_string() + ", not a date");
    auto part = [&](Op op) { return ExpressionTree(Expr::make(op, {Expr::ref(std::string(reference))})); };
    return {
        {"Libelle_jour", part(Op::DayLabel)},
        {"Mois", part(Op::Month)},
        {"Trimestre", part(Op::Quarter)},
        {"Annee", part(Op::Year)},
    };
}

} // namespace dw
