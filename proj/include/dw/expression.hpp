#pragma once

#include "dw/schema.hpp"
#include "dw/value.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

enum class Op {
    // scalar arithmetic
    Add,
    Subtract,
    Multiply,
    Divide,
    // aggregation over a multi-valued path
    Sum,
    Average,
    Count,
    Min,
    Max,
    // selection
    And,
    Or,
    Not,
    Equal,
    Greater,
    Less,
    // date parts
    DayLabel,
    Month,
    Quarter,
    Year,
};

std::string_view function_name(Op op);
bool is_aggregation(Op op);
bool is_arithmetic(Op op);
bool is_comparison(Op op);
bool is_logical(Op op);
bool is_date_part(Op op);

enum class NodeKind { Literal, Reference, Operator };

/// One node of a formula tree. Children are owned by value.
struct Expr {
    NodeKind kind = NodeKind::Literal;
    Op op = Op::Add;
    Value literal;
    std::string reference;  // verbatim "Class.Attribute" (or bare "Attribute")
    std::vector<Expr> children;

    static Expr lit(Value v);
    static Expr ref(std::string qualified);
    static Expr make(Op op, std::vector<Expr> children);

    friend bool operator==(const Expr&, const Expr&) = default;
};

enum class TreeKind { Calculation, Selection };

/// A validated-shape formula: arity rules hold and aggregations wrap a reference.
class ExpressionTree {
public:
    ExpressionTree() : ExpressionTree(Expr::lit(Value{true})) {}
    /// Throws Error(ArityViolation) when the shape rules are broken.
    explicit ExpressionTree(Expr root);

    const Expr& root() const noexcept { return root_; }
    TreeKind kind() const noexcept { return kind_; }
    /// Canonical text.
    std::string text() const;
    /// Distinct references in first-occurrence order.
    std::vector<std::string> references() const;

    friend bool operator==(const ExpressionTree& a, const ExpressionTree& b) { return a.root_ == b.root_; }

private:
    Expr root_;
    TreeKind kind_;
};

/// Parses the textual formula grammar:
///   or-expr   := and-expr ("or" and-expr)*
///   and-expr  := not-expr ("and" not-expr)*
///   not-expr  := "not" not-expr | comparison
///   comparison:= additive (("=" | ">" | "<") additive)?
///   additive  := term (("+" | "-") term)*
///   term      := unary (("*" | "/") unary)*
///   primary   := number | date | 'string' | "Class.Attribute" | true | false
///              | name "(" args ")" | "(" or-expr ")"
/// Throws Error(SyntaxError) with the byte offset, Error(UnknownOperator), or
/// Error(ArityViolation).
ExpressionTree parse_formula(std::string_view text);

/// Canonical printing; `print_formula(parse_formula(t)) == t` for canonical `t`.
std::string print_formula(const Expr& expr);

struct QualifiedName {
    std::string class_name;  // empty when unqualified
    std::string attribute;
};

/// Splits at the first '.'.
QualifiedName split_reference(std::string_view reference);

/// Static type of a formula node.
enum class ExprType { Unknown, Boolean, Integer, Decimal, String, Date, Complex };

std::string_view to_string(ExprType type);
std::optional<AttributeType> to_attribute_type(ExprType type);

struct Diagnostic {
    std::string kind;  // "unresolvable-reference", "aggregation-over-scalar", ...
    std::string message;
    std::string reference;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Where references are resolved from: the anchor class and the schema it lives in.
struct EvaluationContext {
    const SchemaGraph* graph = nullptr;
    std::string anchor;
};

/// A reference resolved against a context.
struct ResolvedReference {
    std::string reference;
    std::string class_name;
    Attribute attribute;  // the schema attribute actually read
    NavigationPath path;  // from the anchor to class_name
};

/// Resolves one reference; nullopt when the class is unreachable or lacks the attribute.
std::optional<ResolvedReference> resolve_reference(const EvaluationContext& ctx, std::string_view reference);

/// Empty iff every reference resolves by link navigation from the anchor, aggregations
/// wrap only multi-valued paths, scalar uses stay on single-valued paths, and operand
/// types fit their operators.
std::vector<Diagnostic> validate(const ExpressionTree& tree, const EvaluationContext& ctx);

/// Result type of a tree under `ctx` (Unknown when validation would fail).
ExprType infer_type(const ExpressionTree& tree, const EvaluationContext& ctx);

/// Values reachable per reference text for one anchor object. A single-valued reference
/// maps to zero or one value; a multi-valued one to any number.
using Binding = std::map<std::string, std::vector<Value>, std::less<>>;

/// Evaluates `tree` over `binding`. Throws Error(DivisionByZero | NullOperand |
/// EmptyAggregate | TypeMismatch | Overflow | UnresolvedReference).
Value evaluate(const ExpressionTree& tree, const Binding& binding);

/// English weekday name, "Sunday" ... "Saturday".
std::string day_label(Date date);

struct NamedFormula {
    std::string name;
    ExpressionTree formula;

    friend bool operator==(const NamedFormula&, const NamedFormula&) = default;
};

/// The four calendar parameters of a date attribute, in order: Libelle_jour (weekday
/// name), Mois (month), Trimestre (quarter = ceil(month/3)), Annee (year).
/// Throws Error(NotDateOrAddress) when the reference is not date-typed in `ctx`.
std::vector<NamedFormula> derive_date_parameters(const EvaluationContext& ctx, std::string_view reference);

} // namespace dw
