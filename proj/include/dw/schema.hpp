#pragma once

#include "dw/value.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

enum class TypeKind { String, Integer, Decimal, Boolean, Date, Tuple, Set, List };

std::string_view to_string(TypeKind kind);

struct TypeComponent;

/// Attribute type: one of the simple kinds, or a tuple/set/list constructor over other types.
struct AttributeType {
    TypeKind kind = TypeKind::String;
    std::vector<TypeComponent> components;         // Tuple only
    std::shared_ptr<const AttributeType> element;  // Set and List only

    static AttributeType simple(TypeKind kind);
    static AttributeType tuple(std::vector<TypeComponent> components);
    static AttributeType set_of(AttributeType element);
    static AttributeType list_of(AttributeType element);

    bool is_simple() const noexcept { return kind < TypeKind::Tuple; }
    bool is_numeric() const noexcept { return kind == TypeKind::Integer || kind == TypeKind::Decimal; }

    /// e.g. `tuple(rue: string, ville: string)`, `set(integer)`.
    std::string to_string() const;

    friend bool operator==(const AttributeType& a, const AttributeType& b);
};

struct TypeComponent {
    std::string name;
    AttributeType type;

    friend bool operator==(const TypeComponent&, const TypeComponent&) = default;
};

/// Declared meaning of an attribute beyond its storage type; drives date/geographic
/// dimension creation in marts.
enum class Semantic { None, Date, Address };

struct Attribute {
    std::string name;
    AttributeType type;
    Semantic semantic = Semantic::None;

    friend bool operator==(const Attribute&, const Attribute&) = default;
};

struct ClassDef {
    std::string name;
    std::vector<Attribute> attributes;
    std::vector<std::string> operations;  // inert signatures, never executed

    const Attribute* find_attribute(std::string_view attr) const;

    friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

enum class LinkKind { Association, Composition, Inheritance };

std::string_view to_string(LinkKind kind);
std::optional<LinkKind> parse_link_kind(std::string_view text);

struct Cardinality {
    std::uint32_t min = 0;
    bool max_one = false;  // max is either 1 or many

    friend bool operator==(const Cardinality&, const Cardinality&) = default;
};

struct LinkCardinality {
    Cardinality source;
    Cardinality target;

    friend bool operator==(const LinkCardinality&, const LinkCardinality&) = default;
};

/// Directed semantic link. Inheritance links point from sub-class to super-class;
/// composition links point from the composite to its component.
struct Link {
    std::string name;
    LinkKind kind = LinkKind::Association;
    std::string source;
    std::string target;
    std::optional<LinkCardinality> cardinality;  // absent for inheritance

    bool target_max_one() const { return cardinality && cardinality->target.max_one; }
    bool source_max_one() const { return cardinality && cardinality->source.max_one; }

    friend bool operator==(const Link&, const Link&) = default;
};

struct Neighbor {
    Link link;
    ClassDef klass;  // the opposite endpoint
    bool outgoing = true;
};

/// Classes and links of one level (source, warehouse or mart). Class and link order is
/// preserved from construction and is significant for deterministic output.
struct SchemaGraph {
    std::vector<ClassDef> classes;
    std::vector<Link> links;

    const ClassDef* find_class(std::string_view name) const;
    ClassDef* find_class(std::string_view name);
    const Link* find_link(std::string_view name) const;

    /// Throws Error(UnknownClass) when absent.
    const ClassDef& require_class(std::string_view name) const;

    /// Direct super-classes, in link order.
    std::vector<std::string> superclasses(std::string_view cls) const;
    /// Transitive super-classes, nearest first, without duplicates.
    std::vector<std::string> ancestors(std::string_view cls) const;
    /// Transitive sub-classes, without duplicates.
    std::vector<std::string> descendants(std::string_view cls) const;
    bool is_a(std::string_view cls, std::string_view ancestor) const;

    /// Own attributes preceded by inherited ones (farthest ancestor first).
    std::vector<Attribute> all_attributes(std::string_view cls) const;

    /// Looks up `attr` on `cls` or its ancestors. When `lenient`, a name without the
    /// warehouse kind prefix also matches a unique `D_`/`C_`/`S_`-prefixed attribute.
    std::optional<Attribute> resolve_attribute(std::string_view cls, std::string_view attr, bool lenient = true) const;

    /// Checks every structural invariant; throws Error naming the first violation.
    void validate() const;

    friend bool operator==(const SchemaGraph&, const SchemaGraph&) = default;
};

/// Links incident to `cls` (optionally of one kind) paired with their opposite endpoint.
/// Throws Error(UnknownClass).
std::vector<Neighbor> neighbors(const SchemaGraph& graph, std::string_view cls,
                                std::optional<LinkKind> kind = std::nullopt);

/// One extracted source object.
struct ObjectSnapshot {
    std::string id;
    std::string class_name;
    std::map<std::string, Value> values;
    std::map<std::string, std::vector<std::string>> links;
    Timestamp extracted_at;

    friend bool operator==(const ObjectSnapshot&, const ObjectSnapshot&) = default;
};

/// One hop of a navigation from one class to another.
struct NavStep {
    std::string link;
    LinkKind kind = LinkKind::Association;
    bool forward = true;  // traversed from link source to link target
    std::string from;
    std::string to;
    bool to_one = true;

    friend bool operator==(const NavStep&, const NavStep&) = default;
};

struct NavigationPath {
    std::vector<NavStep> steps;

    /// True when every hop reaches at most one object.
    bool single_valued() const;

    friend bool operator==(const NavigationPath&, const NavigationPath&) = default;
};

/// Shortest link walk from `from` to `to` over all link kinds in both directions, first
/// found in link order. Inheritance hops stay on the same object. Empty path when
/// `from == to`; nullopt when unreachable.
std::optional<NavigationPath> find_path(const SchemaGraph& graph, std::string_view from, std::string_view to);

/// Whether `value` conforms to `type` (absent values conform to every type).
bool conforms(const Value& value, const AttributeType& type);

} // namespace dw
