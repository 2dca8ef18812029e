#pragma once

#include "dw/binding.hpp"
#include "dw/expression.hpp"
#include "dw/schema.hpp"
#include "dw/schema_io.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

enum class AttributeKind { Derived, Calculated, Specific };

std::string_view to_string(AttributeKind kind);
std::string_view kind_prefix(AttributeKind kind);  // "D_", "C_", "S_"
std::optional<AttributeKind> parse_attribute_kind(std::string_view text);

/// Adds the kind prefix unless `name` already carries it.
std::string prefixed(AttributeKind kind, std::string_view name);
/// Drops a leading "D_", "C_" or "S_".
std::string strip_kind_prefix(std::string_view name);

struct WarehouseAttribute {
    std::string name;
    AttributeKind kind = AttributeKind::Derived;
    std::string source_attribute;          // Derived
    std::optional<ExpressionTree> formula; // Calculated
    AttributeType type;
    Semantic semantic = Semantic::None;
    Value default_value;                   // Specific
    std::vector<WarehouseAttribute> components;  // non-empty iff produced by group

    friend bool operator==(const WarehouseAttribute&, const WarehouseAttribute&) = default;
};

struct DerivedClass {
    std::string name;
    std::string source_class;
    std::optional<ExpressionTree> selection;
    std::vector<WarehouseAttribute> attributes;
    std::vector<std::string> operations;
    /// Empty when projected explicitly, otherwise the closure rule that pulled it in
    /// ("superclass of X", "component of X").
    std::string closure_reason;

    const WarehouseAttribute* find_attribute(std::string_view attr) const;

    friend bool operator==(const DerivedClass&, const DerivedClass&) = default;
};

struct Environment {
    std::string name;
    std::vector<std::string> classes;
    std::vector<std::string> links;

    friend bool operator==(const Environment&, const Environment&) = default;
};

/// The warehouse definition: derived classes over one source schema, projected links,
/// historization marks and environments. Value type; every operation returns a new one.
struct WarehouseDef {
    std::vector<DerivedClass> classes;
    std::vector<Link> links;  // names equal to the source link names
    std::set<std::pair<std::string, std::string>> historized_attributes;  // (class, attribute)
    std::set<std::string> historized_classes;
    std::vector<Environment> environments;

    const DerivedClass* find_class(std::string_view name) const;
    const DerivedClass* find_by_source(std::string_view source_class) const;
    const DerivedClass& require_class(std::string_view name) const;

    /// The derived-class schema graph.
    SchemaGraph schema() const;

    /// Class-level historization, directly or through an environment.
    bool class_historized(std::string_view cls) const;
    bool attribute_historized(std::string_view cls, std::string_view attr) const;
    const Environment* environment_of(std::string_view cls) const;

    friend bool operator==(const WarehouseDef&, const WarehouseDef&) = default;
};

WarehouseDef project_class(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls);
/// Rejected while another class inherits from or is composed of `cls`.
WarehouseDef delete_class(const WarehouseDef& wh, std::string_view cls);

/// `predicate` must be boolean and read only attributes of the source class (own or
/// inherited). Passing nullopt clears the selection.
WarehouseDef set_selection(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls,
                           std::optional<ExpressionTree> predicate);

WarehouseDef add_specific_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view name,
                                    const AttributeType& type, const Value& default_value = {});
WarehouseDef add_calculated_attribute(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls,
                                      std::string_view name, const ExpressionTree& formula);

WarehouseDef rename_class(const WarehouseDef& wh, std::string_view cls, std::string_view new_name);
WarehouseDef rename_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr,
                              std::string_view new_name);
WarehouseDef delete_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr);
/// Replaces >= 2 contiguous attributes of one kind by a tuple attribute at their position.
WarehouseDef group_attributes(const WarehouseDef& wh, std::string_view cls, const std::vector<std::string>& attrs,
                              std::string_view tuple_name);
/// Inverse of group_attributes.
WarehouseDef split_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr);

WarehouseDef mark_attribute_historized(const WarehouseDef& wh, std::string_view cls, std::string_view attr);
WarehouseDef mark_class_historized(const WarehouseDef& wh, std::string_view cls);
WarehouseDef create_environment(const WarehouseDef& wh, std::string_view name, const std::vector<std::string>& classes,
                                const std::vector<std::string>& links);
WarehouseDef delete_environment(const WarehouseDef& wh, std::string_view name);

/// Non-fatal findings about a definition, e.g. attribute history made redundant by
/// class-level historization.
std::vector<std::string> warehouse_warnings(const WarehouseDef& wh);

/// Throws Error(ClosureViolation) naming the first missing super-class/component or
/// dangling link.
void check_closure(const WarehouseDef& wh, const SchemaGraph& source);

/// One extracted warehouse object (latest values only).
struct ExtractedObject {
    std::string id;
    std::string class_name;
    std::map<std::string, Value> values;  // derived and calculated attributes
    std::map<std::string, std::vector<std::string>> links;
    std::vector<std::string> source_refs;

    friend bool operator==(const ExtractedObject&, const ExtractedObject&) = default;
};

/// Applies the view to a source extension: places every snapshot in the nearest projected
/// class of its inheritance chain, filters by that class's selection, computes derived and
/// calculated values, and keeps links whose targets were extracted. Sorted by id.
std::vector<ExtractedObject> extract(const WarehouseDef& wh, const SchemaGraph& source,
                                     const std::vector<ObjectSnapshot>& snapshots);

/// Value of a (possibly grouped) non-specific attribute for one source object.
Value attribute_value(const WarehouseAttribute& attr, const ObjectIndex& index, const EvaluationContext& ctx,
                      std::string_view object_id);

json warehouse_to_json(const WarehouseDef& wh);
WarehouseDef warehouse_from_json(const json& j);
json warehouse_attribute_to_json(const WarehouseAttribute& attr);

} // namespace dw
