#pragma once

#include "dw/expression.hpp"
#include "dw/schema.hpp"
#include "dw/schema_io.hpp"
#include "dw/temporal.hpp"
#include "dw/warehouse.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dw {

// ---------------------------------------------------------------------------------------
// Class dependencies

enum class DependencyRule { Reflexive, Association, Inheritance, Composition, Transitive };

std::string_view to_string(DependencyRule rule);

/// One application of a direct rule.
struct DependencyStep {
    std::string from;
    std::string to;
    std::string link;  // empty for Reflexive
    bool forward = true;  // link traversed from its source to its target
    DependencyRule rule = DependencyRule::Reflexive;

    friend bool operator==(const DependencyStep&, const DependencyStep&) = default;
};

/// `from` => `to`, witnessed by a chain of direct steps (one step unless Transitive).
struct ClassDependency {
    std::string from;
    std::string to;
    DependencyRule witness = DependencyRule::Reflexive;
    std::vector<DependencyStep> chain;

    friend bool operator==(const ClassDependency&, const ClassDependency&) = default;
};

/// The four direct rules: outgoing association whose target end has max 1; inheritance
/// in either direction; composition from composite to component, and from component to
/// composite when the composite end has max 1; reflexivity. First witness in link order.
/// Throws Error(UnknownClass).
std::vector<ClassDependency> direct_dependencies(const SchemaGraph& graph, std::string_view cls);

/// Least fixpoint of the direct rules under transitivity, with shortest witness chains,
/// in breadth-first discovery order (`cls` itself first).
std::vector<ClassDependency> transitive_dependencies(const SchemaGraph& graph, std::string_view cls);

/// True when every step of the chain is a valid direct-rule application and the steps
/// connect `dep.from` to `dep.to`.
bool replay_witness(const SchemaGraph& graph, const ClassDependency& dep);

NavigationPath chain_path(const SchemaGraph& graph, const std::vector<DependencyStep>& chain);

json dependency_to_json(const ClassDependency& dep);

// ---------------------------------------------------------------------------------------
// Representative classes

struct RepresentativeScore {
    std::string class_name;
    Decimal score;  // mean inserted objects per run, first run excluded

    friend bool operator==(const RepresentativeScore&, const RepresentativeScore&) = default;
};

struct RepresentativeReport {
    std::vector<RepresentativeScore> ranking;  // descending score, ties by name
    std::vector<std::string> recommended;      // positive scores only
    std::vector<std::string> diagnostics;
};

/// Scores come from the insert counters of runs 2..n (the first run loads everything).
RepresentativeReport detect_representative_classes(const WarehouseDef& wh, const std::vector<ExtractionRun>& runs);

// ---------------------------------------------------------------------------------------
// Mart definition

enum class MemberKind { Stored, Calculated };

struct MartAttribute {
    std::string name;
    MemberKind kind = MemberKind::Stored;
    std::string source_attribute;           // Stored: warehouse attribute of the origin class
    std::optional<ExpressionTree> formula;  // Calculated
    AttributeType type;

    friend bool operator==(const MartAttribute&, const MartAttribute&) = default;
};

struct FactClass {
    std::string name;
    std::string warehouse_class;
    std::vector<MartAttribute> measures;
    std::optional<ExpressionTree> selection;

    friend bool operator==(const FactClass&, const FactClass&) = default;
};

/// Edges (from, to) read "from => to": every value of `from` determines one value of `to`.
struct HierarchyGraph {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;

    friend bool operator==(const HierarchyGraph&, const HierarchyGraph&) = default;
};

enum class DimensionOrigin { Class, DateAttribute, AddressAttribute, Specialization };

std::string_view to_string(DimensionOrigin origin);

struct DimensionClass {
    std::string name;
    DimensionOrigin origin = DimensionOrigin::Class;
    std::string warehouse_class;  // dependent class, or the class owning the attribute
    std::string attribute;        // date/address origin only
    std::vector<DependencyStep> path;  // from the fact class to warehouse_class
    std::vector<MartAttribute> parameters;  // own parameters (a specialization adds to its parent's)
    HierarchyGraph hierarchy;               // own edges
    std::string parent;                     // Specialization only
    std::optional<ExpressionTree> membership;
    std::optional<ExpressionTree> selection;

    friend bool operator==(const DimensionClass&, const DimensionClass&) = default;
};

struct MartDef {
    std::string name;
    std::set<std::string> flagged;  // warehouse classes flagged representative
    std::optional<FactClass> fact;
    std::vector<DimensionClass> dimensions;

    const DimensionClass* find_dimension(std::string_view name) const;

    /// Star schema: fact, dimensions, a (1,1) association per fact-adjacent dimension and an
    /// inheritance link per specialization.
    SchemaGraph schema() const;

    friend bool operator==(const MartDef&, const MartDef&) = default;
};

/// Parameters of `dim` including inherited ones (parent's first).
std::vector<MartAttribute> all_parameters(const MartDef& mart, const DimensionClass& dim);
/// Hierarchy edges of `dim` including inherited ones.
HierarchyGraph full_hierarchy(const MartDef& mart, const DimensionClass& dim);

/// Class a formula attached to `target` (fact or dimension name) is anchored on.
std::string anchor_of(const MartDef& mart, std::string_view target);

MartDef flag_representative(const MartDef& mart, const WarehouseDef& wh, std::string_view cls);

/// Throws Error(NotRepresentative) unless flagged, Error(FactExists) on a second fact.
/// Complex-typed attributes are skipped with one diagnostic each.
MartDef project_fact(const MartDef& mart, const WarehouseDef& wh, std::string_view cls, std::string_view name,
                     std::vector<std::string>* diagnostics = nullptr);

/// `cls` must be in transitive_dependencies(fact class). Throws Error(NotDependent).
MartDef project_dimension(const MartDef& mart, const WarehouseDef& wh, std::string_view cls,
                          std::string_view name = {});
/// Time dimension (date-typed or date-tagged attribute) or geographic dimension
/// (address-tagged attribute) of a dependent class. Throws Error(NotDateOrAddress).
MartDef project_dimension_from_attribute(const MartDef& mart, const WarehouseDef& wh, std::string_view cls,
                                         std::string_view attr, std::string_view name = {});
/// Every dependent class not yet projected, in discovery order, the fact class excluded.
MartDef project_all_dependents(const MartDef& mart, const WarehouseDef& wh);

MartDef specialize_dimension(const MartDef& mart, const WarehouseDef& wh, std::string_view parent,
                             std::string_view name, std::string_view warehouse_class,
                             const std::vector<std::string>& extra_attributes,
                             std::optional<ExpressionTree> membership);

MartDef add_measure(const MartDef& mart, const WarehouseDef& wh, std::string_view name, const ExpressionTree& formula,
                    std::string_view anchor = {});
MartDef add_parameter(const MartDef& mart, const WarehouseDef& wh, std::string_view dimension, std::string_view name,
                      const ExpressionTree& formula, std::string_view anchor = {});
MartDef select_objects(const MartDef& mart, const WarehouseDef& wh, std::string_view target,
                       std::optional<ExpressionTree> predicate);

/// Replaces the own hierarchy of `dimension`. Throws Error(HierarchyCycle) naming the cycle
/// and Error(UnknownAttribute) for edges over non-parameters.
MartDef set_hierarchy(const MartDef& mart, std::string_view dimension,
                      const std::vector<std::pair<std::string, std::string>>& edges);
MartDef add_hierarchy_edge(const MartDef& mart, std::string_view dimension, std::string_view from,
                           std::string_view to);
MartDef remove_hierarchy_edge(const MartDef& mart, std::string_view dimension, std::string_view from,
                              std::string_view to);

/// Throws Error(ClosureViolation) when a dimension is not fact-adjacent through exactly
/// one (1,1) link or an inheritance edge from another dimension, or a measure is complex.
void check_star(const MartDef& mart);

// ---------------------------------------------------------------------------------------
// Hierarchy inference

using Row = std::map<std::string, Value>;

/// Whether `from` functionally determines `to` on `rows`.
bool fd_holds(const std::vector<Row>& rows, const std::string& from, const std::string& to);

/// Exact FD mining over `columns`: A => B iff A -> B holds and B -> A fails, then the
/// transitive reduction. Throws Error(EmptySample).
HierarchyGraph infer_hierarchy(const std::vector<std::string>& columns, const std::vector<Row>& rows);

/// Edges of `graph` whose FD fails on `rows`.
std::vector<std::string> hierarchy_warnings(const HierarchyGraph& graph, const std::vector<Row>& rows);

// ---------------------------------------------------------------------------------------
// Mart load

struct FactRow {
    std::string id;
    Row measures;
    std::map<std::string, std::optional<std::string>> dimensions;  // dimension -> key
};

struct DimensionRow {
    std::string key;
    Row parameters;
};

struct MartData {
    std::vector<FactRow> facts;
    std::map<std::string, std::vector<DimensionRow>> dimensions;
};

/// Builds the star from the latest warehouse states. Throws Error(AmbiguousPath) when a
/// fact object reaches several objects of one dimension, Error(NoFactClass).
MartData load_mart(const MartDef& mart, const WarehouseDef& wh, const StoreState& store);

/// Simple-typed parameter columns of one dimension over its loaded rows.
std::vector<Row> dimension_sample(const MartDef& mart, const MartData& data, std::string_view dimension,
                                  std::vector<std::string>* columns);

std::string export_fact(const MartData& data);
std::string export_dimension(const MartData& data, std::string_view dimension);

json mart_to_json(const MartDef& mart);
MartDef mart_from_json(const json& j);
json hierarchy_to_json(const HierarchyGraph& h);

} // namespace dw
