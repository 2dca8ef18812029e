#pragma once

#include "dw/mart.hpp"
#include "dw/schema.hpp"
#include "dw/schema_io.hpp"
#include "dw/temporal.hpp"
#include "dw/warehouse.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

enum class Target { NeutralPlan, Sql };

std::string_view to_string(Target target);  // "neutral-plan", "generic-sql"
/// Accepts "neutral-plan", "sql" and "generic-sql".
std::optional<Target> parse_target(std::string_view text);

struct PlanStep {
    std::string id;
    std::string kind;
    json params;
    std::string provenance;  // the definition element the step comes from

    friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

/// Ordered steps; a step only references structures created by earlier steps.
struct EmissionPlan {
    Target target = Target::NeutralPlan;
    std::vector<PlanStep> steps;

    friend bool operator==(const EmissionPlan&, const EmissionPlan&) = default;
};

/// Tables for classes (tuples flattened into underscore-path columns), child tables for
/// set/list attributes, history tables with (object_id, state_id, start, end), link
/// tables, then foreign keys. Throws Error(UnvalidatedDefinition).
EmissionPlan emit_structure(const WarehouseDef& wh, Target target);
/// Fact table with one foreign key per fact-adjacent dimension; specializations keyed on
/// their parent dimension.
EmissionPlan emit_structure(const MartDef& mart, Target target);

/// Refresh procedure: extract, filter, derive and compute, restrict links, detect change,
/// overwrite (specific attributes preserved), append attribute history, append class
/// states, tombstone, record the run. With an empty store it is the initial load.
/// Throws Error(UnvalidatedDefinition).
EmissionPlan emit_refresh(const WarehouseDef& wh, const SchemaGraph& source, Target target);

json plan_to_json(const EmissionPlan& plan);
EmissionPlan plan_from_json(const json& j);

/// Neutral target: the JSON document. SQL target: statements, each terminated by ";\n".
std::string render(const EmissionPlan& plan);

/// Quoted SQL identifier, truncated at 63 characters.
std::string quote_identifier(std::string_view name);

/// Runs a neutral refresh plan over snapshot batches, keeping its own tables. Each run is
/// atomic: a failing step leaves the tables as they were before the run.
class PlanExecutor {
public:
    /// Throws Error(ExecutionFailed) for a plan that is not a refresh plan.
    PlanExecutor(EmissionPlan plan, SchemaGraph source);

    /// Throws Error(ExecutionFailed) naming the failing step.
    void run(const std::vector<ObjectSnapshot>& snapshots, Timestamp date);

    /// Same record layout as export_history.
    std::string history_jsonl() const;
    const std::vector<ExtractionRun>& runs() const noexcept { return tables_.runs; }

private:
    struct StateRow {
        std::int64_t state_id = 0;
        std::map<std::string, Value> values;
        std::map<std::string, std::vector<std::string>> links;
        Timestamp start;
        std::optional<Timestamp> end;
        std::int64_t run = 0;
    };
    struct AttributeRow {
        Value value;
        Timestamp start;
        std::int64_t run = 0;
    };
    struct BaseRow {
        std::string class_name;
        std::map<std::string, Value> values;
        std::map<std::string, std::vector<std::string>> links;
        bool present = true;
    };
    struct Tables {
        std::map<std::string, BaseRow> base;
        std::map<std::string, std::vector<StateRow>> states;
        std::map<std::string, std::map<std::string, std::vector<AttributeRow>>> attributes;
        std::vector<ExtractionRun> runs;
    };

    EmissionPlan plan_;
    SchemaGraph source_;
    Tables tables_;
};

} // namespace dw
