#pragma once

#include "dw/schema.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

using json = nlohmann::json;

json type_to_json(const AttributeType& type);
AttributeType type_from_json(const json& j);

/// Decimals are written as JSON strings so that no digit is lost; dates as `YYYY-MM-DD`;
/// tuples as objects; sets and lists as arrays.
json value_to_json(const Value& value);
/// Throws Error(TypeMismatch) when `j` does not conform to `type`.
Value value_from_json(const json& j, const AttributeType& type);

/// "date", "address", or "" for none.
std::string semantic_to_string(Semantic s);
std::optional<Semantic> parse_semantic(std::string_view text);

json link_to_json(const Link& link);
Link link_from_json(const json& j);

json schema_to_json(const SchemaGraph& graph);
/// Builds and validates a graph from its JSON form.
SchemaGraph schema_from_json(const json& j);

/// Parses the schema file format (`{"classes": [...], "links": [...]}`) and validates it.
SchemaGraph load_schema(std::string_view document);
/// Deterministic text form; `load_schema(serialize_schema(g)) == g` for valid graphs.
std::string serialize_schema(const SchemaGraph& graph);

/// Object id -> class name of objects loaded by earlier batches.
using KnownObjects = std::map<std::string, std::string>;

/// Parses and type-checks an instance document (`{"objects": [...]}`). Snapshots without
/// `extracted_at` take `extraction_date`. Link targets must resolve within the batch or
/// `prior`.
std::vector<ObjectSnapshot> load_instances(const SchemaGraph& graph, std::string_view document,
                                           Timestamp extraction_date, const KnownObjects& prior = {});

/// Type-checks already materialized snapshots against `graph` (same rules as load_instances).
void check_snapshots(const SchemaGraph& graph, const std::vector<ObjectSnapshot>& snapshots,
                     const KnownObjects& prior = {});

json snapshot_to_json(const ObjectSnapshot& snapshot);
json instances_to_json(const std::vector<ObjectSnapshot>& snapshots);

/// Parses JSON text, mapping parser failures to Error(ParseError).
json parse_json(std::string_view document);

} // namespace dw
