#pragma once

#include "dw/expression.hpp"
#include "dw/schema.hpp"
#include "dw/value.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dw {

/// Read-only view of one object for navigation: values keyed by schema attribute name,
/// forward link targets keyed by link name.
struct ObjectView {
    std::string id;
    std::string class_name;
    const std::map<std::string, Value>* values = nullptr;
    const std::map<std::string, std::vector<std::string>>* links = nullptr;
};

/// Objects of one level indexed by id, with a reverse index over link targets. The
/// referenced maps must outlive the index.
class ObjectIndex {
public:
    ObjectIndex(const SchemaGraph& graph, std::vector<ObjectView> objects);

    const SchemaGraph& graph() const noexcept { return *graph_; }
    const ObjectView* find(std::string_view id) const;

    /// Objects reached from `start` by following `path`, deduplicated in first-reach order.
    std::vector<std::string> navigate(std::string_view start, const NavigationPath& path) const;

    /// Values of every reference of `tree` as seen from object `anchor_id`, resolved in
    /// `ctx`. An object reached without the attribute contributes an absent value.
    Binding bind(const ExpressionTree& tree, const EvaluationContext& ctx, std::string_view anchor_id) const;

    /// bind + evaluate.
    Value evaluate(const ExpressionTree& tree, const EvaluationContext& ctx, std::string_view anchor_id) const;

private:
    const SchemaGraph* graph_;
    std::map<std::string, ObjectView, std::less<>> objects_;
    // (link, target id) -> source ids in insertion order
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> reverse_;
};

} // namespace dw
