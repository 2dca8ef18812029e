#include "dw/binding.hpp"

#include "dw/error.hpp"

#include <algorithm>
#include <set>

namespace dw {

ObjectIndex::ObjectIndex(const SchemaGraph& graph, std::vector<ObjectView> objects) : graph_(&graph)
{
    for (auto& o : objects) {
        if (o.links)
            for (const auto& [link, targets] : *o.links)
                for (const auto& t : targets)
                    reverse_[{link, t}].push_back(o.id);
        std::string id = o.id;
        objects_.emplace(std::move(id), std::move(o));
    }
}

const ObjectView* ObjectIndex::find(std::string_view id) const
{
    auto it = objects_.find(id);
    return it == objects_.end() ? nullptr : &it->second;
}

std::vector<std::string> ObjectIndex::navigate(std::string_view start, const NavigationPath& path) const
{
    std::vector<std::string> frontier{std::string(start)};
    for (const auto& step : path.steps) {
        std::vector<std::string> next;
        std::set<std::string> seen;
        auto push = [&](const std::string& id) {
            const auto* o = find(id);
            if (o && graph_->is_a(o->class_name, step.to) && seen.insert(id).second)
                next.push_back(id);
        };
        for (const auto& id : frontier) {
            if (step.kind == LinkKind::Inheritance) {
                push(id);
            } else if (step.forward) {
                const auto* o = find(id);
                if (!o || !o->links)
                    continue;
                auto it = o->links->find(step.link);
                if (it != o->links->end())
                    for (const auto& t : it->second)
                        push(t);
            } else {
                auto it = reverse_.find({step.link, id});
                if (it != reverse_.end())
                    for (const auto& s : it->second)
                        push(s);
            }
        }
        frontier = std::move(next);
    }
    return frontier;
}

Binding ObjectIndex::bind(const ExpressionTree& tree, const EvaluationContext& ctx, std::string_view anchor_id) const
{
    Binding out;
    for (const auto& ref : tree.references()) {
        auto resolved = resolve_reference(ctx, ref);
        if (!resolved)
            throw Error(ErrorKind::UnresolvedReference, "unresolvable reference \"" + ref + "\"");
        auto& values = out[ref];
        for (const auto& id : navigate(anchor_id, resolved->path)) {
            const auto* o = find(id);
            Value v;
            if (o->values) {
                auto it = o->values->find(resolved->attribute.name);
                if (it != o->values->end())
                    v = it->second;
            }
            values.push_back(std::move(v));
        }
    }
    return out;
}

Value ObjectIndex::evaluate(const ExpressionTree& tree, const EvaluationContext& ctx, std::string_view anchor_id) const
{
    return dw::evaluate(tree, bind(tree, ctx, anchor_id));
}

} // namespace dw
