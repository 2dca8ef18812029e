#include "dw/mart.hpp"

#include "dw/binding.hpp"
#include "dw/error.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <deque>

namespace dw {

std::string_view to_string(DependencyRule rule)
{
    switch (rule) {
    case DependencyRule::Reflexive: return "reflexive";
    case DependencyRule::Association: return "association-card-1";
    case DependencyRule::Inheritance: return "inheritance";
    case DependencyRule::Composition: return "composition";
    case DependencyRule::Transitive: return "transitive";
    }
    return "?";
}

namespace {

std::optional<DependencyRule> parse_rule(std::string_view text)
{
    for (auto r : {DependencyRule::Reflexive, DependencyRule::Association, DependencyRule::Inheritance,
                   DependencyRule::Composition, DependencyRule::Transitive})
        if (to_string(r) == text)
            return r;
    return std::nullopt;
}

/// The direct rule under which traversing `l` from `cls` qualifies, if any.
std::optional<DependencyStep> direct_step(const Link& l, std::string_view cls, bool forward)
{
    const auto& here = forward ? l.source : l.target;
    const auto& there = forward ? l.target : l.source;
    if (here != cls)
        return std::nullopt;
    DependencyStep s{std::string(cls), there, l.name, forward, DependencyRule::Reflexive};
    switch (l.kind) {
    case LinkKind::Association:
        if (!forward || !l.target_max_one())
            return std::nullopt;
        s.rule = DependencyRule::Association;
        return s;
    case LinkKind::Inheritance:
        s.rule = DependencyRule::Inheritance;
        return s;
    case LinkKind::Composition:
        if (!forward && !l.source_max_one())
            return std::nullopt;
        s.rule = DependencyRule::Composition;
        return s;
    }
    return std::nullopt;
}

} // namespace

std::vector<ClassDependency> direct_dependencies(const SchemaGraph& graph, std::string_view cls)
{
    graph.require_class(cls);
    std::string self(cls);
    std::vector<ClassDependency> out{
        {self, self, DependencyRule::Reflexive, {{self, self, "", true, DependencyRule::Reflexive}}}};
    std::set<std::string> seen{self};
    for (const auto& l : graph.links) {
        for (bool forward : {true, false}) {
            auto step = direct_step(l, cls, forward);
            if (step && seen.insert(step->to).second)
                out.push_back({self, step->to, step->rule, {*step}});
        }
    }
    return out;
}

std::vector<ClassDependency> transitive_dependencies(const SchemaGraph& graph, std::string_view cls)
{
    auto first = direct_dependencies(graph, cls);
    std::vector<ClassDependency> out{first.front()};
    std::map<std::string, std::vector<DependencyStep>> chains;
    std::set<std::string> seen{std::string(cls)};
    std::deque<std::string> queue{std::string(cls)};
    chains[std::string(cls)] = {};
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        for (const auto& d : direct_dependencies(graph, cur)) {
            if (d.witness == DependencyRule::Reflexive || !seen.insert(d.to).second)
                continue;
            auto chain = chains[cur];
            chain.push_back(d.chain.front());
            chains[d.to] = chain;
            queue.push_back(d.to);
            out.push_back({std::string(cls), d.to, chain.size() == 1 ? chain.front().rule : DependencyRule::Transitive,
                           std::move(chain)});
        }
    }
    return out;
}

bool replay_witness(const SchemaGraph& graph, const ClassDependency& dep)
{
    if (dep.chain.empty())
        return false;
    if (dep.witness == DependencyRule::Reflexive)
        return dep.chain.size() == 1 && dep.chain.front().rule == DependencyRule::Reflexive && dep.from == dep.to &&
               dep.chain.front().from == dep.from && dep.chain.front().to == dep.to && graph.find_class(dep.from);
    if ((dep.witness == DependencyRule::Transitive) != (dep.chain.size() > 1))
        return false;
    std::string at = dep.from;
    for (const auto& s : dep.chain) {
        if (s.from != at || s.rule == DependencyRule::Reflexive || s.rule == DependencyRule::Transitive)
            return false;
        const auto* l = graph.find_link(s.link);
        if (!l)
            return false;
        auto replay = direct_step(*l, s.from, s.forward);
        if (!replay || *replay != s)
            return false;
        at = s.to;
    }
    return at == dep.to && (dep.chain.size() > 1 || dep.chain.front().rule == dep.witness);
}

NavigationPath chain_path(const SchemaGraph& graph, const std::vector<DependencyStep>& chain)
{
    NavigationPath p;
    for (const auto& s : chain) {
        if (s.rule == DependencyRule::Reflexive)
            continue;
        const auto* l = graph.find_link(s.link);
        if (!l)
            throw Error(ErrorKind::UnknownLink, "unknown link '" + s.link + "' in dependency chain");
        bool to_one = l->kind == LinkKind::Inheritance || (s.forward ? l->target_max_one() : l->source_max_one());
        p.steps.push_back({s.link, l->kind, s.forward, s.from, s.to, to_one});
    }
    return p;
}

namespace {

json step_to_json(const DependencyStep& s)
{
    return {{"from", s.from}, {"to", s.to}, {"link", s.link}, {"forward", s.forward}, {"rule", to_string(s.rule)}};
}

DependencyStep step_from_json(const json& j)
{
    auto rule = parse_rule(j.at("rule").get<std::string>());
    if (!rule)
        throw Error(ErrorKind::ParseError, "unknown dependency rule");
    return {j.at("from").get<std::string>(), j.at("to").get<std::string>(), j.at("link").get<std::string>(),
            j.at("forward").get<bool>(), *rule};
}

} // namespace

json dependency_to_json(const ClassDependency& dep)
{
    json chain = json::array();
    for (const auto& s : dep.chain)
        chain.push_back(step_to_json(s));
    return {{"from", dep.from}, {"to", dep.to}, {"witness", to_string(dep.witness)}, {"chain", std::move(chain)}};
}

// ---------------------------------------------------------------------------------------

RepresentativeReport detect_representative_classes(const WarehouseDef& wh, const std::vector<ExtractionRun>& runs)
{
    RepresentativeReport r;
    if (runs.size() < 2) {
        r.diagnostics.push_back("insufficient run history: " + std::to_string(runs.size()) +
                                " run(s) recorded, at least 2 needed");
        return r;
    }
    auto n = static_cast<std::int64_t>(runs.size() - 1);
    for (const auto& c : wh.classes) {
        std::int64_t total = 0;
        for (std::size_t i = 1; i < runs.size(); ++i) {
            auto it = runs[i].counters.find(c.name);
            if (it != runs[i].counters.end())
                total += it->second.inserted;
        }
        r.ranking.push_back({c.name, Decimal::divide(Decimal(total), Decimal(n))});
    }
    std::sort(r.ranking.begin(), r.ranking.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.class_name < b.class_name;
    });
    for (const auto& s : r.ranking)
        if (s.score > Decimal(0))
            r.recommended.push_back(s.class_name);
    return r;
}

// ---------------------------------------------------------------------------------------

std::string_view to_string(DimensionOrigin origin)
{
    switch (origin) {
    case DimensionOrigin::Class: return "class";
    case DimensionOrigin::DateAttribute: return "date-attribute";
    case DimensionOrigin::AddressAttribute: return "address-attribute";
    case DimensionOrigin::Specialization: return "specialization";
    }
    return "?";
}

const DimensionClass* MartDef::find_dimension(std::string_view dim) const
{
    for (const auto& d : dimensions)
        if (d.name == dim)
            return &d;
    return nullptr;
}

std::vector<MartAttribute> all_parameters(const MartDef& mart, const DimensionClass& dim)
{
    std::vector<MartAttribute> out;
    if (!dim.parent.empty())
        if (const auto* p = mart.find_dimension(dim.parent))
            out = all_parameters(mart, *p);
    out.insert(out.end(), dim.parameters.begin(), dim.parameters.end());
    return out;
}

HierarchyGraph full_hierarchy(const MartDef& mart, const DimensionClass& dim)
{
    HierarchyGraph h;
    if (!dim.parent.empty())
        if (const auto* p = mart.find_dimension(dim.parent))
            h = full_hierarchy(mart, *p);
    for (const auto& e : dim.hierarchy.edges)
        if (std::find(h.edges.begin(), h.edges.end(), e) == h.edges.end())
            h.edges.push_back(e);
    h.nodes.clear();
    for (const auto& p : all_parameters(mart, dim))
        if (p.type.is_simple())
            h.nodes.push_back(p.name);
    return h;
}

SchemaGraph MartDef::schema() const
{
    SchemaGraph g;
    if (fact) {
        ClassDef c{fact->name, {}, {}};
        for (const auto& m : fact->measures)
            c.attributes.push_back({m.name, m.type, Semantic::None});
        g.classes.push_back(std::move(c));
    }
    for (const auto& d : dimensions) {
        ClassDef c{d.name, {}, {}};
        for (const auto& p : d.parameters)
            c.attributes.push_back({p.name, p.type, Semantic::None});
        g.classes.push_back(std::move(c));
        if (!d.parent.empty()) {
            g.links.push_back({d.name + "_" + d.parent, LinkKind::Inheritance, d.name, d.parent, std::nullopt});
        } else if (fact) {
            LinkCardinality card{{0, false}, {1, true}};
            g.links.push_back({fact->name + "_" + d.name, LinkKind::Association, fact->name, d.name, card});
        }
    }
    return g;
}

std::string anchor_of(const MartDef& mart, std::string_view target)
{
    if (mart.fact && mart.fact->name == target)
        return mart.fact->warehouse_class;
    if (const auto* d = mart.find_dimension(target))
        return d->warehouse_class;
    throw Error(ErrorKind::UnknownClass, "unknown mart class '" + std::string(target) + "'");
}

namespace {

const FactClass& require_fact(const MartDef& mart)
{
    if (!mart.fact)
        throw Error(ErrorKind::NoFactClass, "mart '" + mart.name + "' has no fact class yet");
    return *mart.fact;
}

DimensionClass& require_dim(MartDef& mart, std::string_view name)
{
    for (auto& d : mart.dimensions)
        if (d.name == name)
            return d;
    throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(name) + "'");
}

void ensure_new_class_name(const MartDef& mart, std::string_view name)
{
    if (name.empty())
        throw Error(ErrorKind::InvalidArgument, "mart class names are non-empty");
    if ((mart.fact && mart.fact->name == name) || mart.find_dimension(name))
        throw Error(ErrorKind::DuplicateName, "duplicate name: mart class '" + std::string(name) + "' exists");
}

std::string join_diagnostics(const std::vector<Diagnostic>& diags)
{
    std::string out;
    for (const auto& d : diags)
        out += (out.empty() ? "" : "; ") + d.kind + ": " + d.message;
    return out;
}

ExprType checked_type(const ExpressionTree& formula, const EvaluationContext& ctx)
{
    auto diags = validate(formula, ctx);
    if (!diags.empty())
        throw Error(ErrorKind::ValidationFailed, "validation failed: " + join_diagnostics(diags));
    return infer_type(formula, ctx);
}

const ClassDependency* find_dependency(const std::vector<ClassDependency>& deps, std::string_view cls)
{
    for (const auto& d : deps)
        if (d.to == cls)
            return &d;
    return nullptr;
}

std::vector<DependencyStep> dependent_path(const WarehouseDef& wh, const MartDef& mart, std::string_view cls)
{
    const auto& fact = require_fact(mart);
    auto graph = wh.schema();
    graph.require_class(cls);
    auto deps = transitive_dependencies(graph, fact.warehouse_class);
    const auto* dep = find_dependency(deps, cls);
    if (!dep)
        throw Error(ErrorKind::NotDependent,
                    "'" + std::string(cls) + "' is not a dependent class of '" + fact.warehouse_class + "'");
    return dep->chain;
}

std::vector<MartAttribute> stored_parameters(const SchemaGraph& graph, std::string_view cls)
{
    std::vector<MartAttribute> out;
    std::set<std::string> names;
    for (const auto& a : graph.all_attributes(cls)) {
        auto name = strip_kind_prefix(a.name);
        if (names.insert(name).second)
            out.push_back({name, MemberKind::Stored, a.name, std::nullopt, a.type});
    }
    return out;
}

std::optional<std::vector<std::string>> find_cycle(const std::vector<std::pair<std::string, std::string>>& edges)
{
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& [a, b] : edges)
        adj[a].push_back(b);
    std::map<std::string, int> color;  // 0 new, 1 on stack, 2 done
    std::vector<std::string> stack;
    std::optional<std::vector<std::string>> found;
    auto dfs = [&](auto&& self, const std::string& u) -> void {
        color[u] = 1;
        stack.push_back(u);
        for (const auto& v : adj[u]) {
            if (found)
                return;
            if (color[v] == 1) {
                auto from = std::find(stack.begin(), stack.end(), v);
                found = std::vector<std::string>(from, stack.end());
                found->push_back(v);
                return;
            }
            if (color[v] == 0)
                self(self, v);
        }
        stack.pop_back();
        color[u] = 2;
    };
    for (const auto& [a, b] : edges)
        if (!found && color[a] == 0)
            dfs(dfs, a);
    return found;
}

} // namespace

MartDef flag_representative(const MartDef& mart, const WarehouseDef& wh, std::string_view cls)
{
    wh.require_class(cls);
    MartDef out = mart;
    out.flagged.insert(std::string(cls));
    return out;
}

MartDef project_fact(const MartDef& mart, const WarehouseDef& wh, std::string_view cls, std::string_view name,
                     std::vector<std::string>* diagnostics)
{
    wh.require_class(cls);
    if (!mart.flagged.contains(std::string(cls)))
        throw Error(ErrorKind::NotRepresentative, "'" + std::string(cls) + "' is not flagged as a representative class");
    if (mart.fact)
        throw Error(ErrorKind::FactExists, "mart '" + mart.name + "' already has fact class '" + mart.fact->name + "'");
    std::string fact_name = name.empty() ? std::string(cls) : std::string(name);
    ensure_new_class_name(mart, fact_name);
    FactClass f;
    f.name = fact_name;
    f.warehouse_class = std::string(cls);
    auto graph = wh.schema();
    std::set<std::string> names;
    for (const auto& a : graph.all_attributes(cls)) {
        if (!a.type.is_simple()) {
            if (diagnostics)
                diagnostics->push_back("attribute '" + a.name + "' has complex type " + a.type.to_string() +
                                       " and is not a measure");
            continue;
        }
        auto mname = strip_kind_prefix(a.name);
        if (!names.insert(mname).second) {
            if (diagnostics)
                diagnostics->push_back("attribute '" + a.name + "' duplicates measure '" + mname + "'");
            continue;
        }
        f.measures.push_back({mname, MemberKind::Stored, a.name, std::nullopt, a.type});
    }
    MartDef out = mart;
    out.fact = std::move(f);
    return out;
}

MartDef project_dimension(const MartDef& mart, const WarehouseDef& wh, std::string_view cls, std::string_view name)
{
    auto path = dependent_path(wh, mart, cls);
    std::string dname = name.empty() ? std::string(cls) : std::string(name);
    ensure_new_class_name(mart, dname);
    DimensionClass d;
    d.name = dname;
    d.origin = DimensionOrigin::Class;
    d.warehouse_class = std::string(cls);
    d.path = std::move(path);
    d.parameters = stored_parameters(wh.schema(), cls);
    MartDef out = mart;
    out.dimensions.push_back(std::move(d));
    auto& added = out.dimensions.back();
    added.hierarchy.nodes = full_hierarchy(out, added).nodes;
    return out;
}

MartDef project_dimension_from_attribute(const MartDef& mart, const WarehouseDef& wh, std::string_view cls,
                                         std::string_view attr, std::string_view name)
{
    auto path = dependent_path(wh, mart, cls);
    auto graph = wh.schema();
    auto a = graph.resolve_attribute(cls, attr);
    if (!a)
        throw Error(ErrorKind::UnknownAttribute,
                    "unknown attribute '" + std::string(attr) + "' of class '" + std::string(cls) + "'");
    DimensionClass d;
    d.warehouse_class = std::string(cls);
    d.attribute = a->name;
    d.path = std::move(path);
    auto base = strip_kind_prefix(a->name);
    d.name = name.empty() ? base : std::string(name);
    ensure_new_class_name(mart, d.name);
    if (a->type.kind == TypeKind::Date) {
        d.origin = DimensionOrigin::DateAttribute;
        d.parameters.push_back({base, MemberKind::Stored, a->name, std::nullopt, a->type});
        // Short reference ("Actes.Date_exec") when it resolves to the same attribute.
        std::string ref = std::string(cls) + "." + base;
        auto short_ok = graph.resolve_attribute(cls, base);
        if (!short_ok || short_ok->name != a->name)
            ref = std::string(cls) + "." + a->name;
        EvaluationContext ctx{&graph, std::string(cls)};
        for (auto& p : derive_date_parameters(ctx, ref)) {
            auto t = to_attribute_type(infer_type(p.formula, ctx));
            d.parameters.push_back({p.name, MemberKind::Calculated, "", std::move(p.formula), *t});
        }
    } else if (a->semantic == Semantic::Address) {
        d.origin = DimensionOrigin::AddressAttribute;
        d.parameters.push_back({base, MemberKind::Stored, a->name, std::nullopt, a->type});
        if (a->type.kind == TypeKind::Tuple)
            for (const auto& c : a->type.components)
                if (c.type.is_simple() && c.name != base)
                    d.parameters.push_back({c.name, MemberKind::Stored, a->name + "." + c.name, std::nullopt, c.type});
    } else {
        throw Error(ErrorKind::NotDateOrAddress, "attribute '" + a->name + "' is " + a->type.to_string() +
                                                     " and carries no date or address tag");
    }
    MartDef out = mart;
    out.dimensions.push_back(std::move(d));
    auto& added = out.dimensions.back();
    added.hierarchy.nodes = full_hierarchy(out, added).nodes;
    return out;
}

MartDef project_all_dependents(const MartDef& mart, const WarehouseDef& wh)
{
    const auto& fact = require_fact(mart);
    MartDef out = mart;
    for (const auto& dep : transitive_dependencies(wh.schema(), fact.warehouse_class)) {
        if (dep.to == fact.warehouse_class)
            continue;
        bool present = std::any_of(out.dimensions.begin(), out.dimensions.end(), [&](const DimensionClass& d) {
            return d.origin == DimensionOrigin::Class && d.warehouse_class == dep.to;
        });
        if (present || out.find_dimension(dep.to))
            continue;
        out = project_dimension(out, wh, dep.to);
    }
    return out;
}

MartDef specialize_dimension(const MartDef& mart, const WarehouseDef& wh, std::string_view parent,
                             std::string_view name, std::string_view warehouse_class,
                             const std::vector<std::string>& extra_attributes,
                             std::optional<ExpressionTree> membership)
{
    const auto* p = mart.find_dimension(parent);
    if (!p)
        throw Error(ErrorKind::UnknownClass, "unknown parent dimension '" + std::string(parent) + "'");
    if (p->origin != DimensionOrigin::Class && p->origin != DimensionOrigin::Specialization)
        throw Error(ErrorKind::InvalidArgument, "only class dimensions can be specialized");
    ensure_new_class_name(mart, name);
    auto graph = wh.schema();
    std::string cls = warehouse_class.empty() ? p->warehouse_class : std::string(warehouse_class);
    graph.require_class(cls);
    if (!graph.is_a(cls, p->warehouse_class))
        throw Error(ErrorKind::InvalidArgument, "'" + cls + "' is not a subclass of '" + p->warehouse_class + "'");
    DimensionClass d;
    d.name = std::string(name);
    d.origin = DimensionOrigin::Specialization;
    d.warehouse_class = cls;
    d.path = p->path;
    d.parent = std::string(parent);
    std::set<std::string> taken;
    for (const auto& inherited : all_parameters(mart, *p))
        taken.insert(inherited.name);
    for (const auto& extra : extra_attributes) {
        auto a = graph.resolve_attribute(cls, extra);
        if (!a)
            throw Error(ErrorKind::UnknownAttribute, "unknown attribute '" + extra + "' of class '" + cls + "'");
        auto pname = strip_kind_prefix(a->name);
        if (!taken.insert(pname).second)
            throw Error(ErrorKind::NameCollision, "name collision: parameter '" + pname + "' is already defined");
        d.parameters.push_back({pname, MemberKind::Stored, a->name, std::nullopt, a->type});
    }
    if (membership) {
        EvaluationContext ctx{&graph, cls};
        if (checked_type(*membership, ctx) != ExprType::Boolean)
            throw Error(ErrorKind::TypeMismatch, "type mismatch: a membership predicate must be boolean");
    }
    d.membership = std::move(membership);
    MartDef out = mart;
    out.dimensions.push_back(std::move(d));
    auto& added = out.dimensions.back();
    added.hierarchy.nodes = full_hierarchy(out, added).nodes;
    return out;
}

MartDef add_measure(const MartDef& mart, const WarehouseDef& wh, std::string_view name, const ExpressionTree& formula,
                    std::string_view anchor)
{
    const auto& fact = require_fact(mart);
    if (!anchor.empty() && anchor != fact.warehouse_class)
        throw Error(ErrorKind::AnchorMismatch, "anchor mismatch: measures are anchored on the representative class '" +
                                                   fact.warehouse_class + "', not '" + std::string(anchor) + "'");
    if (name.empty())
        throw Error(ErrorKind::InvalidArgument, "measure names are non-empty");
    for (const auto& m : fact.measures)
        if (m.name == name)
            throw Error(ErrorKind::DuplicateName, "duplicate name: measure '" + std::string(name) + "' exists");
    auto graph = wh.schema();
    EvaluationContext ctx{&graph, fact.warehouse_class};
    auto type = to_attribute_type(checked_type(formula, ctx));
    if (!type)
        throw Error(ErrorKind::ComplexMeasure, "measure '" + std::string(name) + "' would not have a simple type");
    MartDef out = mart;
    out.fact->measures.push_back({std::string(name), MemberKind::Calculated, "", formula, *type});
    return out;
}

MartDef add_parameter(const MartDef& mart, const WarehouseDef& wh, std::string_view dimension, std::string_view name,
                      const ExpressionTree& formula, std::string_view anchor)
{
    const auto* d = mart.find_dimension(dimension);
    if (!d)
        throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(dimension) + "'");
    if (!anchor.empty() && anchor != d->warehouse_class)
        throw Error(ErrorKind::AnchorMismatch, "anchor mismatch: parameters of '" + d->name +
                                                   "' are anchored on '" + d->warehouse_class + "', not '" +
                                                   std::string(anchor) + "'");
    if (name.empty())
        throw Error(ErrorKind::InvalidArgument, "parameter names are non-empty");
    for (const auto& p : all_parameters(mart, *d))
        if (p.name == name)
            throw Error(ErrorKind::DuplicateName, "duplicate name: parameter '" + std::string(name) + "' exists");
    auto graph = wh.schema();
    EvaluationContext ctx{&graph, d->warehouse_class};
    auto type = to_attribute_type(checked_type(formula, ctx));
    if (!type)
        throw Error(ErrorKind::InvalidType, "parameter '" + std::string(name) + "' would not have a simple type");
    MartDef out = mart;
    auto& target = require_dim(out, dimension);
    target.parameters.push_back({std::string(name), MemberKind::Calculated, "", formula, *type});
    target.hierarchy.nodes = full_hierarchy(out, target).nodes;
    return out;
}

MartDef select_objects(const MartDef& mart, const WarehouseDef& wh, std::string_view target,
                       std::optional<ExpressionTree> predicate)
{
    auto anchor = anchor_of(mart, target);
    if (predicate) {
        auto graph = wh.schema();
        EvaluationContext ctx{&graph, anchor};
        if (checked_type(*predicate, ctx) != ExprType::Boolean)
            throw Error(ErrorKind::TypeMismatch, "type mismatch: a selection predicate must be boolean");
    }
    MartDef out = mart;
    if (out.fact && out.fact->name == target)
        out.fact->selection = std::move(predicate);
    else
        require_dim(out, target).selection = std::move(predicate);
    return out;
}

MartDef set_hierarchy(const MartDef& mart, std::string_view dimension,
                      const std::vector<std::pair<std::string, std::string>>& edges)
{
    MartDef out = mart;
    auto& d = require_dim(out, dimension);
    std::set<std::string> params;
    for (const auto& p : all_parameters(out, d))
        if (p.type.is_simple())
            params.insert(p.name);
    std::vector<std::pair<std::string, std::string>> own;
    HierarchyGraph inherited;
    if (!d.parent.empty())
        inherited = full_hierarchy(out, *out.find_dimension(d.parent));
    for (const auto& e : edges) {
        for (const auto* end : {&e.first, &e.second})
            if (!params.contains(*end))
                throw Error(ErrorKind::UnknownAttribute, "unknown attribute: '" + *end +
                                                             "' is not a simple parameter of '" + d.name + "'");
        if (e.first == e.second)
            throw Error(ErrorKind::HierarchyCycle, "hierarchy cycle: " + e.first + " -> " + e.first);
        bool dup = std::find(own.begin(), own.end(), e) != own.end() ||
                   std::find(inherited.edges.begin(), inherited.edges.end(), e) != inherited.edges.end();
        if (!dup)
            own.push_back(e);
    }
    auto all = inherited.edges;
    all.insert(all.end(), own.begin(), own.end());
    if (auto cycle = find_cycle(all))
        throw Error(ErrorKind::HierarchyCycle, "hierarchy cycle: " + boost::algorithm::join(*cycle, " -> "));
    d.hierarchy.edges = std::move(own);
    d.hierarchy.nodes = full_hierarchy(out, d).nodes;
    // Sub-dimensions inherit these edges; the union must stay acyclic for them as well.
    for (const auto& sub : out.dimensions)
        if (auto c = find_cycle(full_hierarchy(out, sub).edges))
            throw Error(ErrorKind::HierarchyCycle, "hierarchy cycle in '" + sub.name + "': " +
                                                       boost::algorithm::join(*c, " -> "));
    return out;
}

MartDef add_hierarchy_edge(const MartDef& mart, std::string_view dimension, std::string_view from, std::string_view to)
{
    const auto* d = mart.find_dimension(dimension);
    if (!d)
        throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(dimension) + "'");
    auto edges = d->hierarchy.edges;
    edges.emplace_back(std::string(from), std::string(to));
    return set_hierarchy(mart, dimension, edges);
}

MartDef remove_hierarchy_edge(const MartDef& mart, std::string_view dimension, std::string_view from,
                              std::string_view to)
{
    const auto* d = mart.find_dimension(dimension);
    if (!d)
        throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(dimension) + "'");
    auto edges = d->hierarchy.edges;
    auto n = std::erase(edges, std::pair<std::string, std::string>(from, to));
    if (n == 0)
        throw Error(ErrorKind::UnknownElement,
                    "unknown element: no edge " + std::string(from) + " => " + std::string(to) + " on '" + d->name + "'");
    return set_hierarchy(mart, dimension, edges);
}

void check_star(const MartDef& mart)
{
    if (!mart.fact) {
        if (!mart.dimensions.empty())
            throw Error(ErrorKind::ClosureViolation, "closure violation: dimensions without a fact class");
        return;
    }
    for (const auto& m : mart.fact->measures)
        if (!m.type.is_simple())
            throw Error(ErrorKind::ComplexMeasure, "measure '" + m.name + "' is complex");
    auto g = mart.schema();
    for (const auto& d : mart.dimensions) {
        int fact_links = 0, parent_links = 0;
        for (const auto& l : g.links) {
            if (l.kind == LinkKind::Association && l.source == mart.fact->name && l.target == d.name &&
                l.target_max_one() && l.cardinality->target.min == 1)
                ++fact_links;
            if (l.kind == LinkKind::Inheritance && l.source == d.name && mart.find_dimension(l.target))
                ++parent_links;
        }
        if (fact_links + parent_links != 1)
            throw Error(ErrorKind::ClosureViolation,
                        "closure violation: dimension '" + d.name + "' is not attached to the star exactly once");
    }
}

// ---------------------------------------------------------------------------------------
// FD mining

bool fd_holds(const std::vector<Row>& rows, const std::string& from, const std::string& to)
{
    std::map<Value, Value, ValueLess> image;
    auto get = [](const Row& r, const std::string& c) {
        auto it = r.find(c);
        return it == r.end() ? Value{} : it->second;
    };
    for (const auto& r : rows) {
        auto [it, inserted] = image.emplace(get(r, from), get(r, to));
        if (!inserted && it->second != get(r, to))
            return false;
    }
    return true;
}

HierarchyGraph infer_hierarchy(const std::vector<std::string>& columns, const std::vector<Row>& rows)
{
    if (rows.empty())
        throw Error(ErrorKind::EmptySample, "hierarchy inference needs a non-empty sample");
    std::size_t n = columns.size();
    std::vector<std::vector<bool>> fd(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            fd[i][j] = i != j && fd_holds(rows, columns[i], columns[j]);
    std::vector<std::vector<bool>> strict(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            strict[i][j] = fd[i][j] && !fd[j][i];
    // Strict FDs are transitive, so an edge is redundant iff some k sits between its ends.
    HierarchyGraph h;
    h.nodes = columns;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (!strict[i][j])
                continue;
            bool implied = false;
            for (std::size_t k = 0; k < n && !implied; ++k)
                implied = strict[i][k] && strict[k][j];
            if (!implied)
                h.edges.emplace_back(columns[i], columns[j]);
        }
    return h;
}

std::vector<std::string> hierarchy_warnings(const HierarchyGraph& graph, const std::vector<Row>& rows)
{
    std::vector<std::string> out;
    for (const auto& [a, b] : graph.edges)
        if (!fd_holds(rows, a, b))
            out.push_back("edge " + a + " => " + b + " does not hold on the sample: some " + a +
                          " value has several " + b + " values");
    return out;
}

// ---------------------------------------------------------------------------------------
// Load

namespace {

Value read_path(const std::map<std::string, Value>& values, const std::string& path)
{
    std::vector<std::string> parts;
    boost::split(parts, path, boost::is_any_of("."));
    auto it = values.find(parts.front());
    if (it == values.end())
        return {};
    Value v = it->second;
    for (std::size_t k = 1; k < parts.size(); ++k) {
        if (!v.is<TupleValue>())
            return {};
        const auto& t = v.as<TupleValue>();
        auto pos = std::find(t.names.begin(), t.names.end(), parts[k]);
        if (pos == t.names.end())
            return {};
        Value inner = t.values[static_cast<std::size_t>(pos - t.names.begin())];
        v = std::move(inner);
    }
    return v;
}

struct Loader {
    const MartDef& mart;
    const WarehouseDef& wh;
    const StoreState& store;
    SchemaGraph graph;
    std::vector<ObjectView> views;
    std::unique_ptr<ObjectIndex> index;

    Loader(const MartDef& m, const WarehouseDef& w, const StoreState& s) : mart(m), wh(w), store(s), graph(w.schema())
    {
        for (const auto& [id, o] : store.objects)
            views.push_back({id, o.class_name, &o.values, &o.links});
        index = std::make_unique<ObjectIndex>(graph, views);
    }

    bool passes(const std::optional<ExpressionTree>& pred, const std::string& anchor, const std::string& id) const
    {
        if (!pred)
            return true;
        EvaluationContext ctx{&graph, anchor};
        auto v = index->evaluate(*pred, ctx, id);
        return v.is<bool>() && v.as<bool>();
    }

    Value member_value(const MartAttribute& a, const std::string& anchor, const std::string& id) const
    {
        if (a.kind == MemberKind::Calculated) {
            EvaluationContext ctx{&graph, anchor};
            return index->evaluate(*a.formula, ctx, id);
        }
        const auto* o = index->find(id);
        return o && o->values ? read_path(*o->values, a.source_attribute) : Value{};
    }

    /// Objects of `dim`'s class reached from fact object `id`, filtered by its selection.
    std::vector<std::string> reach(const DimensionClass& dim, const std::string& id) const
    {
        auto ids = index->navigate(id, chain_path(graph, dim.path));
        std::erase_if(ids, [&](const std::string& x) { return !passes(dim.selection, dim.warehouse_class, x); });
        if (ids.size() > 1)
            throw Error(ErrorKind::AmbiguousPath, "ambiguous path: fact object '" + id + "' reaches " +
                                                      std::to_string(ids.size()) + " objects of dimension '" +
                                                      dim.name + "'");
        return ids;
    }
};

} // namespace

MartData load_mart(const MartDef& mart, const WarehouseDef& wh, const StoreState& store)
{
    const auto& fact = require_fact(mart);
    Loader L(mart, wh, store);
    MartData data;
    std::map<std::string, std::map<std::string, std::string>> owners;  // dim -> key -> owner object
    for (const auto& [id, o] : store.objects) {
        if (!L.graph.find_class(o.class_name) || !L.graph.is_a(o.class_name, fact.warehouse_class))
            continue;
        if (!L.passes(fact.selection, fact.warehouse_class, id))
            continue;
        FactRow row;
        row.id = id;
        for (const auto& m : fact.measures)
            row.measures[m.name] = L.member_value(m, fact.warehouse_class, id);
        for (const auto& d : mart.dimensions) {
            if (d.origin == DimensionOrigin::Specialization)
                continue;
            auto ids = L.reach(d, id);
            std::optional<std::string> key;
            if (!ids.empty()) {
                if (d.origin == DimensionOrigin::Class) {
                    key = ids.front();
                } else {
                    const auto* owner = L.index->find(ids.front());
                    Value v = owner && owner->values ? read_path(*owner->values, d.attribute) : Value{};
                    if (!v.is_null()) {
                        key = v.is<Date>() ? v.as<Date>().to_string() : v.to_display();
                        owners[d.name].emplace(*key, ids.front());
                    }
                }
            }
            row.dimensions[d.name] = key;
        }
        data.facts.push_back(std::move(row));
    }

    for (const auto& d : mart.dimensions) {
        auto& rows = data.dimensions[d.name];
        if (d.origin == DimensionOrigin::DateAttribute || d.origin == DimensionOrigin::AddressAttribute) {
            for (const auto& [key, owner] : owners[d.name]) {
                DimensionRow r{key, {}};
                for (const auto& p : d.parameters)
                    r.parameters[p.name] = L.member_value(p, d.warehouse_class, owner);
                rows.push_back(std::move(r));
            }
            continue;
        }
        std::vector<std::string> chain{d.name};
        for (const auto* cur = &d; !cur->parent.empty();) {
            cur = mart.find_dimension(cur->parent);
            chain.push_back(cur->name);
        }
        for (const auto& [id, o] : store.objects) {
            if (!L.graph.find_class(o.class_name) || !L.graph.is_a(o.class_name, d.warehouse_class))
                continue;
            bool keep = true;
            for (const auto& name : chain) {
                const auto* level = mart.find_dimension(name);
                keep = keep && L.passes(level->selection, level->warehouse_class, id) &&
                       L.passes(level->membership, level->warehouse_class, id) &&
                       L.graph.is_a(o.class_name, level->warehouse_class);
            }
            if (!keep)
                continue;
            DimensionRow r{id, {}};
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                const auto* level = mart.find_dimension(*it);
                for (const auto& p : level->parameters)
                    r.parameters[p.name] = L.member_value(p, level->warehouse_class, id);
            }
            rows.push_back(std::move(r));
        }
    }
    return data;
}

std::vector<Row> dimension_sample(const MartDef& mart, const MartData& data, std::string_view dimension,
                                  std::vector<std::string>* columns)
{
    const auto* d = mart.find_dimension(dimension);
    if (!d)
        throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(dimension) + "'");
    std::vector<std::string> cols;
    for (const auto& p : all_parameters(mart, *d))
        if (p.type.is_simple())
            cols.push_back(p.name);
    std::vector<Row> rows;
    auto it = data.dimensions.find(std::string(dimension));
    if (it != data.dimensions.end())
        for (const auto& r : it->second) {
            Row row;
            for (const auto& c : cols) {
                auto v = r.parameters.find(c);
                row[c] = v == r.parameters.end() ? Value{} : v->second;
            }
            rows.push_back(std::move(row));
        }
    if (columns)
        *columns = std::move(cols);
    return rows;
}

std::string export_fact(const MartData& data)
{
    std::string out;
    for (const auto& f : data.facts) {
        json measures = json::object();
        for (const auto& [k, v] : f.measures)
            measures[k] = value_to_json(v);
        json dims = json::object();
        for (const auto& [k, v] : f.dimensions)
            dims[k] = v ? json(*v) : json();
        out += json{{"id", f.id}, {"measures", measures}, {"dimensions", dims}}.dump() + "\n";
    }
    return out;
}

std::string export_dimension(const MartData& data, std::string_view dimension)
{
    std::string out;
    auto it = data.dimensions.find(std::string(dimension));
    if (it == data.dimensions.end())
        throw Error(ErrorKind::UnknownClass, "unknown dimension '" + std::string(dimension) + "'");
    for (const auto& r : it->second) {
        json params = json::object();
        for (const auto& [k, v] : r.parameters)
            params[k] = value_to_json(v);
        out += json{{"key", r.key}, {"parameters", params}}.dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// JSON

namespace {

json member_to_json(const MartAttribute& a)
{
    json j = {{"name", a.name},
              {"kind", a.kind == MemberKind::Stored ? "stored" : "calculated"},
              {"type", type_to_json(a.type)}};
    if (a.kind == MemberKind::Stored)
        j["source_attribute"] = a.source_attribute;
    else
        j["formula"] = a.formula->text();
    return j;
}

MartAttribute member_from_json(const json& j)
{
    MartAttribute a;
    a.name = j.at("name").get<std::string>();
    auto kind = j.at("kind").get<std::string>();
    a.type = type_from_json(j.at("type"));
    if (kind == "stored") {
        a.kind = MemberKind::Stored;
        a.source_attribute = j.at("source_attribute").get<std::string>();
    } else if (kind == "calculated") {
        a.kind = MemberKind::Calculated;
        a.formula = parse_formula(j.at("formula").get<std::string>());
    } else {
        throw Error(ErrorKind::ParseError, "unknown member kind '" + kind + "'");
    }
    return a;
}

json optional_tree(const std::optional<ExpressionTree>& t)
{
    return t ? json(t->text()) : json();
}

std::optional<ExpressionTree> optional_tree_from(const json& j, const char* field)
{
    if (!j.contains(field) || j[field].is_null())
        return std::nullopt;
    return parse_formula(j[field].get<std::string>());
}

} // namespace

json hierarchy_to_json(const HierarchyGraph& h)
{
    json edges = json::array();
    for (const auto& [a, b] : h.edges)
        edges.push_back({a, b});
    return {{"nodes", h.nodes}, {"edges", edges}};
}

json mart_to_json(const MartDef& mart)
{
    json j = {{"name", mart.name}, {"flagged", mart.flagged}};
    json provenance = json::object();
    if (mart.fact) {
        json measures = json::array();
        for (const auto& m : mart.fact->measures)
            measures.push_back(member_to_json(m));
        j["fact"] = {{"name", mart.fact->name},
                     {"warehouse_class", mart.fact->warehouse_class},
                     {"measures", measures},
                     {"selection", optional_tree(mart.fact->selection)}};
        provenance[mart.fact->name] = {{"role", "fact"}, {"warehouse_class", mart.fact->warehouse_class}};
    } else {
        j["fact"] = nullptr;
    }
    json dims = json::array();
    for (const auto& d : mart.dimensions) {
        json params = json::array();
        for (const auto& p : d.parameters)
            params.push_back(member_to_json(p));
        json path = json::array();
        for (const auto& s : d.path)
            path.push_back(step_to_json(s));
        dims.push_back({{"name", d.name},
                        {"origin", to_string(d.origin)},
                        {"warehouse_class", d.warehouse_class},
                        {"attribute", d.attribute},
                        {"path", path},
                        {"parameters", params},
                        {"hierarchy", hierarchy_to_json(d.hierarchy)},
                        {"parent", d.parent},
                        {"membership", optional_tree(d.membership)},
                        {"selection", optional_tree(d.selection)}});
        json prov = {{"role", "dimension"}, {"origin", to_string(d.origin)}, {"warehouse_class", d.warehouse_class}};
        if (!d.attribute.empty())
            prov["attribute"] = d.attribute;
        provenance[d.name] = std::move(prov);
    }
    j["dimensions"] = std::move(dims);
    j["provenance"] = std::move(provenance);
    j["cardinality_reading"] = "(x,1) is max 1 at the target end of the link";
    return j;
}

MartDef mart_from_json(const json& j)
{
    MartDef m;
    try {
        m.name = j.at("name").get<std::string>();
        m.flagged = j.value("flagged", std::set<std::string>{});
        if (j.contains("fact") && !j["fact"].is_null()) {
            const auto& jf = j["fact"];
            FactClass f;
            f.name = jf.at("name").get<std::string>();
            f.warehouse_class = jf.at("warehouse_class").get<std::string>();
            for (const auto& jm : jf.at("measures"))
                f.measures.push_back(member_from_json(jm));
            f.selection = optional_tree_from(jf, "selection");
            m.fact = std::move(f);
        }
        for (const auto& jd : j.value("dimensions", json::array())) {
            DimensionClass d;
            d.name = jd.at("name").get<std::string>();
            auto origin = jd.at("origin").get<std::string>();
            bool known = false;
            for (auto o : {DimensionOrigin::Class, DimensionOrigin::DateAttribute, DimensionOrigin::AddressAttribute,
                           DimensionOrigin::Specialization})
                if (to_string(o) == origin) {
                    d.origin = o;
                    known = true;
                }
            if (!known)
                throw Error(ErrorKind::ParseError, "unknown dimension origin '" + origin + "'");
            d.warehouse_class = jd.at("warehouse_class").get<std::string>();
            d.attribute = jd.value("attribute", "");
            for (const auto& s : jd.at("path"))
                d.path.push_back(step_from_json(s));
            for (const auto& p : jd.at("parameters"))
                d.parameters.push_back(member_from_json(p));
            const auto& h = jd.at("hierarchy");
            d.hierarchy.nodes = h.at("nodes").get<std::vector<std::string>>();
            for (const auto& e : h.at("edges"))
                d.hierarchy.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
            d.parent = jd.value("parent", "");
            d.membership = optional_tree_from(jd, "membership");
            d.selection = optional_tree_from(jd, "selection");
            m.dimensions.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed mart definition: ") + e.what());
    }
    return m;
}

} // namespace dw
