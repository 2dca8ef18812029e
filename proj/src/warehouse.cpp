#include "dw/warehouse.hpp"

#include "dw/binding.hpp"
#include "dw/error.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <deque>

namespace dw {

std::string_view to_string(AttributeKind kind)
{
    switch (kind) {
    case AttributeKind::Derived: return "derived";
    case AttributeKind::Calculated: return "calculated";
    case AttributeKind::Specific: return "specific";
    }
    return "?";
}

std::string_view kind_prefix(AttributeKind kind)
{
    switch (kind) {
    case AttributeKind::Derived: return "D_";
    case AttributeKind::Calculated: return "C_";
    case AttributeKind::Specific: return "S_";
    }
    return "";
}

std::optional<AttributeKind> parse_attribute_kind(std::string_view text)
{
    for (auto k : {AttributeKind::Derived, AttributeKind::Calculated, AttributeKind::Specific})
        if (to_string(k) == text)
            return k;
    return std::nullopt;
}

std::string prefixed(AttributeKind kind, std::string_view name)
{
    auto p = kind_prefix(kind);
    if (name.starts_with(p))
        return std::string(name);
    return std::string(p) + std::string(name);
}

std::string strip_kind_prefix(std::string_view name)
{
    for (auto p : {"D_", "C_", "S_"})
        if (name.starts_with(p) && name.size() > 2)
            return std::string(name.substr(2));
    return std::string(name);
}

const WarehouseAttribute* DerivedClass::find_attribute(std::string_view attr) const
{
    for (const auto& a : attributes)
        if (a.name == attr)
            return &a;
    return nullptr;
}

const DerivedClass* WarehouseDef::find_class(std::string_view name) const
{
    for (const auto& c : classes)
        if (c.name == name)
            return &c;
    return nullptr;
}

const DerivedClass* WarehouseDef::find_by_source(std::string_view source_class) const
{
    for (const auto& c : classes)
        if (c.source_class == source_class)
            return &c;
    return nullptr;
}

const DerivedClass& WarehouseDef::require_class(std::string_view name) const
{
    if (const auto* c = find_class(name))
        return *c;
    throw Error(ErrorKind::UnknownClass, "unknown warehouse class '" + std::string(name) + "'");
}

SchemaGraph WarehouseDef::schema() const
{
    SchemaGraph g;
    for (const auto& c : classes) {
        ClassDef cd{c.name, {}, c.operations};
        for (const auto& a : c.attributes)
            cd.attributes.push_back({a.name, a.type, a.semantic});
        g.classes.push_back(std::move(cd));
    }
    g.links = links;
    return g;
}

const Environment* WarehouseDef::environment_of(std::string_view cls) const
{
    for (const auto& e : environments)
        if (std::find(e.classes.begin(), e.classes.end(), cls) != e.classes.end())
            return &e;
    return nullptr;
}

bool WarehouseDef::class_historized(std::string_view cls) const
{
    return historized_classes.contains(std::string(cls)) || environment_of(cls) != nullptr;
}

bool WarehouseDef::attribute_historized(std::string_view cls, std::string_view attr) const
{
    return historized_attributes.contains({std::string(cls), std::string(attr)});
}

namespace {

DerivedClass& require_mut(WarehouseDef& wh, std::string_view cls)
{
    for (auto& c : wh.classes)
        if (c.name == cls)
            return c;
    throw Error(ErrorKind::UnknownClass, "unknown warehouse class '" + std::string(cls) + "'");
}

std::vector<WarehouseAttribute>::iterator require_attr(DerivedClass& c, std::string_view attr)
{
    auto it = std::find_if(c.attributes.begin(), c.attributes.end(), [&](const auto& a) { return a.name == attr; });
    if (it == c.attributes.end())
        throw Error(ErrorKind::UnknownAttribute,
                    "unknown attribute '" + std::string(attr) + "' of class '" + c.name + "'");
    return it;
}

/// Attribute names visible on `cls` through the warehouse inheritance links, plus the
/// names of every class inheriting from it (their attributes would clash with a new one).
bool name_taken(const WarehouseDef& wh, std::string_view cls, std::string_view attr)
{
    auto g = wh.schema();
    std::vector<std::string> related{std::string(cls)};
    for (const auto& a : g.ancestors(cls))
        related.push_back(a);
    for (const auto& d : g.descendants(cls))
        related.push_back(d);
    for (const auto& r : related)
        if (const auto* c = wh.find_class(r); c && c->find_attribute(attr))
            return true;
    return false;
}

void ensure_free(const WarehouseDef& wh, std::string_view cls, std::string_view attr)
{
    if (name_taken(wh, cls, attr))
        throw Error(ErrorKind::DuplicateName,
                    "duplicate name: attribute '" + std::string(attr) + "' already exists on '" + std::string(cls) +
                        "' or a related class");
}

std::string join_diagnostics(const std::vector<Diagnostic>& diags)
{
    std::string out;
    for (const auto& d : diags) {
        if (!out.empty())
            out += "; ";
        out += d.kind + ": " + d.message;
    }
    return out;
}

} // namespace

WarehouseDef project_class(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls)
{
    if (!source.find_class(cls))
        throw Error(ErrorKind::UnknownClass, "unknown source class '" + std::string(cls) + "'");
    WarehouseDef out = wh;
    std::deque<std::pair<std::string, std::string>> work{{std::string(cls), ""}};
    while (!work.empty()) {
        auto [name, reason] = work.front();
        work.pop_front();
        if (out.find_by_source(name))
            continue;
        if (out.find_class(name))
            throw Error(ErrorKind::NameCollision, "name collision: warehouse class '" + name +
                                                      "' already exists; rename it before projecting '" + name + "'");
        const auto& sc = source.require_class(name);
        DerivedClass dc;
        dc.name = name;
        dc.source_class = name;
        dc.operations = sc.operations;
        dc.closure_reason = reason;
        for (const auto& a : sc.attributes) {
            WarehouseAttribute wa;
            wa.name = prefixed(AttributeKind::Derived, a.name);
            wa.kind = AttributeKind::Derived;
            wa.source_attribute = a.name;
            wa.type = a.type;
            wa.semantic = a.semantic;
            dc.attributes.push_back(std::move(wa));
        }
        out.classes.push_back(std::move(dc));
        for (const auto& sup : source.superclasses(name))
            work.emplace_back(sup, "superclass of " + name);
        for (const auto& l : source.links)
            if (l.kind == LinkKind::Composition && l.source == name)
                work.emplace_back(l.target, "component of " + name);
    }
    for (const auto& l : source.links) {
        const auto* s = out.find_by_source(l.source);
        const auto* t = out.find_by_source(l.target);
        if (!s || !t)
            continue;
        if (std::any_of(out.links.begin(), out.links.end(), [&](const Link& x) { return x.name == l.name; }))
            continue;
        Link wl = l;
        wl.source = s->name;
        wl.target = t->name;
        out.links.push_back(std::move(wl));
    }
    return out;
}

WarehouseDef delete_class(const WarehouseDef& wh, std::string_view cls)
{
    wh.require_class(cls);
    for (const auto& l : wh.links) {
        if (l.target == cls && l.source != cls &&
            (l.kind == LinkKind::Inheritance || l.kind == LinkKind::Composition))
            throw Error(ErrorKind::ClosureViolation, "closure violation: '" + l.source + "' " +
                                                         (l.kind == LinkKind::Inheritance ? "inherits from" : "is composed of") +
                                                         " '" + std::string(cls) + "'");
    }
    WarehouseDef out = wh;
    std::erase_if(out.classes, [&](const DerivedClass& c) { return c.name == cls; });
    std::vector<std::string> dropped;
    std::erase_if(out.links, [&](const Link& l) {
        bool gone = l.source == cls || l.target == cls;
        if (gone)
            dropped.push_back(l.name);
        return gone;
    });
    std::erase_if(out.historized_attributes, [&](const auto& p) { return p.first == cls; });
    out.historized_classes.erase(std::string(cls));
    for (auto& e : out.environments) {
        std::erase(e.classes, std::string(cls));
        std::erase_if(e.links, [&](const std::string& l) {
            return std::find(dropped.begin(), dropped.end(), l) != dropped.end();
        });
    }
    std::erase_if(out.environments, [](const Environment& e) { return e.classes.empty(); });
    return out;
}

WarehouseDef set_selection(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls,
                           std::optional<ExpressionTree> predicate)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    if (predicate) {
        EvaluationContext ctx{&source, c.source_class};
        auto diags = validate(*predicate, ctx);
        for (const auto& d : diags)
            if (d.kind == "unresolvable-reference")
                throw Error(ErrorKind::UnknownAttribute, "unknown attribute reference: " + d.message);
        if (!diags.empty())
            throw Error(ErrorKind::ValidationFailed, "validation failed: " + join_diagnostics(diags));
        for (const auto& ref : predicate->references()) {
            auto r = resolve_reference(ctx, ref);
            bool local = std::all_of(r->path.steps.begin(), r->path.steps.end(),
                                     [](const NavStep& s) { return s.kind == LinkKind::Inheritance && s.forward; });
            if (!local)
                throw Error(ErrorKind::UnknownAttribute, "unknown attribute reference: \"" + ref +
                                                             "\" is not an attribute of '" + c.source_class + "'");
        }
        if (infer_type(*predicate, ctx) != ExprType::Boolean)
            throw Error(ErrorKind::TypeMismatch, "type mismatch: a selection predicate must be boolean");
    }
    c.selection = std::move(predicate);
    return out;
}

WarehouseDef add_specific_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view name,
                                    const AttributeType& type, const Value& default_value)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    auto full = prefixed(AttributeKind::Specific, name);
    ensure_free(wh, cls, full);
    if (!conforms(default_value, type))
        throw Error(ErrorKind::TypeMismatch, "type mismatch: default " + default_value.to_display() +
                                                 " does not conform to " + type.to_string());
    WarehouseAttribute wa;
    wa.name = full;
    wa.kind = AttributeKind::Specific;
    wa.type = type;
    wa.default_value = default_value;
    c.attributes.push_back(std::move(wa));
    return out;
}

WarehouseDef add_calculated_attribute(const WarehouseDef& wh, const SchemaGraph& source, std::string_view cls,
                                      std::string_view name, const ExpressionTree& formula)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    auto full = prefixed(AttributeKind::Calculated, name);
    ensure_free(wh, cls, full);
    EvaluationContext ctx{&source, c.source_class};
    auto diags = validate(formula, ctx);
    if (!diags.empty())
        throw Error(ErrorKind::ValidationFailed, "validation failed: " + join_diagnostics(diags));
    auto type = to_attribute_type(infer_type(formula, ctx));
    if (!type)
        throw Error(ErrorKind::InvalidType, "calculated attribute '" + full + "' must have a simple type");
    WarehouseAttribute wa;
    wa.name = full;
    wa.kind = AttributeKind::Calculated;
    wa.formula = formula;
    wa.type = *type;
    c.attributes.push_back(std::move(wa));
    return out;
}

WarehouseDef rename_class(const WarehouseDef& wh, std::string_view cls, std::string_view new_name)
{
    wh.require_class(cls);
    if (new_name.empty())
        throw Error(ErrorKind::InvalidArgument, "class names are non-empty");
    if (cls == new_name)
        return wh;
    if (wh.find_class(new_name))
        throw Error(ErrorKind::NameCollision,
                    "name collision: warehouse class '" + std::string(new_name) + "' already exists");
    WarehouseDef out = wh;
    std::string from(cls), to(new_name);
    require_mut(out, cls).name = to;
    for (auto& l : out.links) {
        if (l.source == from)
            l.source = to;
        if (l.target == from)
            l.target = to;
    }
    std::set<std::pair<std::string, std::string>> attrs;
    for (const auto& [c, a] : out.historized_attributes)
        attrs.insert({c == from ? to : c, a});
    out.historized_attributes = std::move(attrs);
    if (out.historized_classes.erase(from))
        out.historized_classes.insert(to);
    for (auto& e : out.environments)
        std::replace(e.classes.begin(), e.classes.end(), from, to);
    return out;
}

WarehouseDef rename_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr,
                              std::string_view new_name)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    auto it = require_attr(c, attr);
    auto full = prefixed(it->kind, new_name);
    if (full == attr)
        return wh;
    if (full.size() <= 2)
        throw Error(ErrorKind::InvalidArgument, "attribute names are non-empty");
    ensure_free(wh, cls, full);
    it->name = full;
    if (out.historized_attributes.erase({std::string(cls), std::string(attr)}))
        out.historized_attributes.insert({std::string(cls), full});
    return out;
}

WarehouseDef delete_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    c.attributes.erase(require_attr(c, attr));
    out.historized_attributes.erase({std::string(cls), std::string(attr)});
    return out;
}

WarehouseDef group_attributes(const WarehouseDef& wh, std::string_view cls, const std::vector<std::string>& attrs,
                              std::string_view tuple_name)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    if (attrs.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "group needs at least two attributes");
    std::vector<std::size_t> positions;
    for (const auto& a : attrs)
        positions.push_back(static_cast<std::size_t>(require_attr(c, a) - c.attributes.begin()));
    for (std::size_t i = 1; i < positions.size(); ++i)
        if (positions[i] != positions[i - 1] + 1)
            throw Error(ErrorKind::InvalidArgument,
                        "group takes attributes listed in class order and adjacent to each other");
    auto kind = c.attributes[positions.front()].kind;
    for (auto p : positions)
        if (c.attributes[p].kind != kind)
            throw Error(ErrorKind::InvalidArgument, "group takes attributes of one kind");
    auto full = prefixed(kind, tuple_name);
    if (full.size() <= 2)
        throw Error(ErrorKind::InvalidArgument, "attribute names are non-empty");
    bool reuses_member = std::find(attrs.begin(), attrs.end(), full) != attrs.end();
    if (!reuses_member)
        ensure_free(wh, cls, full);

    WarehouseAttribute grouped;
    grouped.name = full;
    grouped.kind = kind;
    std::vector<TypeComponent> comps;
    TupleValue defaults;
    bool historized = false;
    for (auto p : positions) {
        const auto& a = c.attributes[p];
        comps.push_back({a.name, a.type});
        defaults.names.push_back(a.name);
        defaults.values.push_back(a.default_value);
        grouped.components.push_back(a);
        historized = out.historized_attributes.erase({std::string(cls), a.name}) > 0 || historized;
    }
    grouped.type = AttributeType::tuple(std::move(comps));
    if (kind == AttributeKind::Specific)
        grouped.default_value = std::move(defaults);
    auto first = c.attributes.begin() + static_cast<std::ptrdiff_t>(positions.front());
    c.attributes.erase(first, first + static_cast<std::ptrdiff_t>(positions.size()));
    c.attributes.insert(c.attributes.begin() + static_cast<std::ptrdiff_t>(positions.front()), std::move(grouped));
    if (historized)
        out.historized_attributes.insert({std::string(cls), full});
    return out;
}

WarehouseDef split_attribute(const WarehouseDef& wh, std::string_view cls, std::string_view attr)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    auto it = require_attr(c, attr);
    if (it->type.kind != TypeKind::Tuple)
        throw Error(ErrorKind::InvalidType,
                    "split needs a tuple attribute; '" + std::string(attr) + "' is " + it->type.to_string());
    WarehouseAttribute tuple = *it;
    std::vector<WarehouseAttribute> parts = tuple.components;
    if (parts.empty()) {
        // A tuple coming straight from the source: one attribute per component.
        for (std::size_t i = 0; i < tuple.type.components.size(); ++i) {
            const auto& comp = tuple.type.components[i];
            WarehouseAttribute p;
            p.name = prefixed(tuple.kind, comp.name);
            p.kind = tuple.kind;
            p.type = comp.type;
            if (tuple.kind == AttributeKind::Derived)
                p.source_attribute = tuple.source_attribute + "." + comp.name;
            if (tuple.kind == AttributeKind::Specific && tuple.default_value.is<TupleValue>())
                p.default_value = tuple.default_value.as<TupleValue>().values.at(i);
            if (tuple.kind == AttributeKind::Calculated)
                throw Error(ErrorKind::InvalidType, "calculated attributes are never tuples");
            parts.push_back(std::move(p));
        }
    }
    auto pos = it - c.attributes.begin();
    c.attributes.erase(it);
    for (const auto& p : parts)
        if (c.find_attribute(p.name) || name_taken(out, cls, p.name))
            throw Error(ErrorKind::DuplicateName, "duplicate name: split would recreate '" + p.name + "'");
    c.attributes.insert(c.attributes.begin() + pos, parts.begin(), parts.end());
    if (out.historized_attributes.erase({std::string(cls), std::string(attr)}))
        for (const auto& p : parts)
            out.historized_attributes.insert({std::string(cls), p.name});
    return out;
}

WarehouseDef mark_attribute_historized(const WarehouseDef& wh, std::string_view cls, std::string_view attr)
{
    WarehouseDef out = wh;
    auto& c = require_mut(out, cls);
    auto it = require_attr(c, attr);
    if (it->kind == AttributeKind::Specific)
        throw Error(ErrorKind::SpecificAttribute,
                    "specific attribute '" + std::string(attr) + "' is user-owned and cannot be historized");
    out.historized_attributes.insert({std::string(cls), std::string(attr)});
    return out;
}

WarehouseDef mark_class_historized(const WarehouseDef& wh, std::string_view cls)
{
    wh.require_class(cls);
    WarehouseDef out = wh;
    out.historized_classes.insert(std::string(cls));
    return out;
}

WarehouseDef create_environment(const WarehouseDef& wh, std::string_view name, const std::vector<std::string>& classes,
                                const std::vector<std::string>& links)
{
    if (name.empty())
        throw Error(ErrorKind::InvalidArgument, "environment names are non-empty");
    if (classes.empty())
        throw Error(ErrorKind::InvalidArgument, "an environment needs at least one class");
    for (const auto& e : wh.environments)
        if (e.name == name)
            throw Error(ErrorKind::DuplicateName, "duplicate name: environment '" + std::string(name) + "' exists");
    std::set<std::string> members;
    for (const auto& c : classes) {
        if (!wh.find_class(c))
            throw Error(ErrorKind::UnknownElement, "unknown element: class '" + c + "' is not a warehouse class");
        if (!members.insert(c).second)
            throw Error(ErrorKind::DuplicateName, "duplicate name: class '" + c + "' listed twice");
    }
    std::set<std::string> seen_links;
    for (const auto& ln : links) {
        auto it = std::find_if(wh.links.begin(), wh.links.end(), [&](const Link& l) { return l.name == ln; });
        if (it == wh.links.end())
            throw Error(ErrorKind::UnknownElement, "unknown element: link '" + ln + "' is not a warehouse link");
        if (!seen_links.insert(ln).second)
            throw Error(ErrorKind::DuplicateName, "duplicate name: link '" + ln + "' listed twice");
        for (const auto* end : {&it->source, &it->target})
            if (!members.contains(*end))
                throw Error(ErrorKind::EndpointOutsideEnvironment, "endpoint outside environment: link '" + ln +
                                                                       "' reaches class '" + *end + "'");
    }
    for (const auto& c : classes)
        if (const auto* e = wh.environment_of(c))
            throw Error(ErrorKind::DisjointnessViolation, "disjointness violation: class '" + c +
                                                              "' already belongs to environment '" + e->name + "'");
    WarehouseDef out = wh;
    out.environments.push_back({std::string(name), classes, links});
    return out;
}

WarehouseDef delete_environment(const WarehouseDef& wh, std::string_view name)
{
    WarehouseDef out = wh;
    auto n = std::erase_if(out.environments, [&](const Environment& e) { return e.name == name; });
    if (n == 0)
        throw Error(ErrorKind::UnknownElement, "unknown element: environment '" + std::string(name) + "'");
    return out;
}

std::vector<std::string> warehouse_warnings(const WarehouseDef& wh)
{
    std::vector<std::string> out;
    auto graph = wh.schema();
    for (const auto& [c, a] : wh.historized_attributes) {
        std::vector<std::string> chain{c};
        if (graph.find_class(c))
            for (const auto& anc : graph.ancestors(c))
                chain.push_back(anc);
        for (const auto& h : chain)
            if (wh.class_historized(h)) {
                out.push_back("attribute history of '" + c + "." + a + "' is redundant: class '" + h +
                              "' is historized as a whole");
                break;
            }
    }
    return out;
}

void check_closure(const WarehouseDef& wh, const SchemaGraph& source)
{
    for (const auto& c : wh.classes) {
        for (const auto& sup : source.superclasses(c.source_class))
            if (!wh.find_by_source(sup))
                throw Error(ErrorKind::ClosureViolation,
                            "closure violation: superclass '" + sup + "' of '" + c.name + "' is not projected");
        for (const auto& l : source.links)
            if (l.kind == LinkKind::Composition && l.source == c.source_class && !wh.find_by_source(l.target))
                throw Error(ErrorKind::ClosureViolation,
                            "closure violation: component '" + l.target + "' of '" + c.name + "' is not projected");
    }
    for (const auto& l : wh.links)
        if (!wh.find_class(l.source) || !wh.find_class(l.target))
            throw Error(ErrorKind::ClosureViolation, "closure violation: link '" + l.name + "' leaves the warehouse");
}

Value attribute_value(const WarehouseAttribute& attr, const ObjectIndex& index, const EvaluationContext& ctx,
                      std::string_view object_id)
{
    if (!attr.components.empty()) {
        TupleValue t;
        for (const auto& comp : attr.components) {
            t.names.push_back(comp.name);
            t.values.push_back(attribute_value(comp, index, ctx, object_id));
        }
        return t;
    }
    switch (attr.kind) {
    case AttributeKind::Specific: return attr.default_value;
    case AttributeKind::Calculated: return index.evaluate(*attr.formula, ctx, object_id);
    case AttributeKind::Derived: break;
    }
    const auto* o = index.find(object_id);
    if (!o || !o->values)
        return {};
    // "adresse.rue" reads a component of a tuple attribute.
    std::vector<std::string> path;
    boost::split(path, attr.source_attribute, boost::is_any_of("."));
    auto it = o->values->find(path.front());
    if (it == o->values->end())
        return {};
    Value v = it->second;
    for (std::size_t k = 1; k < path.size(); ++k) {
        if (!v.is<TupleValue>())
            return {};
        const auto& t = v.as<TupleValue>();
        auto pos = std::find(t.names.begin(), t.names.end(), path[k]);
        if (pos == t.names.end())
            return {};
        Value inner = t.values[static_cast<std::size_t>(pos - t.names.begin())];
        v = std::move(inner);
    }
    return v;
}

std::vector<ExtractedObject> extract(const WarehouseDef& wh, const SchemaGraph& source,
                                     const std::vector<ObjectSnapshot>& snapshots)
{
    std::vector<ObjectView> views;
    views.reserve(snapshots.size());
    for (const auto& s : snapshots)
        views.push_back({s.id, s.class_name, &s.values, &s.links});
    ObjectIndex index(source, std::move(views));
    auto wgraph = wh.schema();

    std::vector<ExtractedObject> out;
    for (const auto& s : snapshots) {
        const DerivedClass* target = wh.find_by_source(s.class_name);
        if (!target)
            for (const auto& anc : source.ancestors(s.class_name))
                if ((target = wh.find_by_source(anc)))
                    break;
        if (!target)
            continue;
        if (target->selection) {
            EvaluationContext ctx{&source, target->source_class};
            Value keep = index.evaluate(*target->selection, ctx, s.id);
            if (!keep.is<bool>())
                throw Error(ErrorKind::TypeMismatch, "type mismatch: selection of '" + target->name + "' is not boolean");
            if (!keep.as<bool>())
                continue;
        }
        ExtractedObject o;
        o.id = s.id;
        o.class_name = target->name;
        o.source_refs = {s.id};
        std::vector<std::string> chain{target->name};
        for (const auto& anc : wgraph.ancestors(target->name))
            chain.push_back(anc);
        for (const auto& cname : chain) {
            const auto& dc = wh.require_class(cname);
            EvaluationContext ctx{&source, dc.source_class};
            for (const auto& a : dc.attributes)
                if (a.kind != AttributeKind::Specific)
                    o.values[a.name] = attribute_value(a, index, ctx, s.id);
        }
        o.links = s.links;
        out.push_back(std::move(o));
    }
    std::set<std::string> kept;
    for (const auto& o : out)
        kept.insert(o.id);
    std::set<std::string> link_names;
    for (const auto& l : wh.links)
        link_names.insert(l.name);
    for (auto& o : out) {
        std::map<std::string, std::vector<std::string>> links;
        for (auto& [name, targets] : o.links) {
            if (!link_names.contains(name))
                continue;
            std::vector<std::string> t;
            for (const auto& id : targets)
                if (kept.contains(id))
                    t.push_back(id);
            links[name] = std::move(t);
        }
        o.links = std::move(links);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

// ---------------------------------------------------------------------------------------
// JSON

json warehouse_attribute_to_json(const WarehouseAttribute& a)
{
    json j = {{"name", a.name}, {"kind", to_string(a.kind)}, {"type", type_to_json(a.type)}};
    if (a.semantic != Semantic::None)
        j["semantic"] = semantic_to_string(a.semantic);
    if (!a.components.empty()) {
        json comps = json::array();
        for (const auto& c : a.components)
            comps.push_back(warehouse_attribute_to_json(c));
        j["components"] = std::move(comps);
        return j;
    }
    switch (a.kind) {
    case AttributeKind::Derived: j["source_attribute"] = a.source_attribute; break;
    case AttributeKind::Calculated: j["formula"] = a.formula->text(); break;
    case AttributeKind::Specific: j["default"] = value_to_json(a.default_value); break;
    }
    return j;
}

namespace {

WarehouseAttribute attribute_from_json(const json& j)
{
    WarehouseAttribute a;
    a.name = j.at("name").get<std::string>();
    auto kind = parse_attribute_kind(j.at("kind").get<std::string>());
    if (!kind)
        throw Error(ErrorKind::ParseError, "unknown attribute kind for '" + a.name + "'");
    a.kind = *kind;
    a.type = type_from_json(j.at("type"));
    if (j.contains("semantic")) {
        auto s = parse_semantic(j["semantic"].get<std::string>());
        if (!s)
            throw Error(ErrorKind::ParseError, "unknown semantic tag for '" + a.name + "'");
        a.semantic = *s;
    }
    if (j.contains("components")) {
        for (const auto& c : j["components"])
            a.components.push_back(attribute_from_json(c));
        if (a.kind == AttributeKind::Specific) {
            TupleValue t;
            for (const auto& c : a.components) {
                t.names.push_back(c.name);
                t.values.push_back(c.default_value);
            }
            a.default_value = std::move(t);
        }
        return a;
    }
    switch (a.kind) {
    case AttributeKind::Derived: a.source_attribute = j.at("source_attribute").get<std::string>(); break;
    case AttributeKind::Calculated: a.formula = parse_formula(j.at("formula").get<std::string>()); break;
    case AttributeKind::Specific: a.default_value = value_from_json(j.value("default", json()), a.type); break;
    }
    return a;
}

} // namespace

json warehouse_to_json(const WarehouseDef& wh)
{
    json classes = json::array();
    for (const auto& c : wh.classes) {
        json attrs = json::array();
        for (const auto& a : c.attributes)
            attrs.push_back(warehouse_attribute_to_json(a));
        json jc = {{"name", c.name},
                   {"source_class", c.source_class},
                   {"attributes", std::move(attrs)},
                   {"operations", c.operations},
                   {"selection", c.selection ? json(c.selection->text()) : json()}};
        if (!c.closure_reason.empty())
            jc["closure_reason"] = c.closure_reason;
        classes.push_back(std::move(jc));
    }
    json links = json::array();
    for (const auto& l : wh.links)
        links.push_back(link_to_json(l));
    json hattrs = json::array();
    for (const auto& [c, a] : wh.historized_attributes)
        hattrs.push_back({{"class", c}, {"attribute", a}});
    json envs = json::array();
    for (const auto& e : wh.environments)
        envs.push_back({{"name", e.name}, {"classes", e.classes}, {"links", e.links}});
    return {{"classes", std::move(classes)},
            {"links", std::move(links)},
            {"historized_attributes", std::move(hattrs)},
            {"historized_classes", wh.historized_classes},
            {"environments", std::move(envs)}};
}

WarehouseDef warehouse_from_json(const json& j)
{
    WarehouseDef wh;
    try {
        for (const auto& jc : j.at("classes")) {
            DerivedClass c;
            c.name = jc.at("name").get<std::string>();
            c.source_class = jc.at("source_class").get<std::string>();
            for (const auto& ja : jc.at("attributes"))
                c.attributes.push_back(attribute_from_json(ja));
            c.operations = jc.value("operations", std::vector<std::string>{});
            if (jc.contains("selection") && !jc["selection"].is_null())
                c.selection = parse_formula(jc["selection"].get<std::string>());
            c.closure_reason = jc.value("closure_reason", "");
            wh.classes.push_back(std::move(c));
        }
        for (const auto& jl : j.at("links"))
            wh.links.push_back(link_from_json(jl));
        for (const auto& h : j.value("historized_attributes", json::array()))
            wh.historized_attributes.insert({h.at("class").get<std::string>(), h.at("attribute").get<std::string>()});
        for (const auto& h : j.value("historized_classes", json::array()))
            wh.historized_classes.insert(h.get<std::string>());
        for (const auto& e : j.value("environments", json::array()))
            wh.environments.push_back({e.at("name").get<std::string>(), e.at("classes").get<std::vector<std::string>>(),
                                       e.at("links").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed warehouse definition: ") + e.what());
    }
    return wh;
}

} // namespace dw
