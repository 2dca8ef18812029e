#include "dw/schema.hpp"

#include "dw/error.hpp"

#include <algorithm>
#include <set>

namespace dw {

std::string_view to_string(TypeKind kind)
{
    switch (kind) {
    case TypeKind::String: return "string";
    case TypeKind::Integer: return "integer";
    case TypeKind::Decimal: return "decimal";
    case TypeKind::Boolean: return "boolean";
    case TypeKind::Date: return "date";
    case TypeKind::Tuple: return "tuple";
    case TypeKind::Set: return "set";
    case TypeKind::List: return "list";
    }
    return "?";
}

AttributeType AttributeType::simple(TypeKind kind)
{
    AttributeType t;
    t.kind = kind;
    return t;
}

AttributeType AttributeType::tuple(std::vector<TypeComponent> components)
{
    AttributeType t;
    t.kind = TypeKind::Tuple;
    t.components = std::move(components);
    return t;
}

AttributeType AttributeType::set_of(AttributeType element)
{
    AttributeType t;
    t.kind = TypeKind::Set;
    t.element = std::make_shared<const AttributeType>(std::move(element));
    return t;
}

AttributeType AttributeType::list_of(AttributeType element)
{
    AttributeType t;
    t.kind = TypeKind::List;
    t.element = std::make_shared<const AttributeType>(std::move(element));
    return t;
}

std::string AttributeType::to_string() const
{
    switch (kind) {
    case TypeKind::Tuple: {
        std::string out = "tuple(";
        for (std::size_t i = 0; i < components.size(); ++i) {
            if (i)
                out += ", ";
            out += components[i].name + ": " + components[i].type.to_string();
        }
        return out + ")";
    }
    case TypeKind::Set:
    case TypeKind::List:
        return std::string(dw::to_string(kind)) + "(" + (element ? element->to_string() : "?") + ")";
    default:
        return std::string(dw::to_string(kind));
    }
}

bool operator==(const AttributeType& a, const AttributeType& b)
{
    if (a.kind != b.kind || a.components != b.components)
        return false;
    if (!a.element || !b.element)
        return !a.element && !b.element;
    return *a.element == *b.element;
}

const Attribute* ClassDef::find_attribute(std::string_view attr) const
{
    auto it = std::find_if(attributes.begin(), attributes.end(), [&](const Attribute& a) { return a.name == attr; });
    return it == attributes.end() ? nullptr : &*it;
}

std::string_view to_string(LinkKind kind)
{
    switch (kind) {
    case LinkKind::Association: return "association";
    case LinkKind::Composition: return "composition";
    case LinkKind::Inheritance: return "inheritance";
    }
    return "?";
}

std::optional<LinkKind> parse_link_kind(std::string_view text)
{
    if (text == "association")
        return LinkKind::Association;
    if (text == "composition")
        return LinkKind::Composition;
    if (text == "inheritance")
        return LinkKind::Inheritance;
    return std::nullopt;
}

const ClassDef* SchemaGraph::find_class(std::string_view name) const
{
    auto it = std::find_if(classes.begin(), classes.end(), [&](const ClassDef& c) { return c.name == name; });
    return it == classes.end() ? nullptr : &*it;
}

ClassDef* SchemaGraph::find_class(std::string_view name)
{
    auto it = std::find_if(classes.begin(), classes.end(), [&](const ClassDef& c) { return c.name == name; });
    return it == classes.end() ? nullptr : &*it;
}

const Link* SchemaGraph::find_link(std::string_view name) const
{
    auto it = std::find_if(links.begin(), links.end(), [&](const Link& l) { return l.name == name; });
    return it == links.end() ? nullptr : &*it;
}

const ClassDef& SchemaGraph::require_class(std::string_view name) const
{
    if (const auto* c = find_class(name))
        return *c;
    throw Error(ErrorKind::UnknownClass, "unknown class '" + std::string(name) + "'");
}

std::vector<std::string> SchemaGraph::superclasses(std::string_view cls) const
{
    std::vector<std::string> out;
    for (const auto& l : links)
        if (l.kind == LinkKind::Inheritance && l.source == cls)
            out.push_back(l.target);
    return out;
}

std::vector<std::string> SchemaGraph::ancestors(std::string_view cls) const
{
    std::vector<std::string> out;
    std::vector<std::string> frontier{std::string(cls)};
    std::set<std::string> seen{std::string(cls)};
    while (!frontier.empty()) {
        std::vector<std::string> next;
        for (const auto& c : frontier)
            for (auto& s : superclasses(c))
                if (seen.insert(s).second) {
                    out.push_back(s);
                    next.push_back(s);
                }
        frontier = std::move(next);
    }
    return out;
}

std::vector<std::string> SchemaGraph::descendants(std::string_view cls) const
{
    std::vector<std::string> out;
    std::vector<std::string> frontier{std::string(cls)};
    std::set<std::string> seen{std::string(cls)};
    while (!frontier.empty()) {
        std::vector<std::string> next;
        for (const auto& c : frontier)
            for (const auto& l : links)
                if (l.kind == LinkKind::Inheritance && l.target == c && seen.insert(l.source).second) {
                    out.push_back(l.source);
                    next.push_back(l.source);
                }
        frontier = std::move(next);
    }
    return out;
}

bool SchemaGraph::is_a(std::string_view cls, std::string_view ancestor) const
{
    if (cls == ancestor)
        return true;
    auto up = ancestors(cls);
    return std::find(up.begin(), up.end(), ancestor) != up.end();
}

std::vector<Attribute> SchemaGraph::all_attributes(std::string_view cls) const
{
    std::vector<Attribute> out;
    std::set<std::string> seen;
    auto up = ancestors(cls);
    std::reverse(up.begin(), up.end());
    up.emplace_back(cls);
    for (const auto& name : up)
        if (const auto* c = find_class(name))
            for (const auto& a : c->attributes)
                if (seen.insert(a.name).second)
                    out.push_back(a);
    return out;
}

std::optional<Attribute> SchemaGraph::resolve_attribute(std::string_view cls, std::string_view attr, bool lenient) const
{
    auto attrs = all_attributes(cls);
    for (const auto& a : attrs)
        if (a.name == attr)
            return a;
    if (!lenient)
        return std::nullopt;
    std::optional<Attribute> found;
    for (const auto& a : attrs) {
        std::string_view n = a.name;
        if (n.size() > 2 && (n.starts_with("D_") || n.starts_with("C_") || n.starts_with("S_")) && n.substr(2) == attr) {
            if (found)
                return std::nullopt;  // ambiguous
            found = a;
        }
    }
    return found;
}

namespace {

void validate_type(const AttributeType& type, const std::string& where)
{
    switch (type.kind) {
    case TypeKind::Tuple: {
        if (type.components.empty())
            throw Error(ErrorKind::InvalidType, where + ": tuple type needs at least one component");
        std::set<std::string> names;
        for (const auto& c : type.components) {
            if (!names.insert(c.name).second)
                throw Error(ErrorKind::DuplicateName, where + ": duplicate tuple component '" + c.name + "'");
            validate_type(c.type, where + "." + c.name);
        }
        break;
    }
    case TypeKind::Set:
    case TypeKind::List:
        if (!type.element)
            throw Error(ErrorKind::InvalidType, where + ": collection type without element type");
        validate_type(*type.element, where + "[]");
        break;
    default:
        if (!type.components.empty() || type.element)
            throw Error(ErrorKind::InvalidType, where + ": simple type with structure");
    }
}

} // namespace

void SchemaGraph::validate() const
{
    std::set<std::string> class_names;
    for (const auto& c : classes) {
        if (c.name.empty())
            throw Error(ErrorKind::InvalidArgument, "class with empty name");
        if (!class_names.insert(c.name).second)
            throw Error(ErrorKind::DuplicateName, "duplicate name: class '" + c.name + "'");
        std::set<std::string> attr_names;
        for (const auto& a : c.attributes) {
            if (!attr_names.insert(a.name).second)
                throw Error(ErrorKind::DuplicateName, "duplicate name: attribute '" + c.name + "." + a.name + "'");
            validate_type(a.type, c.name + "." + a.name);
        }
    }
    std::set<std::string> link_names;
    for (const auto& l : links) {
        if (!link_names.insert(l.name).second)
            throw Error(ErrorKind::DuplicateName, "duplicate name: link '" + l.name + "'");
        for (const auto* end : {&l.source, &l.target})
            if (!class_names.contains(*end))
                throw Error(ErrorKind::DanglingEndpoint,
                            "dangling endpoint: link '" + l.name + "' refers to absent class '" + *end + "'");
        if (l.kind == LinkKind::Inheritance && l.cardinality)
            throw Error(ErrorKind::InvalidArgument, "inheritance link '" + l.name + "' cannot carry a cardinality");
    }

    // Kahn's algorithm over the inheritance sub-graph.
    std::map<std::string, int> indegree;
    for (const auto& c : classes)
        indegree[c.name] = 0;
    for (const auto& l : links)
        if (l.kind == LinkKind::Inheritance)
            ++indegree[l.target];
    std::vector<std::string> ready;
    for (const auto& [name, deg] : indegree)
        if (deg == 0)
            ready.push_back(name);
    std::size_t visited = 0;
    while (!ready.empty()) {
        auto cur = ready.back();
        ready.pop_back();
        ++visited;
        for (const auto& l : links)
            if (l.kind == LinkKind::Inheritance && l.source == cur && --indegree[l.target] == 0)
                ready.push_back(l.target);
    }
    if (visited != classes.size()) {
        std::string culprit;
        for (const auto& [name, deg] : indegree)
            if (deg > 0) {
                culprit = name;
                break;
            }
        throw Error(ErrorKind::InheritanceCycle, "inheritance cycle through class '" + culprit + "'");
    }
}

std::vector<Neighbor> neighbors(const SchemaGraph& graph, std::string_view cls, std::optional<LinkKind> kind)
{
    graph.require_class(cls);
    std::vector<Neighbor> out;
    for (const auto& l : graph.links) {
        if (kind && l.kind != *kind)
            continue;
        if (l.source == cls)
            out.push_back({l, graph.require_class(l.target), true});
        else if (l.target == cls)
            out.push_back({l, graph.require_class(l.source), false});
    }
    return out;
}

bool conforms(const Value& value, const AttributeType& type)
{
    if (value.is_null())
        return true;
    switch (type.kind) {
    case TypeKind::String: return value.is<std::string>();
    case TypeKind::Integer: return value.is<std::int64_t>();
    case TypeKind::Decimal: return value.is<Decimal>();
    case TypeKind::Boolean: return value.is<bool>();
    case TypeKind::Date: return value.is<Date>();
    case TypeKind::Tuple: {
        if (!value.is<TupleValue>())
            return false;
        const auto& t = value.as<TupleValue>();
        if (t.names.size() != type.components.size() || t.values.size() != t.names.size())
            return false;
        for (std::size_t i = 0; i < t.names.size(); ++i)
            if (t.names[i] != type.components[i].name || !conforms(t.values[i], type.components[i].type))
                return false;
        return true;
    }
    case TypeKind::Set:
    case TypeKind::List: {
        if (!value.is<ListValue>() || !type.element)
            return false;
        for (const auto& v : value.as<ListValue>())
            if (!conforms(v, *type.element))
                return false;
        return true;
    }
    }
    return false;
}

} // namespace dw

namespace dw {

bool NavigationPath::single_valued() const
{
    return std::all_of(steps.begin(), steps.end(), [](const NavStep& s) { return s.to_one; });
}

std::optional<NavigationPath> find_path(const SchemaGraph& graph, std::string_view from, std::string_view to)
{
    if (!graph.find_class(from) || !graph.find_class(to))
        return std::nullopt;
    std::map<std::string, NavStep> parent;
    std::set<std::string> seen{std::string(from)};
    std::vector<std::string> frontier{std::string(from)};
    while (!frontier.empty() && !seen.contains(std::string(to))) {
        std::vector<std::string> next;
        for (const auto& cur : frontier) {
            for (const auto& l : graph.links) {
                for (bool forward : {true, false}) {
                    const auto& here = forward ? l.source : l.target;
                    const auto& there = forward ? l.target : l.source;
                    if (here != cur || seen.contains(there))
                        continue;
                    bool to_one = l.kind == LinkKind::Inheritance ||
                                  (forward ? l.target_max_one() : l.source_max_one());
                    parent[there] = NavStep{l.name, l.kind, forward, cur, there, to_one};
                    seen.insert(there);
                    next.push_back(there);
                }
            }
        }
        frontier = std::move(next);
    }
    if (!seen.contains(std::string(to)))
        return std::nullopt;
    NavigationPath path;
    for (std::string cur(to); cur != from;) {
        const auto& step = parent.at(cur);
        path.steps.push_back(step);
        cur = step.from;
    }
    std::reverse(path.steps.begin(), path.steps.end());
    return path;
}

} // namespace dw
