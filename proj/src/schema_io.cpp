#include "dw/schema_io.hpp"

#include "dw/error.hpp"

#include <set>

namespace dw {

namespace {

const json& require_field(const json& j, const char* field, const std::string& where)
{
    if (!j.is_object() || !j.contains(field))
        throw Error(ErrorKind::ParseError, where + ": missing field '" + field + "'");
    return j.at(field);
}

std::string require_string(const json& j, const char* field, const std::string& where)
{
    const auto& v = require_field(j, field, where);
    if (!v.is_string())
        throw Error(ErrorKind::ParseError, where + ": field '" + field + "' must be a string");
    return v.get<std::string>();
}

json cardinality_to_json(const Cardinality& c)
{
    return json::array({c.min, c.max_one ? json(1) : json("*")});
}

Cardinality cardinality_from_json(const json& j, const std::string& where)
{
    auto bad = [&] { return Error(ErrorKind::ParseError, where + ": cardinality must be [min, 1|\"*\"]"); };
    if (!j.is_array() || j.empty() || j.size() > 2)
        throw bad();
    Cardinality c;
    const json& max = j.back();
    if (j.size() == 2) {
        if (!j[0].is_number_integer() || j[0].get<std::int64_t>() < 0)
            throw bad();
        c.min = j[0].get<std::uint32_t>();
    }
    if (max.is_number_integer() && max.get<std::int64_t>() == 1)
        c.max_one = true;
    else if (max.is_string() && (max == "*" || max == "many" || max == "n"))
        c.max_one = false;
    else
        throw bad();
    if (c.max_one && c.min > 1)
        throw Error(ErrorKind::InvalidArgument, where + ": cardinality min exceeds max");
    return c;
}

std::string semantic_name(Semantic s)
{
    switch (s) {
    case Semantic::Date: return "date";
    case Semantic::Address: return "address";
    case Semantic::None: break;
    }
    return "";
}

} // namespace

std::string semantic_to_string(Semantic s)
{
    return semantic_name(s);
}

std::optional<Semantic> parse_semantic(std::string_view text)
{
    if (text == "date")
        return Semantic::Date;
    if (text == "address")
        return Semantic::Address;
    if (text.empty() || text == "none")
        return Semantic::None;
    return std::nullopt;
}

json parse_json(std::string_view document)
{
    try {
        return json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed JSON: ") + e.what());
    }
}

json type_to_json(const AttributeType& type)
{
    switch (type.kind) {
    case TypeKind::Tuple: {
        json comps = json::array();
        for (const auto& c : type.components)
            comps.push_back({{"name", c.name}, {"type", type_to_json(c.type)}});
        return {{"tuple", comps}};
    }
    case TypeKind::Set: return {{"set", type_to_json(*type.element)}};
    case TypeKind::List: return {{"list", type_to_json(*type.element)}};
    default: return std::string(to_string(type.kind));
    }
}

AttributeType type_from_json(const json& j)
{
    if (j.is_string()) {
        auto s = j.get<std::string>();
        for (auto k : {TypeKind::String, TypeKind::Integer, TypeKind::Decimal, TypeKind::Boolean, TypeKind::Date})
            if (s == to_string(k))
                return AttributeType::simple(k);
        throw Error(ErrorKind::InvalidType, "unknown type '" + s + "'");
    }
    if (j.is_object() && j.size() == 1) {
        if (j.contains("tuple")) {
            if (!j["tuple"].is_array())
                throw Error(ErrorKind::ParseError, "tuple type needs an array of components");
            std::vector<TypeComponent> comps;
            for (const auto& c : j["tuple"])
                comps.push_back({require_string(c, "name", "tuple component"),
                                 type_from_json(require_field(c, "type", "tuple component"))});
            return AttributeType::tuple(std::move(comps));
        }
        if (j.contains("set"))
            return AttributeType::set_of(type_from_json(j["set"]));
        if (j.contains("list"))
            return AttributeType::list_of(type_from_json(j["list"]));
    }
    throw Error(ErrorKind::InvalidType, "malformed type " + j.dump());
}

json value_to_json(const Value& value)
{
    struct Visitor {
        json operator()(std::monostate) const { return nullptr; }
        json operator()(bool b) const { return b; }
        json operator()(std::int64_t i) const { return i; }
        json operator()(const Decimal& d) const { return d.to_string(); }
        json operator()(const std::string& s) const { return s; }
        json operator()(Date d) const { return d.to_string(); }
        json operator()(const TupleValue& t) const
        {
            json out = json::object();
            for (std::size_t i = 0; i < t.names.size(); ++i)
                out[t.names[i]] = value_to_json(t.values[i]);
            return out;
        }
        json operator()(const ListValue& l) const
        {
            json out = json::array();
            for (const auto& v : l)
                out.push_back(value_to_json(v));
            return out;
        }
    };
    return std::visit(Visitor{}, value.data);
}

Value value_from_json(const json& j, const AttributeType& type)
{
    auto mismatch = [&] {
        return Error(ErrorKind::TypeMismatch, "type mismatch: " + j.dump() + " is not a " + type.to_string());
    };
    if (j.is_null())
        return Value{};
    switch (type.kind) {
    case TypeKind::String:
        if (!j.is_string())
            throw mismatch();
        return j.get<std::string>();
    case TypeKind::Integer:
        if (!j.is_number_integer())
            throw mismatch();
        if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
            throw mismatch();
        return j.get<std::int64_t>();
    case TypeKind::Decimal: {
        std::optional<Decimal> d;
        if (j.is_number())
            d = Decimal::parse(j.dump());
        else if (j.is_string())
            d = Decimal::parse(j.get<std::string>());
        if (!d)
            throw mismatch();
        return *d;
    }
    case TypeKind::Boolean:
        if (!j.is_boolean())
            throw mismatch();
        return j.get<bool>();
    case TypeKind::Date: {
        if (!j.is_string())
            throw mismatch();
        auto d = Date::parse(j.get<std::string>());
        if (!d)
            throw mismatch();
        return *d;
    }
    case TypeKind::Tuple: {
        if (!j.is_object())
            throw mismatch();
        TupleValue t;
        for (const auto& c : type.components) {
            t.names.push_back(c.name);
            t.values.push_back(j.contains(c.name) ? value_from_json(j.at(c.name), c.type) : Value{});
        }
        for (const auto& [key, _] : j.items())
            if (std::none_of(type.components.begin(), type.components.end(),
                             [&](const TypeComponent& c) { return c.name == key; }))
                throw mismatch();
        return t;
    }
    case TypeKind::Set:
    case TypeKind::List: {
        if (!j.is_array())
            throw mismatch();
        ListValue l;
        for (const auto& e : j)
            l.push_back(value_from_json(e, *type.element));
        return l;
    }
    }
    throw mismatch();
}

json schema_to_json(const SchemaGraph& graph)
{
    json classes = json::array();
    for (const auto& c : graph.classes) {
        json attrs = json::array();
        for (const auto& a : c.attributes) {
            json attr = {{"name", a.name}, {"type", type_to_json(a.type)}};
            if (a.semantic != Semantic::None)
                attr["semantic"] = semantic_name(a.semantic);
            attrs.push_back(std::move(attr));
        }
        classes.push_back({{"name", c.name}, {"attributes", attrs}, {"operations", c.operations}});
    }
    json links = json::array();
    for (const auto& l : graph.links)
        links.push_back(link_to_json(l));
    return {{"classes", classes}, {"links", links}};
}

json link_to_json(const Link& l)
{
    json link = {{"name", l.name}, {"kind", to_string(l.kind)}, {"source", l.source}, {"target", l.target}};
    if (l.cardinality)
        link["cardinality"] = {{"source", cardinality_to_json(l.cardinality->source)},
                               {"target", cardinality_to_json(l.cardinality->target)}};
    return link;
}

Link link_from_json(const json& jl)
{
    Link l;
    l.name = require_string(jl, "name", "link");
    auto where = "link '" + l.name + "'";
    auto kind = parse_link_kind(require_string(jl, "kind", where));
    if (!kind)
        throw Error(ErrorKind::ParseError, where + ": unknown kind");
    l.kind = *kind;
    l.source = require_string(jl, "source", where);
    l.target = require_string(jl, "target", where);
    if (jl.contains("cardinality")) {
        const auto& card = jl["cardinality"];
        if (!card.is_object())
            throw Error(ErrorKind::ParseError, where + ": cardinality must be an object");
        LinkCardinality lc;
        if (card.contains("source"))
            lc.source = cardinality_from_json(card["source"], where);
        if (card.contains("target"))
            lc.target = cardinality_from_json(card["target"], where);
        l.cardinality = lc;
    } else if (l.kind != LinkKind::Inheritance) {
        l.cardinality = LinkCardinality{};
    }
    return l;
}

SchemaGraph schema_from_json(const json& j)
{
    if (!j.is_object())
        throw Error(ErrorKind::ParseError, "schema document must be an object");
    SchemaGraph g;
    if (j.contains("classes")) {
        if (!j["classes"].is_array())
            throw Error(ErrorKind::ParseError, "'classes' must be an array");
        for (const auto& jc : j["classes"]) {
            ClassDef c;
            c.name = require_string(jc, "name", "class");
            if (jc.contains("attributes")) {
                if (!jc["attributes"].is_array())
                    throw Error(ErrorKind::ParseError, "class '" + c.name + "': 'attributes' must be an array");
                for (const auto& ja : jc["attributes"]) {
                    Attribute a;
                    a.name = require_string(ja, "name", "attribute of '" + c.name + "'");
                    a.type = type_from_json(require_field(ja, "type", "attribute '" + a.name + "'"));
                    if (ja.contains("semantic")) {
                        auto s = ja["semantic"].get<std::string>();
                        if (s == "date")
                            a.semantic = Semantic::Date;
                        else if (s == "address")
                            a.semantic = Semantic::Address;
                        else
                            throw Error(ErrorKind::ParseError, "unknown semantic tag '" + s + "'");
                    }
                    c.attributes.push_back(std::move(a));
                }
            }
            if (jc.contains("operations")) {
                for (const auto& op : jc["operations"]) {
                    if (!op.is_string())
                        throw Error(ErrorKind::ParseError, "class '" + c.name + "': operations are strings");
                    c.operations.push_back(op.get<std::string>());
                }
            }
            g.classes.push_back(std::move(c));
        }
    }
    if (j.contains("links")) {
        if (!j["links"].is_array())
            throw Error(ErrorKind::ParseError, "'links' must be an array");
        for (const auto& jl : j["links"])
            g.links.push_back(link_from_json(jl));
    }
    g.validate();
    return g;
}

SchemaGraph load_schema(std::string_view document)
{
    auto j = parse_json(document);
    try {
        return schema_from_json(j);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed schema: ") + e.what());
    }
}

std::string serialize_schema(const SchemaGraph& graph)
{
    return schema_to_json(graph).dump(2) + "\n";
}

namespace {

/// Outgoing instance-level links of `cls` (its own and inherited).
std::vector<const Link*> instance_links(const SchemaGraph& graph, const std::string& cls)
{
    std::vector<const Link*> out;
    auto up = graph.ancestors(cls);
    up.insert(up.begin(), cls);
    for (const auto& l : graph.links)
        if (l.kind != LinkKind::Inheritance && std::find(up.begin(), up.end(), l.source) != up.end())
            out.push_back(&l);
    return out;
}

} // namespace

void check_snapshots(const SchemaGraph& graph, const std::vector<ObjectSnapshot>& snapshots, const KnownObjects& prior)
{
    KnownObjects known = prior;
    for (const auto& s : snapshots) {
        if (!graph.find_class(s.class_name))
            throw Error(ErrorKind::UnknownClass, "object '" + s.id + "': unknown class '" + s.class_name + "'");
        known[s.id] = s.class_name;
    }
    std::set<std::string> ids;
    for (const auto& s : snapshots) {
        auto where = "object '" + s.id + "'";
        if (s.id.empty())
            throw Error(ErrorKind::InvalidArgument, "object with empty id");
        if (!ids.insert(s.id).second)
            throw Error(ErrorKind::DuplicateName, "duplicate name: object id '" + s.id + "' appears twice");
        auto attrs = graph.all_attributes(s.class_name);
        for (const auto& [name, value] : s.values) {
            auto it = std::find_if(attrs.begin(), attrs.end(), [&](const Attribute& a) { return a.name == name; });
            if (it == attrs.end())
                throw Error(ErrorKind::UnknownAttribute,
                            where + ": class '" + s.class_name + "' has no attribute '" + name + "'");
            if (!conforms(value, it->type))
                throw Error(ErrorKind::TypeMismatch, where + ": type mismatch on '" + name + "': " +
                                                         value.to_display() + " is not a " + it->type.to_string());
        }
        auto links = instance_links(graph, s.class_name);
        for (const auto& [name, _] : s.links)
            if (std::none_of(links.begin(), links.end(), [&](const Link* l) { return l->name == name; }))
                throw Error(ErrorKind::UnknownLink, where + ": class '" + s.class_name + "' has no link '" + name + "'");
        for (const Link* l : links) {
            auto it = s.links.find(l->name);
            std::size_t count = it == s.links.end() ? 0 : it->second.size();
            const auto& card = l->cardinality ? l->cardinality->target : Cardinality{};
            if (count < card.min || (card.max_one && count > 1))
                throw Error(ErrorKind::CardinalityViolation, where + ": link '" + l->name + "' has " +
                                                                 std::to_string(count) + " targets");
            if (it == s.links.end())
                continue;
            for (const auto& target : it->second) {
                auto k = known.find(target);
                if (k == known.end())
                    throw Error(ErrorKind::UnresolvedReference,
                                where + ": link '" + l->name + "' refers to unknown object '" + target + "'");
                if (!graph.is_a(k->second, l->target))
                    throw Error(ErrorKind::TypeMismatch, where + ": link '" + l->name + "' target '" + target +
                                                             "' is a " + k->second + ", expected " + l->target);
            }
        }
    }
}

std::vector<ObjectSnapshot> load_instances(const SchemaGraph& graph, std::string_view document,
                                           Timestamp extraction_date, const KnownObjects& prior)
{
    auto j = parse_json(document);
    std::vector<ObjectSnapshot> out;
    if (j.is_object() && j.empty())
        return out;
    if (!j.is_object() || !j.contains("objects") || !j["objects"].is_array())
        throw Error(ErrorKind::ParseError, "instance document needs an 'objects' array");
    for (const auto& jo : j["objects"]) {
        ObjectSnapshot s;
        s.id = require_string(jo, "id", "object");
        s.class_name = require_string(jo, "class", "object '" + s.id + "'");
        const auto& cls = graph.find_class(s.class_name);
        if (!cls)
            throw Error(ErrorKind::UnknownClass, "object '" + s.id + "': unknown class '" + s.class_name + "'");
        auto attrs = graph.all_attributes(s.class_name);
        if (jo.contains("values")) {
            if (!jo["values"].is_object())
                throw Error(ErrorKind::ParseError, "object '" + s.id + "': 'values' must be an object");
            for (const auto& [name, jv] : jo["values"].items()) {
                auto it = std::find_if(attrs.begin(), attrs.end(), [&](const Attribute& a) { return a.name == name; });
                if (it == attrs.end())
                    throw Error(ErrorKind::UnknownAttribute,
                                "object '" + s.id + "': class '" + s.class_name + "' has no attribute '" + name + "'");
                try {
                    s.values[name] = value_from_json(jv, it->type);
                } catch (const Error& e) {
                    throw Error(e.kind(), "object '" + s.id + "', attribute '" + name + "': " + e.what());
                }
            }
        }
        if (jo.contains("links")) {
            if (!jo["links"].is_object())
                throw Error(ErrorKind::ParseError, "object '" + s.id + "': 'links' must be an object");
            for (const auto& [name, jt] : jo["links"].items()) {
                auto& targets = s.links[name];
                if (jt.is_string())
                    targets.push_back(jt.get<std::string>());
                else if (jt.is_array())
                    for (const auto& t : jt) {
                        if (!t.is_string())
                            throw Error(ErrorKind::ParseError, "object '" + s.id + "': link targets are ids");
                        targets.push_back(t.get<std::string>());
                    }
                else if (!jt.is_null())
                    throw Error(ErrorKind::ParseError, "object '" + s.id + "': link targets are ids");
            }
        }
        s.extracted_at = extraction_date;
        if (jo.contains("extracted_at")) {
            auto ts = jo["extracted_at"].is_string() ? Timestamp::parse(jo["extracted_at"].get<std::string>())
                                                     : std::nullopt;
            if (!ts)
                throw Error(ErrorKind::ParseError, "object '" + s.id + "': extracted_at must be an ISO-8601 date");
            s.extracted_at = *ts;
        }
        out.push_back(std::move(s));
    }
    check_snapshots(graph, out, prior);
    return out;
}

json snapshot_to_json(const ObjectSnapshot& snapshot)
{
    json values = json::object();
    for (const auto& [k, v] : snapshot.values)
        values[k] = value_to_json(v);
    json links = json::object();
    for (const auto& [k, v] : snapshot.links)
        links[k] = v;
    return {{"id", snapshot.id},
            {"class", snapshot.class_name},
            {"values", values},
            {"links", links},
            {"extracted_at", snapshot.extracted_at.to_string()}};
}

json instances_to_json(const std::vector<ObjectSnapshot>& snapshots)
{
    json objects = json::array();
    for (const auto& s : snapshots)
        objects.push_back(snapshot_to_json(s));
    return {{"objects", objects}};
}

} // namespace dw
