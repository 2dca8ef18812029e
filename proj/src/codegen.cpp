#include "dw/codegen.hpp"

#include "dw/binding.hpp"
#include "dw/error.hpp"
#include "dw/hash.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

namespace dw {

std::string_view to_string(Target target)
{
    return target == Target::Sql ? "generic-sql" : "neutral-plan";
}

std::optional<Target> parse_target(std::string_view text)
{
    if (text == "neutral-plan")
        return Target::NeutralPlan;
    if (text == "sql" || text == "generic-sql")
        return Target::Sql;
    return std::nullopt;
}

namespace {

constexpr std::size_t kMaxIdentifier = 63;

/// Longest prefix of `s` of at most `n` bytes that does not split a UTF-8 sequence.
std::string utf8_prefix(std::string_view s, std::size_t n)
{
    if (s.size() <= n)
        return std::string(s);
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80)
        --n;
    return std::string(s.substr(0, n));
}

std::string quote(std::string_view physical)
{
    std::string out = "\"";
    for (char c : physical) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

/// Physical identifiers: at most 63 bytes, a hash suffix when truncation collides. One
/// scope for tables and constraints, one per table for columns.
class Names {
public:
    std::string table(const std::string& logical) { return allocate(tables_, "", logical); }
    std::string column(const std::string& table_logical, const std::string& logical)
    {
        return allocate(columns_[table_logical], table_logical, logical);
    }

private:
    struct Scope {
        std::map<std::string, std::string> assigned;
        std::set<std::string> used;
    };

    static std::string allocate(Scope& scope, const std::string& salt, const std::string& logical)
    {
        if (auto it = scope.assigned.find(logical); it != scope.assigned.end())
            return it->second;
        std::string physical = utf8_prefix(logical, kMaxIdentifier);
        if (scope.used.contains(physical))
            physical = utf8_prefix(logical, kMaxIdentifier - 9) + "_" + sha256_hex(salt + "\x1f" + logical).substr(0, 8);
        scope.used.insert(physical);
        scope.assigned.emplace(logical, physical);
        return physical;
    }

    Scope tables_;
    std::map<std::string, Scope> columns_;
};

std::string neutral_type(const AttributeType& t)
{
    switch (t.kind) {
    case TypeKind::String: return "string";
    case TypeKind::Integer: return "integer";
    case TypeKind::Decimal: return "decimal";
    case TypeKind::Boolean: return "boolean";
    case TypeKind::Date: return "date";
    default: return "string";
    }
}

std::string sql_type(std::string_view neutral)
{
    if (neutral == "identifier")
        return "VARCHAR(255)";
    if (neutral == "string")
        return "VARCHAR(4000)";
    if (neutral == "integer")
        return "BIGINT";
    if (neutral == "decimal")
        return "NUMERIC(38,18)";
    if (neutral == "boolean")
        return "BOOLEAN";
    if (neutral == "date")
        return "DATE";
    return "TIMESTAMP";
}

struct FlatColumn {
    std::string path;  // underscore path
    AttributeType type;
};

struct Collection {
    std::string path;
    AttributeType element;
};

void flatten(const std::string& path, const AttributeType& t, std::vector<FlatColumn>& cols,
             std::vector<Collection>& collections)
{
    if (t.is_simple()) {
        cols.push_back({path, t});
    } else if (t.kind == TypeKind::Tuple) {
        for (const auto& c : t.components)
            flatten(path + "_" + c.name, c.type, cols, collections);
    } else {
        collections.push_back({path, *t.element});
    }
}

/// A tuple value's flattened leaves, aligned with flatten().
void flatten_value(const Value& v, const AttributeType& t, std::vector<Value>& out)
{
    if (t.is_simple()) {
        out.push_back(v);
    } else if (t.kind == TypeKind::Tuple) {
        for (std::size_t i = 0; i < t.components.size(); ++i) {
            Value inner;
            if (v.is<TupleValue>() && i < v.as<TupleValue>().values.size())
                inner = v.as<TupleValue>().values[i];
            flatten_value(inner, t.components[i].type, out);
        }
    }
}

std::string sql_literal(const Value& v)
{
    if (v.is_null())
        return "NULL";
    if (v.is<bool>())
        return v.as<bool>() ? "TRUE" : "FALSE";
    if (v.is<std::int64_t>())
        return std::to_string(v.as<std::int64_t>());
    if (v.is<Decimal>())
        return v.as<Decimal>().to_string();
    if (v.is<Date>())
        return "DATE '" + v.as<Date>().to_string() + "'";
    if (v.is<std::string>())
        return "'" + boost::algorithm::replace_all_copy(v.as<std::string>(), "'", "''") + "'";
    return "NULL";
}

std::string sql_string(std::string_view s)
{
    return sql_literal(Value(std::string(s)));
}

/// Steps under construction. Structure steps carry physical names; with the SQL target
/// each step also carries its statements.
class Builder {
public:
    explicit Builder(Target target) : target_(target) { plan_.target = target; }

    Names names;

    void add(std::string kind, json params, std::string provenance, const std::vector<std::string>& sql)
    {
        char id[16];
        std::snprintf(id, sizeof id, "s%04zu", plan_.steps.size() + 1);
        if (target_ == Target::Sql)
            params["sql"] = sql;
        plan_.steps.push_back({id, std::move(kind), std::move(params), std::move(provenance)});
    }

    EmissionPlan take() { return std::move(plan_); }

private:
    Target target_;
    EmissionPlan plan_;
};

struct ColumnSpec {
    std::string name;  // physical
    std::string type;  // neutral
    bool nullable = true;
};

struct TableSpec {
    std::string logical;
    std::string role;
    std::vector<ColumnSpec> columns;
    std::vector<std::string> primary_key;
};

struct ForeignKey {
    std::string table_logical;
    std::vector<std::string> columns;  // physical
    std::string ref_logical;
    std::vector<std::string> ref_columns;  // physical
    std::string provenance;
};

void emit_table(Builder& b, const TableSpec& t, const std::string& provenance)
{
    auto table = b.names.table(t.logical);
    json cols = json::array();
    std::string sql = "CREATE TABLE " + quote(table) + " (\n";
    for (const auto& c : t.columns) {
        cols.push_back({{"name", c.name}, {"type", c.type}, {"nullable", c.nullable}});
        sql += "  " + quote(c.name) + " " + sql_type(c.type) + (c.nullable ? "" : " NOT NULL") + ",\n";
    }
    std::vector<std::string> pk;
    for (const auto& k : t.primary_key)
        pk.push_back(quote(k));
    sql += "  PRIMARY KEY (" + boost::algorithm::join(pk, ", ") + ")\n)";
    b.add("create_table",
          {{"table", table}, {"role", t.role}, {"columns", cols}, {"primary_key", t.primary_key}},
          provenance, {sql});
}

void emit_foreign_key(Builder& b, const ForeignKey& fk)
{
    auto table = b.names.table(fk.table_logical);
    auto ref = b.names.table(fk.ref_logical);
    auto constraint = b.names.table("fk_" + fk.table_logical + "_" + boost::algorithm::join(fk.columns, "_"));
    std::vector<std::string> cols, ref_cols;
    for (const auto& c : fk.columns)
        cols.push_back(quote(c));
    for (const auto& c : fk.ref_columns)
        ref_cols.push_back(quote(c));
    std::string sql = "ALTER TABLE " + quote(table) + " ADD CONSTRAINT " + quote(constraint) + " FOREIGN KEY (" +
                      boost::algorithm::join(cols, ", ") + ") REFERENCES " + quote(ref) + " (" +
                      boost::algorithm::join(ref_cols, ", ") + ")";
    b.add("add_foreign_key",
          {{"table", table},
           {"constraint", constraint},
           {"columns", fk.columns},
           {"references", {{"table", ref}, {"columns", fk.ref_columns}}}},
          fk.provenance, {sql});
}

/// Adds the value columns of one attribute to `t` and queues child tables for its
/// collections. `keys` are the physical key columns of `t`.
void add_attribute_columns(Builder& b, TableSpec& t, const std::vector<ColumnSpec>& keys, const std::string& attr,
                           const AttributeType& type, std::vector<TableSpec>& children,
                           std::vector<ForeignKey>& fks, const std::string& provenance)
{
    std::vector<FlatColumn> cols;
    std::vector<Collection> collections;
    flatten(attr, type, cols, collections);
    for (const auto& c : cols)
        t.columns.push_back({b.names.column(t.logical, c.path), neutral_type(c.type), true});
    for (const auto& coll : collections) {
        TableSpec child{t.logical + "_" + coll.path, "collection", {}, {}};
        std::vector<ColumnSpec> child_keys;
        for (const auto& k : keys)
            child_keys.push_back({b.names.column(child.logical, k.name), k.type, false});
        std::string pos_name = "position";
        while (std::any_of(child_keys.begin(), child_keys.end(), [&](const ColumnSpec& k) { return k.name == pos_name; }))
            pos_name += "_" + std::to_string(child_keys.size());
        child.columns = child_keys;
        child.columns.push_back({b.names.column(child.logical, pos_name), "integer", false});
        for (const auto& k : child.columns)
            child.primary_key.push_back(k.name);
        ForeignKey fk{child.logical, {}, t.logical, {}, provenance};
        for (std::size_t i = 0; i < keys.size(); ++i) {
            fk.columns.push_back(child_keys[i].name);
            fk.ref_columns.push_back(keys[i].name);
        }
        auto child_key_specs = child.columns;
        add_attribute_columns(b, child, child_key_specs, "value", coll.element, children, fks, provenance);
        children.insert(children.begin(), child);
        fks.push_back(std::move(fk));
    }
}

std::vector<std::string> topological_classes(const WarehouseDef& wh, const SchemaGraph& g)
{
    std::vector<std::string> out;
    std::set<std::string> done;
    auto visit = [&](auto&& self, const std::string& c) -> void {
        if (done.contains(c))
            return;
        done.insert(c);
        for (const auto& s : g.superclasses(c))
            self(self, s);
        out.push_back(c);
    };
    for (const auto& c : wh.classes)
        visit(visit, c.name);
    return out;
}

/// (declaring class, attribute) over `cls` and its warehouse ancestors, nearest first.
std::vector<std::pair<std::string, const WarehouseAttribute*>> chain_of(const WarehouseDef& wh, const SchemaGraph& g,
                                                                         const std::string& cls)
{
    std::vector<std::string> chain{cls};
    for (const auto& a : g.ancestors(cls))
        chain.push_back(a);
    std::vector<std::pair<std::string, const WarehouseAttribute*>> out;
    for (const auto& c : chain)
        if (const auto* dc = wh.find_class(c))
            for (const auto& a : dc->attributes)
                out.emplace_back(c, &a);
    return out;
}

std::string historization_reason(const WarehouseDef& wh, const SchemaGraph& g, const std::string& cls)
{
    std::vector<std::string> chain{cls};
    for (const auto& a : g.ancestors(cls))
        chain.push_back(a);
    for (const auto& c : chain) {
        if (wh.historized_classes.contains(c))
            return "historization " + c;
        if (const auto* env = wh.environment_of(c))
            return "environment " + env->name;
    }
    return "";
}

void require_valid(const WarehouseDef& wh)
{
    try {
        auto g = wh.schema();
        g.validate();
        for (const auto& c : wh.classes)
            for (const auto& s : g.superclasses(c.name))
                if (!wh.find_class(s))
                    throw Error(ErrorKind::ClosureViolation, "superclass '" + s + "' missing");
        for (const auto& [cls, attr] : wh.historized_attributes) {
            const auto* dc = wh.find_class(cls);
            if (!dc || !dc->find_attribute(attr))
                throw Error(ErrorKind::UnknownAttribute, "historized attribute " + cls + "." + attr + " is not defined");
        }
        for (const auto& cls : wh.historized_classes)
            wh.require_class(cls);
    } catch (const Error& e) {
        throw Error(ErrorKind::UnvalidatedDefinition, std::string("unvalidated definition: ") + e.what());
    }
}

} // namespace

std::string quote_identifier(std::string_view name)
{
    return quote(utf8_prefix(name, kMaxIdentifier));
}

// ---------------------------------------------------------------------------------------
// Structure

namespace {

constexpr const char* kRuns = "dw_runs";
constexpr const char* kObjects = "dw_objects";

void build_warehouse_structure(Builder& b, const WarehouseDef& wh)
{
    auto g = wh.schema();
    std::vector<TableSpec> tables;
    std::vector<ForeignKey> fks;

    auto id_col = [&](const std::string& table, const char* name = "object_id") {
        return ColumnSpec{b.names.column(table, name), "identifier", false};
    };

    tables.push_back({kRuns, "run_log", {}, {}});
    tables.back().columns = {{b.names.column(kRuns, "sequence"), "integer", false},
                             {b.names.column(kRuns, "date"), "timestamp", false}};
    tables.back().primary_key = {tables.back().columns[0].name};
    tables.push_back({kObjects, "generic_objects", {}, {}});
    tables.back().columns = {id_col(kObjects), {b.names.column(kObjects, "class_name"), "string", false},
                             {b.names.column(kObjects, "present"), "boolean", false}};
    tables.back().primary_key = {tables.back().columns[0].name};
    std::vector<std::string> provenance{"warehouse", "warehouse"};

    std::vector<std::pair<TableSpec, std::string>> children_all;
    for (const auto& cname : topological_classes(wh, g)) {
        const auto& dc = wh.require_class(cname);
        TableSpec t{cname, "class", {id_col(cname)}, {}};
        t.primary_key = {t.columns[0].name};
        std::vector<TableSpec> children;
        for (const auto& a : dc.attributes)
            add_attribute_columns(b, t, {t.columns[0]}, a.name, a.type, children, fks, "attribute " + cname + "." + a.name);
        tables.push_back(t);
        provenance.push_back("class " + cname);
        for (auto& c : children) {
            provenance.push_back("class " + cname);
            tables.push_back(std::move(c));
        }
        fks.push_back({cname, {t.columns[0].name}, kObjects, {b.names.column(kObjects, "object_id")}, "class " + cname});
        for (const auto& s : g.superclasses(cname))
            for (const auto& l : g.links)
                if (l.kind == LinkKind::Inheritance && l.source == cname && l.target == s)
                    fks.push_back({cname, {t.columns[0].name}, s, {b.names.column(s, "object_id")}, "link " + l.name});
    }

    for (const auto& l : g.links) {
        if (l.kind == LinkKind::Inheritance)
            continue;
        TableSpec t{l.name, "link", {id_col(l.name, "source_id"), id_col(l.name, "target_id")}, {}};
        t.primary_key = {t.columns[0].name, t.columns[1].name};
        tables.push_back(t);
        provenance.push_back("link " + l.name);
        fks.push_back({l.name, {t.columns[0].name}, l.source, {b.names.column(l.source, "object_id")}, "link " + l.name});
        fks.push_back({l.name, {t.columns[1].name}, l.target, {b.names.column(l.target, "object_id")}, "link " + l.name});
    }

    for (const auto& dc : wh.classes) {
        if (!historized_chain(wh, g, dc.name))
            continue;
        auto reason = historization_reason(wh, g, dc.name);
        std::string h = dc.name + "_history";
        TableSpec t{h, "class_history", {id_col(h), {b.names.column(h, "state_id"), "integer", false},
                                         {b.names.column(h, "start"), "timestamp", false},
                                         {b.names.column(h, "end"), "timestamp", true}}, {}};
        t.primary_key = {t.columns[0].name, t.columns[1].name};
        std::vector<ColumnSpec> keys{t.columns[0], t.columns[1]};
        std::vector<TableSpec> children;
        for (const auto& [decl, a] : chain_of(wh, g, dc.name))
            if (a->kind != AttributeKind::Specific)
                add_attribute_columns(b, t, keys, a->name, a->type, children, fks, reason);
        tables.push_back(t);
        provenance.push_back(reason);
        for (auto& c : children) {
            tables.push_back(std::move(c));
            provenance.push_back(reason);
        }
        std::string hl = h + "_links";
        TableSpec links{hl, "class_history_links",
                        {id_col(hl), {b.names.column(hl, "state_id"), "integer", false},
                         {b.names.column(hl, "link"), "string", false}, id_col(hl, "target_id")}, {}};
        for (const auto& c : links.columns)
            links.primary_key.push_back(c.name);
        tables.push_back(links);
        provenance.push_back(reason);
        fks.push_back({h, {t.columns[0].name}, dc.name, {b.names.column(dc.name, "object_id")}, reason});
        fks.push_back({hl, {links.columns[0].name, links.columns[1].name}, h, {t.columns[0].name, t.columns[1].name},
                       reason});
    }

    for (const auto& [cls, attr] : wh.historized_attributes) {
        const auto* a = wh.require_class(cls).find_attribute(attr);
        std::string h = cls + "_" + attr + "_history";
        std::string reason = "historization " + cls + "." + attr;
        TableSpec t{h, "attribute_history", {id_col(h), {b.names.column(h, "state_id"), "integer", false},
                                             {b.names.column(h, "start"), "timestamp", false},
                                             {b.names.column(h, "end"), "timestamp", true}}, {}};
        t.primary_key = {t.columns[0].name, t.columns[1].name};
        std::vector<TableSpec> children;
        add_attribute_columns(b, t, {t.columns[0], t.columns[1]}, "value", a->type, children, fks, reason);
        tables.push_back(t);
        provenance.push_back(reason);
        for (auto& c : children) {
            tables.push_back(std::move(c));
            provenance.push_back(reason);
        }
        fks.push_back({h, {t.columns[0].name}, cls, {b.names.column(cls, "object_id")}, reason});
    }

    for (std::size_t i = 0; i < tables.size(); ++i)
        emit_table(b, tables[i], provenance[i]);
    for (const auto& fk : fks)
        emit_foreign_key(b, fk);
}

std::vector<const DimensionClass*> dimension_order(const MartDef& mart)
{
    std::vector<const DimensionClass*> out;
    std::set<std::string> done;
    auto visit = [&](auto&& self, const DimensionClass& d) -> void {
        if (done.contains(d.name))
            return;
        done.insert(d.name);
        if (!d.parent.empty())
            if (const auto* p = mart.find_dimension(d.parent))
                self(self, *p);
        out.push_back(&d);
    };
    for (const auto& d : mart.dimensions)
        visit(visit, d);
    return out;
}

void build_mart_structure(Builder& b, const MartDef& mart)
{
    std::vector<std::pair<TableSpec, std::string>> tables;
    std::vector<ForeignKey> fks;
    for (const auto* d : dimension_order(mart)) {
        auto prov = "dimension " + d->name;
        TableSpec t{d->name, "dimension", {{b.names.column(d->name, "key"), "identifier", false}}, {}};
        t.primary_key = {t.columns[0].name};
        std::vector<TableSpec> children;
        for (const auto& p : d->parameters)
            add_attribute_columns(b, t, {t.columns[0]}, p.name, p.type, children, fks, prov);
        tables.emplace_back(t, prov);
        for (auto& c : children)
            tables.emplace_back(std::move(c), prov);
        if (!d->parent.empty())
            fks.push_back({d->name, {t.columns[0].name}, d->parent, {b.names.column(d->parent, "key")}, prov});
    }
    const auto& f = *mart.fact;
    auto prov = "fact " + f.name;
    TableSpec t{f.name, "fact", {{b.names.column(f.name, "fact_id"), "identifier", false}}, {}};
    t.primary_key = {t.columns[0].name};
    std::vector<TableSpec> children;
    for (const auto& m : f.measures)
        add_attribute_columns(b, t, {t.columns[0]}, m.name, m.type, children, fks, "measure " + f.name + "." + m.name);
    for (const auto& d : mart.dimensions) {
        if (!d.parent.empty())
            continue;
        auto col = b.names.column(f.name, d.name + "_key");
        t.columns.push_back({col, "identifier", true});
        fks.push_back({f.name, {col}, d.name, {b.names.column(d.name, "key")}, "dimension " + d.name});
    }
    tables.emplace_back(t, prov);
    for (auto& c : children)
        tables.emplace_back(std::move(c), prov);
    for (const auto& [table, p] : tables)
        emit_table(b, table, p);
    for (const auto& fk : fks)
        emit_foreign_key(b, fk);
}

} // namespace

EmissionPlan emit_structure(const WarehouseDef& wh, Target target)
{
    require_valid(wh);
    Builder b(target);
    build_warehouse_structure(b, wh);
    return b.take();
}

EmissionPlan emit_structure(const MartDef& mart, Target target)
{
    try {
        if (!mart.fact)
            throw Error(ErrorKind::NoFactClass, "mart '" + mart.name + "' has no fact class");
        mart.schema().validate();
        check_star(mart);
    } catch (const Error& e) {
        throw Error(ErrorKind::UnvalidatedDefinition, std::string("unvalidated definition: ") + e.what());
    }
    Builder b(target);
    build_mart_structure(b, mart);
    return b.take();
}

// ---------------------------------------------------------------------------------------
// Refresh

namespace {

/// Value spec of a warehouse attribute as the executor evaluates it.
json value_spec(const WarehouseAttribute& a, const std::string& anchor)
{
    if (!a.components.empty()) {
        json comps = json::array();
        for (const auto& c : a.components)
            comps.push_back({{"name", c.name}, {"value", value_spec(c, anchor)}});
        return {{"tuple", comps}};
    }
    switch (a.kind) {
    case AttributeKind::Derived: return {{"read", a.source_attribute}};
    case AttributeKind::Calculated: return {{"formula", a.formula->text()}, {"anchor", anchor}};
    case AttributeKind::Specific: return {{"default", value_to_json(a.default_value)}, {"type", type_to_json(a.type)}};
    }
    return nullptr;
}

std::string declaring_class(const SchemaGraph& g, const std::string& cls, const std::string& attr)
{
    std::vector<std::string> chain{cls};
    for (const auto& a : g.ancestors(cls))
        chain.push_back(a);
    for (const auto& c : chain)
        if (const auto* cd = g.find_class(c); cd && cd->find_attribute(attr))
            return c;
    return cls;
}

/// SQL rendering of refresh steps over the relational source convention: one table
/// "src_<Class>" per source class holding its own attributes plus `object_id` and the
/// most specific `class_name`, one table "src_<Link>" (source_id, target_id) per link.
class RefreshSql {
public:
    RefreshSql(Names& names, const WarehouseDef& wh, const SchemaGraph& source)
        : names_(names), wh_(wh), source_(source), wgraph_(wh.schema())
    {
    }

    std::string table(const std::string& logical) { return quote(names_.table(logical)); }
    std::string col(const std::string& table_logical, const std::string& logical)
    {
        return quote(names_.column(table_logical, logical));
    }
    std::string src(const std::string& cls) { return table("src_" + cls); }
    std::string stg(const std::string& cls) { return table("stg_" + cls); }
    std::string stg_id(const std::string& cls) { return stg(cls) + "." + col("stg_" + cls, "object_id"); }

    /// Union of the ids of every staging table.
    std::string all_staged()
    {
        std::vector<std::string> parts;
        for (const auto& c : wh_.classes)
            parts.push_back("SELECT " + col("stg_" + c.name, "object_id") + " FROM " + stg(c.name));
        return boost::algorithm::join(parts, " UNION ");
    }

    /// Subquery yielding the object ids reached from `root` along `path`.
    std::string reach(const NavigationPath& path, const std::string& root)
    {
        std::string set = "= " + root;
        int depth = 0;
        for (const auto& s : path.steps) {
            ++depth;
            auto a = "n" + std::to_string(depth);
            std::string q;
            if (s.kind == LinkKind::Inheritance) {
                q = "SELECT " + a + ".\"object_id\" FROM " + src(s.to) + " " + a + " WHERE " + a + ".\"object_id\" " + set;
            } else {
                std::string here = s.forward ? "\"source_id\"" : "\"target_id\"";
                std::string there = s.forward ? "\"target_id\"" : "\"source_id\"";
                q = "SELECT " + a + "." + there + " FROM " + src(s.link) + " " + a + " WHERE " + a + "." + here + " " +
                    set + " AND " + a + "." + there + " IN (SELECT \"object_id\" FROM " + src(s.to) + ")";
            }
            set = "IN (" + q + ")";
        }
        return set;
    }

    std::string read_attribute(const std::string& cls, const std::string& attr_path, const std::string& id_cond,
                               const char* aggregate = nullptr)
    {
        auto head = attr_path.substr(0, attr_path.find('.'));
        auto decl = declaring_class(source_, cls, head);
        auto column = col("src_" + decl, boost::algorithm::replace_all_copy(attr_path, ".", "_"));
        std::string sel = aggregate ? std::string(aggregate) + "(t." + column + ")" : "t." + column;
        return "(SELECT " + sel + " FROM " + src(decl) + " t WHERE t.\"object_id\" " + id_cond + ")";
    }

    std::string expr(const Expr& e, const EvaluationContext& ctx, const std::string& root)
    {
        switch (e.kind) {
        case NodeKind::Literal: return sql_literal(e.literal);
        case NodeKind::Reference: {
            auto r = resolve_reference(ctx, e.reference);
            if (!r)
                throw Error(ErrorKind::UnresolvedReference, "unresolvable reference \"" + e.reference + "\"");
            return read_attribute(r->class_name, r->attribute.name, reach(r->path, root));
        }
        case NodeKind::Operator: break;
        }
        auto arg = [&](std::size_t i) { return expr(e.children[i], ctx, root); };
        if (is_aggregation(e.op)) {
            auto r = resolve_reference(ctx, e.children[0].reference);
            if (!r)
                throw Error(ErrorKind::UnresolvedReference, "unresolvable reference \"" + e.children[0].reference + "\"");
            auto ids = reach(r->path, root);
            switch (e.op) {
            case Op::Sum: return "COALESCE(" + read_attribute(r->class_name, r->attribute.name, ids, "SUM") + ", 0)";
            case Op::Average: return read_attribute(r->class_name, r->attribute.name, ids, "AVG");
            case Op::Count: return read_attribute(r->class_name, r->attribute.name, ids, "COUNT");
            case Op::Min: return read_attribute(r->class_name, r->attribute.name, ids, "MIN");
            default: return read_attribute(r->class_name, r->attribute.name, ids, "MAX");
            }
        }
        switch (e.op) {
        case Op::Add: return "(" + arg(0) + " + " + arg(1) + ")";
        case Op::Subtract: return "(" + arg(0) + " - " + arg(1) + ")";
        case Op::Multiply: return "(" + arg(0) + " * " + arg(1) + ")";
        case Op::Divide: return "(CAST(" + arg(0) + " AS NUMERIC(38,18)) / " + arg(1) + ")";
        case Op::Equal: return "(" + arg(0) + " = " + arg(1) + ")";
        case Op::Greater: return "(" + arg(0) + " > " + arg(1) + ")";
        case Op::Less: return "(" + arg(0) + " < " + arg(1) + ")";
        case Op::Not: return "(NOT " + arg(0) + ")";
        case Op::And:
        case Op::Or: {
            std::vector<std::string> parts;
            for (std::size_t i = 0; i < e.children.size(); ++i)
                parts.push_back(arg(i));
            return "(" + boost::algorithm::join(parts, e.op == Op::And ? " AND " : " OR ") + ")";
        }
        case Op::Month: return "EXTRACT(MONTH FROM " + arg(0) + ")";
        case Op::Year: return "EXTRACT(YEAR FROM " + arg(0) + ")";
        case Op::Quarter: return "((EXTRACT(MONTH FROM " + arg(0) + ") + 2) / 3)";
        case Op::DayLabel: {
            static const char* names[] = {"Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"};
            std::string s = "CASE EXTRACT(DOW FROM " + arg(0) + ")";
            for (int i = 0; i < 7; ++i)
                s += " WHEN " + std::to_string(i) + " THEN '" + names[i] + "'";
            return s + " END";
        }
        default: break;
        }
        throw Error(ErrorKind::UnknownOperator, "no SQL rendering for " + std::string(function_name(e.op)));
    }

    Names& names_;
    const WarehouseDef& wh_;
    const SchemaGraph& source_;
    SchemaGraph wgraph_;
};

/// Flattened physical value columns of the non-specific chain attributes of `cls` in
/// table `logical`.
std::vector<std::string> chain_columns(RefreshSql& r, const std::string& logical, const WarehouseDef& wh,
                                       const SchemaGraph& g, const std::string& cls, bool include_specific)
{
    std::vector<std::string> out;
    for (const auto& [decl, a] : chain_of(wh, g, cls)) {
        if (a->kind == AttributeKind::Specific && !include_specific)
            continue;
        std::vector<FlatColumn> cols;
        std::vector<Collection> colls;
        flatten(a->name, a->type, cols, colls);
        for (const auto& c : cols)
            out.push_back(r.col(logical, c.path));
    }
    return out;
}

void build_refresh(Builder& b, const WarehouseDef& wh, const SchemaGraph& source)
{
    // Physical names of the structure first, so both plans agree.
    build_warehouse_structure(b, wh);
    auto structure_steps = b.take();
    Builder out(structure_steps.target);
    out.names = std::move(b.names);
    auto& names = out.names;

    auto g = wh.schema();
    RefreshSql r(names, wh, source);
    const std::string run_date = ":run_date";

    // Source classes placed in each warehouse class: itself and every descendant whose
    // nearest projected ancestor it is.
    std::map<std::string, std::vector<std::string>> placed;
    for (const auto& c : source.classes) {
        const DerivedClass* target = wh.find_by_source(c.name);
        if (!target)
            for (const auto& anc : source.ancestors(c.name))
                if ((target = wh.find_by_source(anc)))
                    break;
        if (target)
            placed[target->name].push_back(c.name);
    }

    for (const auto& dc : wh.classes) {
        std::string logical = "stg_" + dc.name;
        std::string sql = "CREATE TABLE " + r.stg(dc.name) + " (\n  " + r.col(logical, "object_id") +
                          " VARCHAR(255) NOT NULL,\n  " + r.col(logical, "change_kind") + " VARCHAR(16),\n";
        json cols = json::array();
        for (const auto& [decl, a] : chain_of(wh, g, dc.name)) {
            if (a->kind == AttributeKind::Specific)
                continue;
            cols.push_back(a->name);
            std::vector<FlatColumn> fc;
            std::vector<Collection> colls;
            flatten(a->name, a->type, fc, colls);
            for (const auto& c : fc)
                sql += "  " + r.col(logical, c.path) + " " + sql_type(neutral_type(c.type)) + ",\n";
        }
        sql += "  PRIMARY KEY (" + r.col(logical, "object_id") + ")\n)";
        out.add("create_staging", {{"class", dc.name}, {"attributes", cols}}, "class " + dc.name, {sql});
    }
    out.add("create_staging", {{"links", true}}, "warehouse",
            {"CREATE TABLE " + r.table("stg_links") +
             " (\n  \"link\" VARCHAR(255) NOT NULL,\n  \"source_id\" VARCHAR(255) NOT NULL,\n  \"target_id\" "
             "VARCHAR(255) NOT NULL,\n  PRIMARY KEY (\"link\", \"source_id\", \"target_id\")\n)"});

    for (const auto& dc : wh.classes) {
        std::vector<std::string> lits;
        for (const auto& s : placed[dc.name])
            lits.push_back(sql_string(s));
        std::string sql = "INSERT INTO " + r.stg(dc.name) + " (" + r.col("stg_" + dc.name, "object_id") +
                          ") SELECT s.\"object_id\" FROM " + r.src(dc.source_class) + " s WHERE s.\"class_name\" IN (" +
                          (lits.empty() ? std::string("NULL") : boost::algorithm::join(lits, ", ")) + ")";
        out.add("extract", {{"class", dc.name}, {"source_class", dc.source_class}, {"source_classes", placed[dc.name]}},
                "class " + dc.name, {sql});
    }

    for (const auto& dc : wh.classes) {
        if (!dc.selection)
            continue;
        EvaluationContext ctx{&source, dc.source_class};
        auto pred = r.expr(dc.selection->root(), ctx, r.stg_id(dc.name));
        out.add("filter", {{"class", dc.name}, {"predicate", dc.selection->text()}, {"anchor", dc.source_class}},
                "selection " + dc.name, {"DELETE FROM " + r.stg(dc.name) + " WHERE (" + pred + ") IS NOT TRUE"});
    }

    for (const auto& dc : wh.classes) {
        for (const auto& [decl, a] : chain_of(wh, g, dc.name)) {
            if (a->kind == AttributeKind::Specific)
                continue;
            const auto& anchor = wh.require_class(decl).source_class;
            std::vector<std::string> sql;
            std::string logical = "stg_" + dc.name;
            auto root = r.stg_id(dc.name);
            auto leaf_sql = [&](const WarehouseAttribute& leaf) {
                if (leaf.kind == AttributeKind::Calculated) {
                    EvaluationContext ctx{&source, anchor};
                    return r.expr(leaf.formula->root(), ctx, root);
                }
                if (leaf.kind == AttributeKind::Specific)
                    return sql_literal(leaf.default_value);
                return r.read_attribute(anchor, leaf.source_attribute, "= " + root);
            };
            std::vector<std::string> sets;
            auto add_sets = [&](auto&& self, const WarehouseAttribute& at, const std::string& path) -> void {
                if (!at.components.empty()) {
                    for (const auto& c : at.components)
                        self(self, c, path + "_" + c.name);
                    return;
                }
                if (at.kind == AttributeKind::Derived && !at.type.is_simple()) {
                    std::vector<FlatColumn> fc;
                    std::vector<Collection> colls;
                    flatten(path, at.type, fc, colls);
                    std::vector<FlatColumn> src_cols;
                    std::vector<Collection> src_colls;
                    flatten(boost::algorithm::replace_all_copy(at.source_attribute, ".", "_"), at.type, src_cols,
                            src_colls);
                    for (std::size_t i = 0; i < fc.size(); ++i) {
                        auto decl_src = declaring_class(source, anchor, at.source_attribute.substr(0, at.source_attribute.find('.')));
                        sets.push_back(r.col(logical, fc[i].path) + " = (SELECT t." +
                                       r.col("src_" + decl_src, src_cols[i].path) + " FROM " + r.src(decl_src) +
                                       " t WHERE t.\"object_id\" = " + root + ")");
                    }
                    return;
                }
                sets.push_back(r.col(logical, path) + " = " + leaf_sql(at));
            };
            add_sets(add_sets, *a, a->name);
            if (!sets.empty())
                sql.push_back("UPDATE " + r.stg(dc.name) + " SET " + boost::algorithm::join(sets, ", "));
            out.add(a->kind == AttributeKind::Calculated ? "compute" : "derive",
                    {{"class", dc.name}, {"declared_in", decl}, {"attribute", a->name}, {"value", value_spec(*a, anchor)}},
                    "attribute " + decl + "." + a->name, sql);
        }
    }

    {
        std::vector<std::string> link_names, sql;
        for (const auto& l : wh.links) {
            link_names.push_back(l.name);
            if (l.kind == LinkKind::Inheritance)
                continue;
            sql.push_back("INSERT INTO " + r.table("stg_links") +
                          " (\"link\", \"source_id\", \"target_id\") SELECT " + sql_string(l.name) +
                          ", l.\"source_id\", l.\"target_id\" FROM " + r.src(l.name) + " l WHERE l.\"source_id\" IN (" +
                          r.all_staged() + ") AND l.\"target_id\" IN (" + r.all_staged() + ")");
        }
        out.add("restrict_links", {{"links", link_names}}, "warehouse", sql);
    }

    auto links_from = [&](const std::string& cls) {
        std::vector<const Link*> out_links;
        std::vector<std::string> chain{cls};
        for (const auto& a : g.ancestors(cls))
            chain.push_back(a);
        for (const auto& l : wh.links)
            if (l.kind != LinkKind::Inheritance && std::find(chain.begin(), chain.end(), l.source) != chain.end())
                out_links.push_back(&l);
        return out_links;
    };

    for (const auto& dc : wh.classes) {
        std::string logical = "stg_" + dc.name;
        auto id = r.stg_id(dc.name);
        std::vector<std::string> diffs;
        std::vector<std::string> chain{dc.name};
        for (const auto& a : g.ancestors(dc.name))
            chain.push_back(a);
        for (const auto& decl : chain) {
            std::vector<std::string> cols;
            for (const auto& a : wh.require_class(decl).attributes) {
                if (a.kind == AttributeKind::Specific)
                    continue;
                std::vector<FlatColumn> fc;
                std::vector<Collection> colls;
                flatten(a.name, a.type, fc, colls);
                for (const auto& c : fc)
                    cols.push_back("w." + r.col(decl, c.path) + " IS DISTINCT FROM " + r.stg(dc.name) + "." +
                                   r.col(logical, c.path));
            }
            if (!cols.empty())
                diffs.push_back("EXISTS (SELECT 1 FROM " + r.table(decl) + " w WHERE w." + r.col(decl, "object_id") +
                                " = " + id + " AND (" + boost::algorithm::join(cols, " OR ") + "))");
        }
        for (const auto* l : links_from(dc.name)) {
            auto lt = r.table(l->name);
            auto staged = "SELECT s.\"target_id\" FROM " + r.table("stg_links") + " s WHERE s.\"link\" = " +
                          sql_string(l->name) + " AND s.\"source_id\" = " + id;
            auto stored = "SELECT w.\"target_id\" FROM " + lt + " w WHERE w.\"source_id\" = " + id;
            diffs.push_back("EXISTS (" + stored + " EXCEPT " + staged + ")");
            diffs.push_back("EXISTS (" + staged + " EXCEPT " + stored + ")");
        }
        std::string objects = r.table(kObjects);
        std::string sql = "UPDATE " + r.stg(dc.name) + " SET " + r.col(logical, "change_kind") + " = CASE WHEN NOT EXISTS (SELECT 1 FROM " +
                          objects + " o WHERE o.\"object_id\" = " + id + ") THEN 'inserted' WHEN EXISTS (SELECT 1 FROM " +
                          objects + " o WHERE o.\"object_id\" = " + id + " AND o.\"class_name\" <> " +
                          sql_string(dc.name) + ")" + (diffs.empty() ? "" : " OR " + boost::algorithm::join(diffs, " OR ")) +
                          " THEN 'changed' ELSE 'unchanged' END";
        json attrs = json::array();
        for (const auto& [decl, a] : chain_of(wh, g, dc.name))
            if (a->kind != AttributeKind::Specific)
                attrs.push_back(a->name);
        out.add("detect_change", {{"class", dc.name}, {"attributes", attrs}}, "class " + dc.name, {sql});
    }

    for (const auto& dc : wh.classes) {
        std::string logical = "stg_" + dc.name;
        std::vector<std::string> chain{dc.name};
        for (const auto& a : g.ancestors(dc.name))
            chain.push_back(a);
        for (const auto& decl : chain) {
            const auto& ddc = wh.require_class(decl);
            json attrs = json::array();
            std::vector<std::string> wcols, scols, sets;
            for (const auto& a : ddc.attributes) {
                if (a.kind == AttributeKind::Specific)
                    continue;
                attrs.push_back(a.name);
                std::vector<FlatColumn> fc;
                std::vector<Collection> colls;
                flatten(a.name, a.type, fc, colls);
                for (const auto& c : fc) {
                    wcols.push_back(r.col(decl, c.path));
                    scols.push_back(r.col(logical, c.path));
                    sets.push_back(r.col(decl, c.path) + " = (SELECT s." + r.col(logical, c.path) + " FROM " +
                                   r.stg(dc.name) + " s WHERE s." + r.col(logical, "object_id") + " = " +
                                   r.table(decl) + "." + r.col(decl, "object_id") + ")");
                }
            }
            std::vector<std::string> sql;
            auto in_kind = [&](const char* kind) {
                return " IN (SELECT " + r.col(logical, "object_id") + " FROM " + r.stg(dc.name) + " WHERE " +
                       r.col(logical, "change_kind") + " = '" + kind + "')";
            };
            if (!sets.empty())
                sql.push_back("UPDATE " + r.table(decl) + " SET " + boost::algorithm::join(sets, ", ") + " WHERE " +
                              r.col(decl, "object_id") + in_kind("changed"));
            std::vector<std::string> ins{r.col(decl, "object_id")}, sel{r.col(logical, "object_id")};
            ins.insert(ins.end(), wcols.begin(), wcols.end());
            sel.insert(sel.end(), scols.begin(), scols.end());
            sql.push_back("INSERT INTO " + r.table(decl) + " (" + boost::algorithm::join(ins, ", ") + ") SELECT " +
                          boost::algorithm::join(sel, ", ") + " FROM " + r.stg(dc.name) + " WHERE " +
                          r.col(logical, "change_kind") + " = 'inserted'");
            std::vector<std::string> preserve;
            for (const auto& a : ddc.attributes)
                if (a.kind == AttributeKind::Specific)
                    preserve.push_back(a.name);
            out.add("overwrite", {{"class", dc.name}, {"table", decl}, {"attributes", attrs}, {"preserve", preserve}},
                    "class " + decl, sql);
            for (const auto& a : ddc.attributes) {
                if (a.kind != AttributeKind::Specific)
                    continue;
                std::vector<FlatColumn> fc;
                std::vector<Collection> colls;
                flatten(a.name, a.type, fc, colls);
                std::vector<Value> leaves;
                flatten_value(a.default_value, a.type, leaves);
                std::vector<std::string> sets_sp;
                for (std::size_t i = 0; i < fc.size(); ++i)
                    sets_sp.push_back(r.col(decl, fc[i].path) + " = " + sql_literal(i < leaves.size() ? leaves[i] : Value{}));
                std::vector<std::string> ssql;
                if (!sets_sp.empty())
                    ssql.push_back("UPDATE " + r.table(decl) + " SET " + boost::algorithm::join(sets_sp, ", ") +
                                   " WHERE " + r.col(decl, "object_id") + in_kind("inserted"));
                out.add("init_specific",
                        {{"class", dc.name}, {"table", decl}, {"attribute", a.name}, {"default", value_to_json(a.default_value)},
                         {"type", type_to_json(a.type)}},
                        "attribute " + decl + "." + a.name, ssql);
            }
        }
        {
            std::vector<std::string> sql;
            json link_names = json::array();
            for (const auto* l : links_from(dc.name)) {
                link_names.push_back(l->name);
                auto lt = r.table(l->name);
                auto staged_ids = "(SELECT " + r.col(logical, "object_id") + " FROM " + r.stg(dc.name) + ")";
                sql.push_back("DELETE FROM " + lt + " WHERE \"source_id\" IN " + staged_ids);
                sql.push_back("INSERT INTO " + lt + " (\"source_id\", \"target_id\") SELECT s.\"source_id\", s.\"target_id\" FROM " +
                              r.table("stg_links") + " s WHERE s.\"link\" = " + sql_string(l->name) +
                              " AND s.\"source_id\" IN " + staged_ids);
            }
            out.add("overwrite_links", {{"class", dc.name}, {"links", link_names}}, "class " + dc.name, sql);
        }
        {
            auto objects = r.table(kObjects);
            std::vector<std::string> sql{
                "UPDATE " + objects + " SET \"class_name\" = " + sql_string(dc.name) +
                    ", \"present\" = TRUE WHERE \"object_id\" IN (SELECT " + r.col(logical, "object_id") + " FROM " +
                    r.stg(dc.name) + ")",
                "INSERT INTO " + objects + " (\"object_id\", \"class_name\", \"present\") SELECT " +
                    r.col(logical, "object_id") + ", " + sql_string(dc.name) + ", TRUE FROM " + r.stg(dc.name) +
                    " WHERE " + r.col(logical, "change_kind") + " = 'inserted'"};
            // dw_objects rows must precede class rows; the statements run first in SQL.
            out.add("register_objects", {{"class", dc.name}}, "class " + dc.name, sql);
        }
    }

    for (const auto& dc : wh.classes) {
        std::string logical = "stg_" + dc.name;
        for (const auto& [decl, a] : chain_of(wh, g, dc.name)) {
            if (!wh.attribute_historized(decl, a->name))
                continue;
            std::string h = decl + "_" + a->name + "_history";
            auto ht = r.table(h);
            std::vector<FlatColumn> fc, vc;
            std::vector<Collection> colls;
            flatten(a->name, a->type, fc, colls);
            flatten("value", a->type, vc, colls);
            std::vector<std::string> vcols, scols, same;
            for (std::size_t i = 0; i < fc.size(); ++i) {
                vcols.push_back(r.col(h, vc[i].path));
                scols.push_back("s." + r.col(logical, fc[i].path));
                same.push_back("h." + r.col(h, vc[i].path) + " IS NOT DISTINCT FROM s." + r.col(logical, fc[i].path));
            }
            std::string oid = r.col(h, "object_id"), sid = r.col(h, "state_id");
            std::vector<std::string> sql{
                "INSERT INTO " + ht + " (" + oid + ", " + sid + ", \"start\", \"end\"" +
                    (vcols.empty() ? "" : ", " + boost::algorithm::join(vcols, ", ")) + ") SELECT s." +
                    r.col(logical, "object_id") + ", COALESCE((SELECT MAX(h." + sid + ") FROM " + ht + " h WHERE h." +
                    oid + " = s." + r.col(logical, "object_id") + "), 0) + 1, " + run_date + ", NULL" +
                    (scols.empty() ? "" : ", " + boost::algorithm::join(scols, ", ")) + " FROM " + r.stg(dc.name) +
                    " s WHERE NOT EXISTS (SELECT 1 FROM " + ht + " h WHERE h." + oid + " = s." +
                    r.col(logical, "object_id") + " AND h.\"end\" IS NULL" +
                    (same.empty() ? "" : " AND " + boost::algorithm::join(same, " AND ")) + ")",
                "UPDATE " + ht + " SET \"end\" = " + run_date + " WHERE \"end\" IS NULL AND EXISTS (SELECT 1 FROM " + ht +
                    " h2 WHERE h2." + oid + " = " + ht + "." + oid + " AND h2." + sid + " > " + ht + "." + sid + ")"};
            out.add("append_attribute_history", {{"class", dc.name}, {"declared_in", decl}, {"attribute", a->name}},
                    "historization " + decl + "." + a->name, sql);
        }
    }

    for (const auto& dc : wh.classes) {
        if (!historized_chain(wh, g, dc.name))
            continue;
        std::string logical = "stg_" + dc.name;
        std::string h = dc.name + "_history", hl = h + "_links";
        auto ht = r.table(h), hlt = r.table(hl);
        auto hcols = chain_columns(r, h, wh, g, dc.name, false);
        auto scols = chain_columns(r, logical, wh, g, dc.name, false);
        std::string oid = r.col(h, "object_id"), sid = r.col(h, "state_id");
        auto sid_ref = "s." + r.col(logical, "object_id");
        std::vector<std::string> same;
        for (std::size_t i = 0; i < hcols.size(); ++i)
            same.push_back("h." + hcols[i] + " IS NOT DISTINCT FROM s." + scols[i]);
        auto state_links = "SELECT k." + r.col(hl, "link") + ", k." + r.col(hl, "target_id") + " FROM " + hlt +
                           " k WHERE k." + r.col(hl, "object_id") + " = h." + oid + " AND k." + r.col(hl, "state_id") +
                           " = h." + sid;
        auto staged_links = "SELECT l.\"link\", l.\"target_id\" FROM " + r.table("stg_links") +
                            " l WHERE l.\"source_id\" = " + sid_ref;
        same.push_back("NOT EXISTS (" + state_links + " EXCEPT " + staged_links + ")");
        same.push_back("NOT EXISTS (" + staged_links + " EXCEPT " + state_links + ")");
        std::vector<std::string> sql{
            "INSERT INTO " + ht + " (" + oid + ", " + sid + ", \"start\", \"end\"" +
                (hcols.empty() ? "" : ", " + boost::algorithm::join(hcols, ", ")) + ") SELECT " + sid_ref +
                ", COALESCE((SELECT MAX(h." + sid + ") FROM " + ht + " h WHERE h." + oid + " = " + sid_ref + "), 0) + 1, " +
                run_date + ", NULL" + (scols.empty() ? "" : ", " + [&] {
                    std::vector<std::string> p;
                    for (const auto& c : scols)
                        p.push_back("s." + c);
                    return boost::algorithm::join(p, ", ");
                }()) + " FROM " + r.stg(dc.name) + " s WHERE NOT EXISTS (SELECT 1 FROM " + ht + " h WHERE h." + oid + " = " +
                sid_ref + " AND h.\"end\" IS NULL AND " + boost::algorithm::join(same, " AND ") + ")",
            "INSERT INTO " + hlt + " (" + r.col(hl, "object_id") + ", " + r.col(hl, "state_id") + ", " +
                r.col(hl, "link") + ", " + r.col(hl, "target_id") + ") SELECT h." + oid + ", h." + sid +
                ", l.\"link\", l.\"target_id\" FROM " + ht + " h JOIN " + r.table("stg_links") +
                " l ON l.\"source_id\" = h." + oid + " WHERE h.\"start\" = " + run_date + " AND h.\"end\" IS NULL",
            "UPDATE " + ht + " SET \"end\" = " + run_date + " WHERE \"end\" IS NULL AND EXISTS (SELECT 1 FROM " + ht +
                " h2 WHERE h2." + oid + " = " + ht + "." + oid + " AND h2." + sid + " > " + ht + "." + sid + ")"};
        out.add("append_state", {{"class", dc.name}}, historization_reason(wh, g, dc.name), sql);
    }

    out.add("tombstone", json::object(), "warehouse",
            {"UPDATE " + r.table(kObjects) + " SET \"present\" = FALSE WHERE \"present\" AND \"object_id\" NOT IN (" +
             r.all_staged() + ")"});
    out.add("record_run", json::object(), "warehouse",
            {"INSERT INTO " + r.table(kRuns) + " (\"sequence\", \"date\") SELECT COALESCE(MAX(\"sequence\"), 0) + 1, " +
             run_date + " FROM " + r.table(kRuns)});
    std::vector<std::string> drops;
    for (const auto& dc : wh.classes)
        drops.push_back("DROP TABLE " + r.stg(dc.name));
    drops.push_back("DROP TABLE " + r.table("stg_links"));
    out.add("drop_staging", json::object(), "warehouse", drops);
    b = std::move(out);
}

} // namespace

EmissionPlan emit_refresh(const WarehouseDef& wh, const SchemaGraph& source, Target target)
{
    require_valid(wh);
    try {
        check_closure(wh, source);
        for (const auto& dc : wh.classes) {
            if (!source.find_class(dc.source_class))
                throw Error(ErrorKind::UnknownClass, "source class '" + dc.source_class + "' missing");
            EvaluationContext ctx{&source, dc.source_class};
            if (dc.selection)
                if (auto d = validate(*dc.selection, ctx); !d.empty())
                    throw Error(ErrorKind::ValidationFailed, "selection of '" + dc.name + "': " + d.front().message);
            for (const auto& a : dc.attributes)
                if (a.formula)
                    if (auto d = validate(*a.formula, ctx); !d.empty())
                        throw Error(ErrorKind::ValidationFailed, dc.name + "." + a.name + ": " + d.front().message);
        }
    } catch (const Error& e) {
        throw Error(ErrorKind::UnvalidatedDefinition, std::string("unvalidated definition: ") + e.what());
    }
    Builder b(target);
    build_refresh(b, wh, source);
    return b.take();
}

json plan_to_json(const EmissionPlan& plan)
{
    json steps = json::array();
    for (const auto& s : plan.steps)
        steps.push_back({{"id", s.id}, {"kind", s.kind}, {"params", s.params}, {"provenance", s.provenance}});
    return {{"target", to_string(plan.target)}, {"steps", steps}};
}

EmissionPlan plan_from_json(const json& j)
{
    EmissionPlan p;
    try {
        auto t = parse_target(j.at("target").get<std::string>());
        if (!t)
            throw Error(ErrorKind::ParseError, "unknown plan target");
        p.target = *t;
        for (const auto& s : j.at("steps"))
            p.steps.push_back({s.at("id").get<std::string>(), s.at("kind").get<std::string>(), s.at("params"),
                               s.at("provenance").get<std::string>()});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed plan: ") + e.what());
    }
    return p;
}

std::string render(const EmissionPlan& plan)
{
    if (plan.target == Target::NeutralPlan)
        return plan_to_json(plan).dump(2) + "\n";
    std::string out;
    for (const auto& s : plan.steps)
        for (const auto& stmt : s.params.value("sql", json::array()))
            out += stmt.get<std::string>() + ";\n";
    return out;
}

// ---------------------------------------------------------------------------------------
// Reference executor

namespace {

Value read_dotted(const std::map<std::string, Value>& values, const std::string& path)
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

struct Staged {
    std::string class_name;
    const ObjectSnapshot* snapshot = nullptr;
    std::map<std::string, Value> values;
    std::map<std::string, std::vector<std::string>> links;
    enum { Inserted, Changed, Unchanged } change = Unchanged;
};

Value eval_spec(const json& spec, const ObjectIndex& index, const SchemaGraph& source, const ObjectSnapshot& s)
{
    if (spec.contains("tuple")) {
        TupleValue t;
        for (const auto& c : spec["tuple"]) {
            t.names.push_back(c.at("name").get<std::string>());
            t.values.push_back(eval_spec(c.at("value"), index, source, s));
        }
        return t;
    }
    if (spec.contains("read"))
        return read_dotted(s.values, spec["read"].get<std::string>());
    if (spec.contains("formula")) {
        EvaluationContext ctx{&source, spec.at("anchor").get<std::string>()};
        return index.evaluate(parse_formula(spec["formula"].get<std::string>()), ctx, s.id);
    }
    if (spec.contains("default"))
        return value_from_json(spec["default"], type_from_json(spec.at("type")));
    throw Error(ErrorKind::ExecutionFailed, "unknown value spec " + spec.dump());
}

json values_to_json(const std::map<std::string, Value>& values)
{
    json j = json::object();
    for (const auto& [k, v] : values)
        j[k] = value_to_json(v);
    return j;
}

} // namespace

PlanExecutor::PlanExecutor(EmissionPlan plan, SchemaGraph source) : plan_(std::move(plan)), source_(std::move(source))
{
    bool refresh = std::any_of(plan_.steps.begin(), plan_.steps.end(),
                               [](const PlanStep& s) { return s.kind == "record_run"; });
    if (plan_.target != Target::NeutralPlan || !refresh)
        throw Error(ErrorKind::ExecutionFailed, "execution failed: not a neutral refresh plan");
}

void PlanExecutor::run(const std::vector<ObjectSnapshot>& snapshots, Timestamp date)
{
    if (!tables_.runs.empty() && date <= tables_.runs.back().date)
        throw Error(ErrorKind::ExecutionFailed, "execution failed: run date " + date.to_string() +
                                                    " does not follow " + tables_.runs.back().date.to_string());
    Tables t = tables_;
    std::vector<ObjectView> views;
    for (const auto& s : snapshots)
        views.push_back({s.id, s.class_name, &s.values, &s.links});
    ObjectIndex index(source_, std::move(views));

    std::map<std::string, std::string> placement;  // source class -> warehouse class
    for (const auto& step : plan_.steps)
        if (step.kind == "extract")
            for (const auto& sc : step.params.at("source_classes"))
                placement[sc.get<std::string>()] = step.params.at("class").get<std::string>();

    std::map<std::string, Staged> staged;
    ExtractionRun run;
    run.sequence = t.runs.empty() ? 1 : t.runs.back().sequence + 1;
    run.date = date;
    auto of_class = [&](const std::string& cls) {
        std::vector<Staged*> out;
        for (auto& [id, s] : staged)
            if (s.class_name == cls)
                out.push_back(&s);
        return out;
    };

    for (const auto& step : plan_.steps) {
        try {
            const auto& p = step.params;
            auto cls = p.value("class", "");
            if (step.kind == "create_staging") {
                if (!cls.empty())
                    run.counters[cls];
            } else if (step.kind == "extract") {
                for (const auto& s : snapshots) {
                    auto it = placement.find(s.class_name);
                    if (it != placement.end() && it->second == cls)
                        staged[s.id] = Staged{cls, &s, {}, s.links};
                }
            } else if (step.kind == "filter") {
                auto pred = parse_formula(p.at("predicate").get<std::string>());
                EvaluationContext ctx{&source_, p.at("anchor").get<std::string>()};
                for (auto* s : of_class(cls)) {
                    Value keep = index.evaluate(pred, ctx, s->snapshot->id);
                    if (!keep.is<bool>())
                        throw Error(ErrorKind::TypeMismatch, "selection is not boolean");
                    if (!keep.as<bool>())
                        staged.erase(s->snapshot->id);
                }
            } else if (step.kind == "derive" || step.kind == "compute") {
                auto attr = p.at("attribute").get<std::string>();
                for (auto* s : of_class(cls))
                    s->values[attr] = eval_spec(p.at("value"), index, source_, *s->snapshot);
            } else if (step.kind == "restrict_links") {
                std::set<std::string> allowed = p.at("links").get<std::set<std::string>>();
                for (auto& [id, s] : staged) {
                    std::map<std::string, std::vector<std::string>> kept;
                    for (const auto& [name, targets] : s.links) {
                        if (!allowed.contains(name))
                            continue;
                        auto& k = kept[name];
                        for (const auto& target : targets)
                            if (staged.contains(target))
                                k.push_back(target);
                    }
                    s.links = std::move(kept);
                }
            } else if (step.kind == "detect_change") {
                auto& counters = run.counters[cls];
                for (auto* s : of_class(cls)) {
                    auto it = t.base.find(s->snapshot->id);
                    if (it == t.base.end()) {
                        s->change = Staged::Inserted;
                        ++counters.inserted;
                        continue;
                    }
                    bool changed = it->second.class_name != cls || it->second.links != s->links;
                    for (const auto& a : p.at("attributes")) {
                        auto name = a.get<std::string>();
                        auto cur = it->second.values.find(name);
                        auto next = s->values.find(name);
                        Value nv = next == s->values.end() ? Value{} : next->second;
                        changed = changed || cur == it->second.values.end() || cur->second != nv;
                    }
                    s->change = changed ? Staged::Changed : Staged::Unchanged;
                    ++(changed ? counters.changed : counters.unchanged);
                }
            } else if (step.kind == "overwrite") {
                for (auto* s : of_class(cls)) {
                    auto& row = t.base[s->snapshot->id];
                    for (const auto& a : p.at("attributes")) {
                        auto name = a.get<std::string>();
                        row.values[name] = s->values[name];
                    }
                }
            } else if (step.kind == "init_specific") {
                auto attr = p.at("attribute").get<std::string>();
                auto v = value_from_json(p.at("default"), type_from_json(p.at("type")));
                for (auto* s : of_class(cls)) {
                    auto& row = t.base[s->snapshot->id];
                    if (!row.values.contains(attr))
                        row.values[attr] = v;
                }
            } else if (step.kind == "overwrite_links") {
                for (auto* s : of_class(cls))
                    t.base[s->snapshot->id].links = s->links;
            } else if (step.kind == "register_objects") {
                for (auto* s : of_class(cls)) {
                    auto& row = t.base[s->snapshot->id];
                    row.class_name = cls;
                    row.present = true;
                }
            } else if (step.kind == "append_attribute_history") {
                auto attr = p.at("attribute").get<std::string>();
                for (auto* s : of_class(cls)) {
                    auto v = s->values.find(attr);
                    Value value = v == s->values.end() ? Value{} : v->second;
                    auto& rows = t.attributes[s->snapshot->id][attr];
                    if (rows.empty() || rows.back().value != value)
                        rows.push_back({std::move(value), date, run.sequence});
                }
            } else if (step.kind == "append_state") {
                for (auto* s : of_class(cls)) {
                    auto& rows = t.states[s->snapshot->id];
                    if (!rows.empty() && rows.back().values == s->values && rows.back().links == s->links)
                        continue;
                    std::int64_t id = 1;
                    if (!rows.empty()) {
                        rows.back().end = date;
                        id = rows.back().state_id + 1;
                    }
                    rows.push_back({id, s->values, s->links, date, std::nullopt, run.sequence});
                }
            } else if (step.kind == "tombstone") {
                for (auto& [id, row] : t.base)
                    if (row.present && !staged.contains(id)) {
                        row.present = false;
                        run.tombstones.push_back({row.class_name, id});
                    }
            } else if (step.kind == "record_run") {
                t.runs.push_back(run);
            } else if (step.kind == "drop_staging") {
                staged.clear();
            } else {
                throw Error(ErrorKind::ExecutionFailed, "unknown step kind '" + step.kind + "'");
            }
        } catch (const std::exception& e) {
            throw Error(ErrorKind::ExecutionFailed,
                        "execution failed at step " + step.id + " (" + step.kind + "): " + e.what());
        }
    }
    tables_ = std::move(t);
}

std::string PlanExecutor::history_jsonl() const
{
    std::set<std::string> ids;
    for (const auto& [id, rows] : tables_.states)
        ids.insert(id);
    for (const auto& [id, attrs] : tables_.attributes)
        ids.insert(id);
    std::string out;
    for (const auto& id : ids) {
        const auto& cls = tables_.base.at(id).class_name;
        if (auto it = tables_.states.find(id); it != tables_.states.end())
            for (const auto& s : it->second) {
                json rec = {{"class", cls},
                            {"object_id", id},
                            {"state_id", s.state_id},
                            {"values", values_to_json(s.values)},
                            {"links", s.links},
                            {"interval", {{"start", s.start.to_string()}, {"end", s.end ? json(s.end->to_string()) : json()}}},
                            {"run", s.run},
                            {"level", "class"}};
                out += rec.dump() + "\n";
            }
        if (auto it = tables_.attributes.find(id); it != tables_.attributes.end())
            for (const auto& [attr, rows] : it->second)
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    json end = i + 1 < rows.size() ? json(rows[i + 1].start.to_string()) : json();
                    json rec = {{"class", cls},
                                {"object_id", id},
                                {"state_id", static_cast<std::int64_t>(i + 1)},
                                {"values", {{attr, value_to_json(rows[i].value)}}},
                                {"interval", {{"start", rows[i].start.to_string()}, {"end", end}}},
                                {"run", rows[i].run},
                                {"level", "attribute"},
                                {"attribute", attr}};
                    out += rec.dump() + "\n";
                }
    }
    return out;
}

} // namespace dw
