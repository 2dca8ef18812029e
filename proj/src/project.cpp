#include "dw/project.hpp"

#include "dw/error.hpp"
#include "dw/hash.hpp"

#include <fstream>
#include <sstream>

namespace dw {

namespace fs = std::filesystem;

const MartEntry* ProjectState::find_mart(std::string_view name) const
{
    for (const auto& m : marts)
        if (m.name == name)
            return &m;
    return nullptr;
}

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out)
            throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw Error(ErrorKind::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

std::string field(const json& op, const char* name)
{
    if (!op.contains(name) || !op[name].is_string())
        throw Error(ErrorKind::InvalidArgument, std::string("operation field '") + name + "' must be a string");
    return op[name].get<std::string>();
}

std::string optional_field(const json& op, const char* name)
{
    if (!op.contains(name) || op[name].is_null())
        return "";
    return field(op, name);
}

std::vector<std::string> string_list(const json& op, const char* name)
{
    if (!op.contains(name) || op[name].is_null())
        return {};
    if (!op[name].is_array())
        throw Error(ErrorKind::InvalidArgument, std::string("operation field '") + name + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : op[name]) {
        if (!v.is_string())
            throw Error(ErrorKind::InvalidArgument, std::string("operation field '") + name + "' holds a non-string");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::optional<ExpressionTree> optional_formula(const json& op, const char* name)
{
    auto text = optional_field(op, name);
    if (text.empty())
        return std::nullopt;
    return parse_formula(text);
}

std::vector<std::pair<std::string, std::string>> edge_list(const json& op)
{
    std::vector<std::pair<std::string, std::string>> out;
    if (!op.contains("edges") || !op["edges"].is_array())
        throw Error(ErrorKind::InvalidArgument, "operation field 'edges' must be an array of pairs");
    for (const auto& e : op["edges"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
            throw Error(ErrorKind::InvalidArgument, "hierarchy edges are [from, to] string pairs");
        out.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    return out;
}

json warehouse_result(const ProjectState& s)
{
    return {{"version", s.version}, {"warehouse", warehouse_to_json(s.warehouse)},
            {"warnings", warehouse_warnings(s.warehouse)}};
}

json mart_result(const ProjectState& s, const MartDef& m, const std::vector<std::string>& diagnostics)
{
    return {{"version", s.version}, {"mart", mart_to_json(m)}, {"diagnostics", diagnostics}};
}

bool is_mart_op(std::string_view name)
{
    static const std::set<std::string_view> ops{
        "flag_representative", "detect_fact",       "project_fact",   "project_dimension",  "project_all_dependents",
        "specialize_dimension", "add_measure",      "add_parameter",  "select_objects",     "set_hierarchy",
        "add_hierarchy_edge",   "remove_hierarchy_edge", "infer_hierarchy"};
    return ops.contains(name);
}

WarehouseDef apply_warehouse(const ProjectState& s, const std::string& name, const json& op)
{
    const auto& wh = s.warehouse;
    const auto& src = s.source;
    if (name == "project_class")
        return project_class(wh, src, field(op, "class"));
    if (name == "delete_class")
        return delete_class(wh, field(op, "class"));
    if (name == "set_selection")
        return set_selection(wh, src, field(op, "class"), optional_formula(op, "predicate"));
    if (name == "add_specific_attribute") {
        if (!op.contains("type"))
            throw Error(ErrorKind::InvalidArgument, "operation field 'type' is required");
        auto type = type_from_json(op["type"]);
        Value def = op.contains("default") ? value_from_json(op["default"], type) : Value{};
        return add_specific_attribute(wh, field(op, "class"), field(op, "name"), type, def);
    }
    if (name == "add_calculated_attribute")
        return add_calculated_attribute(wh, src, field(op, "class"), field(op, "name"),
                                        parse_formula(field(op, "formula")));
    if (name == "rename_class")
        return rename_class(wh, field(op, "class"), field(op, "new_name"));
    if (name == "rename_attribute")
        return rename_attribute(wh, field(op, "class"), field(op, "attribute"), field(op, "new_name"));
    if (name == "delete_attribute")
        return delete_attribute(wh, field(op, "class"), field(op, "attribute"));
    if (name == "group_attributes")
        return group_attributes(wh, field(op, "class"), string_list(op, "attributes"), field(op, "name"));
    if (name == "split_attribute")
        return split_attribute(wh, field(op, "class"), field(op, "attribute"));
    if (name == "historize_attribute")
        return mark_attribute_historized(wh, field(op, "class"), field(op, "attribute"));
    if (name == "historize_class")
        return mark_class_historized(wh, field(op, "class"));
    if (name == "create_environment")
        return create_environment(wh, field(op, "name"), string_list(op, "classes"), string_list(op, "links"));
    if (name == "delete_environment")
        return delete_environment(wh, field(op, "name"));
    throw Error(ErrorKind::InvalidArgument, "unknown operation '" + name + "'");
}

} // namespace

OperationOutcome apply_operation(const ProjectState& state, const json& op, const StoreState* data)
{
    if (!op.is_object())
        throw Error(ErrorKind::InvalidArgument, "an operation is a JSON object");
    auto name = field(op, "op");
    OperationOutcome out{state, nullptr};
    auto& next = out.state;

    if (!is_mart_op(name)) {
        next.warehouse = apply_warehouse(state, name, op);
        next.warehouse_operations.push_back(op);
        ++next.version;
        out.result = warehouse_result(next);
        return out;
    }

    auto mart_name = field(op, "mart");
    if (mart_name.empty())
        throw Error(ErrorKind::InvalidArgument, "mart names are non-empty");
    auto it = std::find_if(next.marts.begin(), next.marts.end(), [&](const MartEntry& m) { return m.name == mart_name; });
    if (it == next.marts.end()) {
        MartEntry e;
        e.name = mart_name;
        e.definition.name = mart_name;
        next.marts.push_back(std::move(e));
        it = std::prev(next.marts.end());
    }
    auto& entry = *it;
    const auto& wh = state.warehouse;
    const auto& mart = entry.definition;
    std::vector<std::string> diagnostics;
    json logged = op;
    json extra = json::object();

    auto require_data = [&]() -> const StoreState& {
        if (!data)
            throw Error(ErrorKind::ReplayMismatch, "operation '" + name + "' needs warehouse data and is never logged");
        return *data;
    };

    MartDef result;
    if (name == "flag_representative") {
        result = flag_representative(mart, wh, field(op, "class"));
    } else if (name == "detect_fact") {
        auto report = detect_representative_classes(wh, require_data().runs);
        json ranking = json::array();
        for (const auto& r : report.ranking)
            ranking.push_back({{"class", r.class_name}, {"score", r.score.to_string()}});
        extra["ranking"] = ranking;
        extra["recommended"] = report.recommended;
        diagnostics = report.diagnostics;
        if (report.recommended.empty()) {
            out.state = state;
            out.result = mart_result(state, mart, diagnostics);
            out.result.update(extra);
            return out;
        }
        result = flag_representative(mart, wh, report.recommended.front());
        logged = {{"op", "flag_representative"}, {"mart", mart_name}, {"class", report.recommended.front()}};
    } else if (name == "project_fact") {
        result = project_fact(mart, wh, field(op, "class"), optional_field(op, "name"), &diagnostics);
    } else if (name == "project_dimension") {
        auto attr = optional_field(op, "attribute");
        result = attr.empty() ? project_dimension(mart, wh, field(op, "class"), optional_field(op, "name"))
                              : project_dimension_from_attribute(mart, wh, field(op, "class"), attr,
                                                                 optional_field(op, "name"));
    } else if (name == "project_all_dependents") {
        result = project_all_dependents(mart, wh);
    } else if (name == "specialize_dimension") {
        result = specialize_dimension(mart, wh, field(op, "parent"), field(op, "name"), optional_field(op, "class"),
                                      string_list(op, "attributes"), optional_formula(op, "membership"));
    } else if (name == "add_measure") {
        result = add_measure(mart, wh, field(op, "name"), parse_formula(field(op, "formula")),
                             optional_field(op, "anchor"));
    } else if (name == "add_parameter") {
        result = add_parameter(mart, wh, field(op, "dimension"), field(op, "name"), parse_formula(field(op, "formula")),
                               optional_field(op, "anchor"));
    } else if (name == "select_objects") {
        result = select_objects(mart, wh, field(op, "target"), optional_formula(op, "predicate"));
    } else if (name == "set_hierarchy") {
        result = set_hierarchy(mart, field(op, "dimension"), edge_list(op));
    } else if (name == "add_hierarchy_edge") {
        result = add_hierarchy_edge(mart, field(op, "dimension"), field(op, "from"), field(op, "to"));
    } else if (name == "remove_hierarchy_edge") {
        result = remove_hierarchy_edge(mart, field(op, "dimension"), field(op, "from"), field(op, "to"));
    } else {  // infer_hierarchy
        auto dim_name = field(op, "dimension");
        const auto* dim = mart.find_dimension(dim_name);
        if (!dim)
            throw Error(ErrorKind::UnknownClass, "unknown dimension '" + dim_name + "'");
        auto loaded = load_mart(mart, wh, require_data());
        std::vector<std::string> columns;
        auto rows = dimension_sample(mart, loaded, dim_name, &columns);
        auto inferred = infer_hierarchy(columns, rows);
        HierarchyGraph inherited;
        if (!dim->parent.empty())
            inherited = full_hierarchy(mart, *mart.find_dimension(dim->parent));
        std::vector<std::pair<std::string, std::string>> own;
        for (const auto& e : inferred.edges)
            if (std::find(inherited.edges.begin(), inherited.edges.end(), e) == inherited.edges.end())
                own.push_back(e);
        result = set_hierarchy(mart, dim_name, own);
        for (const auto& w : hierarchy_warnings(full_hierarchy(result, *result.find_dimension(dim_name)), rows))
            diagnostics.push_back(w);
        json edges = json::array();
        for (const auto& [a, b] : own)
            edges.push_back({a, b});
        logged = {{"op", "set_hierarchy"}, {"mart", mart_name}, {"dimension", dim_name}, {"edges", edges}};
        extra["sample_size"] = rows.size();
    }

    entry.definition = std::move(result);
    entry.operations.push_back(std::move(logged));
    ++next.version;
    out.result = mart_result(next, entry.definition, diagnostics);
    out.result.update(extra);
    return out;
}

ProjectState replay(const ProjectState& base, const std::vector<json>& warehouse_operations,
                    const std::vector<std::pair<std::string, std::vector<json>>>& mart_operations)
{
    ProjectState s;
    s.source_path = base.source_path;
    s.source_hash = base.source_hash;
    s.source = base.source;
    s.time_model = base.time_model;
    for (const auto& op : warehouse_operations) {
        if (op.is_object() && op.contains("op") && op["op"].is_string() && is_mart_op(op["op"].get<std::string>()))
            throw Error(ErrorKind::ReplayMismatch, "mart operation in the warehouse log: " + op.dump());
        s = apply_operation(s, op, nullptr).state;
    }
    for (const auto& [name, ops] : mart_operations) {
        if (!s.find_mart(name)) {
            MartEntry e;
            e.name = name;
            e.definition.name = name;
            s.marts.push_back(std::move(e));
        }
        for (const auto& op : ops) {
            if (!op.is_object() || op.value("mart", "") != name)
                throw Error(ErrorKind::ReplayMismatch, "operation outside mart '" + name + "': " + op.dump());
            s = apply_operation(s, op, nullptr).state;
        }
    }
    return s;
}

json project_to_json(const ProjectState& s)
{
    json marts = json::array();
    for (const auto& m : s.marts)
        marts.push_back({{"name", m.name}, {"operations", m.operations}, {"resolved", mart_to_json(m.definition)}});
    return {{"format_version", kProjectFormatVersion},
            {"version", s.version},
            {"source", {{"path", s.source_path}, {"hash", s.source_hash}}},
            {"time_model", time_model_to_json(s.time_model)},
            {"warehouse", {{"operations", s.warehouse_operations}, {"resolved", warehouse_to_json(s.warehouse)}}},
            {"marts", marts}};
}

// ---------------------------------------------------------------------------------------

namespace {

fs::path store_directory(const fs::path& project_file)
{
    auto dir = project_file;
    dir += ".store";
    return dir;
}

fs::path resolve_source(const fs::path& project_file, const std::string& source_path)
{
    fs::path p(source_path);
    return p.is_absolute() ? p : project_file.parent_path() / p;
}

} // namespace

std::unique_ptr<Project> Project::create(const fs::path& project_file, const fs::path& source_file, TimeModel time_model)
{
    time_model.validate();
    auto text = read_file(source_file);
    auto project = std::unique_ptr<Project>(new Project());
    project->file_ = fs::absolute(project_file);
    ProjectState s;
    s.source = load_schema(text);
    s.source_hash = sha256_hex(text);
    auto abs_source = fs::absolute(source_file);
    auto rel = abs_source.lexically_relative(project->file_.parent_path());
    s.source_path = rel.empty() ? abs_source.string() : rel.generic_string();
    s.time_model = time_model;
    project->store_ = Store::open(store_directory(project->file_), time_model);
    project->store_->reset();
    project->save(s);
    project->state_ = std::make_shared<const ProjectState>(std::move(s));
    return project;
}

std::unique_ptr<Project> Project::open(const fs::path& project_file)
{
    auto project = std::unique_ptr<Project>(new Project());
    project->file_ = fs::absolute(project_file);
    auto doc = parse_json(read_file(project->file_));
    ProjectState base;
    std::vector<json> wh_ops;
    std::vector<std::pair<std::string, std::vector<json>>> mart_ops;
    json stored_wh, stored_marts = json::array();
    std::int64_t stored_version = 0;
    try {
        if (doc.at("format_version").get<int>() != kProjectFormatVersion)
            throw Error(ErrorKind::ParseError, "unsupported project format version " + doc["format_version"].dump());
        stored_version = doc.at("version").get<std::int64_t>();
        base.source_path = doc.at("source").at("path").get<std::string>();
        base.source_hash = doc.at("source").at("hash").get<std::string>();
        base.time_model = time_model_from_json(doc.at("time_model"));
        wh_ops = doc.at("warehouse").at("operations").get<std::vector<json>>();
        stored_wh = doc.at("warehouse").at("resolved");
        for (const auto& m : doc.at("marts")) {
            mart_ops.emplace_back(m.at("name").get<std::string>(), m.at("operations").get<std::vector<json>>());
            stored_marts.push_back(m.at("resolved"));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed project file: ") + e.what());
    }
    auto text = read_file(resolve_source(project->file_, base.source_path));
    if (sha256_hex(text) != base.source_hash)
        throw Error(ErrorKind::HashMismatch, "hash mismatch: source schema " + base.source_path +
                                                 " changed since the project was saved");
    base.source = load_schema(text);
    auto s = replay(base, wh_ops, mart_ops);
    if (s.version != stored_version)
        throw Error(ErrorKind::ReplayMismatch, "replay mismatch: logs hold " + std::to_string(s.version) +
                                                   " operations, file says version " + std::to_string(stored_version));
    if (warehouse_to_json(s.warehouse) != stored_wh)
        throw Error(ErrorKind::ReplayMismatch, "replay mismatch: warehouse log does not reproduce the saved definition");
    for (std::size_t i = 0; i < s.marts.size(); ++i)
        if (mart_to_json(s.marts[i].definition) != stored_marts.at(i))
            throw Error(ErrorKind::ReplayMismatch,
                        "replay mismatch: log of mart '" + s.marts[i].name + "' does not reproduce the saved definition");
    project->store_ = Store::open(store_directory(project->file_), s.time_model);
    project->state_ = std::make_shared<const ProjectState>(std::move(s));
    return project;
}

std::shared_ptr<const ProjectState> Project::state() const
{
    std::lock_guard lock(state_mutex_);
    return state_;
}

std::unique_lock<std::mutex> Project::acquire_writer()
{
    std::unique_lock lock(writer_, std::try_to_lock);
    if (!lock.owns_lock())
        throw Error(ErrorKind::Conflict, "conflict: another mutation is in progress");
    return lock;
}

void Project::save(const ProjectState& state) const
{
    write_file_atomic(file_, project_to_json(state).dump(2) + "\n");
}

json Project::apply(const json& op, std::optional<std::int64_t> expected_version)
{
    auto lock = acquire_writer();
    auto current = state();
    if (expected_version && *expected_version != current->version)
        throw Error(ErrorKind::StaleVersion, "stale version: request is based on version " +
                                                 std::to_string(*expected_version) + ", project is at version " +
                                                 std::to_string(current->version));
    auto data = store_->snapshot();
    auto outcome = apply_operation(*current, op, data.get());
    if (outcome.state.version != current->version) {
        save(outcome.state);
        std::lock_guard guard(state_mutex_);
        state_ = std::make_shared<const ProjectState>(std::move(outcome.state));
    }
    return outcome.result;
}

ExtractionRun Project::refresh(std::string_view instances, Timestamp date, const ProgressCallback& progress)
{
    auto lock = acquire_writer();
    auto current = state();
    auto data = store_->snapshot();
    auto snapshots = load_instances(current->source, instances, date, data->known_sources);
    return store_->run_refresh(current->warehouse, current->source, snapshots, date, progress);
}

void Project::set_specific_value(std::string_view object_id, std::string_view attr, const json& value)
{
    auto lock = acquire_writer();
    auto current = state();
    auto data = store_->snapshot();
    auto it = data->objects.find(std::string(object_id));
    if (it == data->objects.end())
        throw Error(ErrorKind::UnknownObject, "unknown object '" + std::string(object_id) + "'");
    auto wgraph = current->warehouse.schema();
    auto a = wgraph.resolve_attribute(it->second.class_name, attr);
    if (!a)
        throw Error(ErrorKind::UnknownAttribute, "unknown attribute '" + std::string(attr) + "' of class '" +
                                                     it->second.class_name + "'");
    store_->set_specific_value(current->warehouse, object_id, a->name, value_from_json(value, a->type));
}

MartData Project::load_mart_data(std::string_view mart) const
{
    auto current = state();
    const auto* m = current->find_mart(mart);
    if (!m)
        throw Error(ErrorKind::UnknownClass, "unknown mart '" + std::string(mart) + "'");
    return load_mart(m->definition, current->warehouse, *store_->snapshot());
}

} // namespace dw
