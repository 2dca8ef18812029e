#include "dw/temporal.hpp"

#include "dw/error.hpp"

#include <fstream>
#include <sstream>

namespace dw {

std::string_view to_string(Granularity g)
{
    switch (g) {
    case Granularity::Day: return "day";
    case Granularity::Hour: return "hour";
    case Granularity::Minute: return "minute";
    }
    return "?";
}

std::optional<Granularity> parse_granularity(std::string_view text)
{
    for (auto g : {Granularity::Day, Granularity::Hour, Granularity::Minute})
        if (to_string(g) == text)
            return g;
    return std::nullopt;
}

std::int64_t TimeModel::granule_minutes() const
{
    switch (granularity) {
    case Granularity::Day: return 1440;
    case Granularity::Hour: return 60;
    case Granularity::Minute: return 1;
    }
    return 1;
}

Timestamp TimeModel::quantize(Timestamp t) const
{
    auto g = granule_minutes();
    auto m = t.minutes;
    auto q = m / g;
    if (m % g != 0 && m < 0)
        --q;
    return Timestamp{q * g};
}

Timestamp TimeModel::next_due(Timestamp last) const
{
    return Timestamp{quantize(last).minutes + refresh_period * granule_minutes()};
}

void TimeModel::validate() const
{
    if (refresh_period < 1)
        throw Error(ErrorKind::InvalidArgument, "refresh period must be at least one granule");
}

json time_model_to_json(const TimeModel& tm)
{
    return {{"granularity", to_string(tm.granularity)}, {"refresh_period", tm.refresh_period}};
}

TimeModel time_model_from_json(const json& j)
{
    TimeModel tm;
    if (j.contains("granularity")) {
        auto g = parse_granularity(j["granularity"].get<std::string>());
        if (!g)
            throw Error(ErrorKind::InvalidArgument, "granularity is one of day, hour, minute");
        tm.granularity = *g;
    }
    tm.refresh_period = j.value("refresh_period", std::int64_t{1});
    tm.validate();
    return tm;
}

json run_to_json(const ExtractionRun& run)
{
    json counters = json::object();
    for (const auto& [cls, c] : run.counters)
        counters[cls] = {{"inserted", c.inserted}, {"changed", c.changed}, {"unchanged", c.unchanged}};
    json tombs = json::array();
    for (const auto& t : run.tombstones)
        tombs.push_back({{"class", t.class_name}, {"object_id", t.object_id}});
    return {{"sequence", run.sequence},
            {"date", run.date.to_string()},
            {"counters", std::move(counters)},
            {"tombstones", std::move(tombs)}};
}

ExtractionRun run_from_json(const json& j)
{
    ExtractionRun run;
    run.sequence = j.at("sequence").get<std::int64_t>();
    auto date = Timestamp::parse(j.at("date").get<std::string>());
    if (!date)
        throw Error(ErrorKind::ParseError, "malformed run date");
    run.date = *date;
    for (const auto& [cls, c] : j.at("counters").items())
        run.counters[cls] = {c.at("inserted").get<std::int64_t>(), c.at("changed").get<std::int64_t>(),
                             c.at("unchanged").get<std::int64_t>()};
    for (const auto& t : j.value("tombstones", json::array()))
        run.tombstones.push_back({t.at("class").get<std::string>(), t.at("object_id").get<std::string>()});
    return run;
}

bool historized_chain(const WarehouseDef& wh, const SchemaGraph& wgraph, std::string_view cls)
{
    if (wh.class_historized(cls))
        return true;
    for (const auto& a : wgraph.ancestors(cls))
        if (wh.class_historized(a))
            return true;
    return false;
}

Store::Store(TimeModel time_model) : time_model_(time_model), state_(std::make_shared<StoreState>())
{
    time_model_.validate();
}

std::shared_ptr<const StoreState> Store::snapshot() const
{
    std::lock_guard lock(state_mutex_);
    return state_;
}

std::vector<ExtractionRun> Store::runs() const
{
    return snapshot()->runs;
}

namespace {

/// (declaring class, attribute) pairs along the class chain of `cls`, own class first.
std::vector<std::pair<std::string, const WarehouseAttribute*>> chain_attributes(const WarehouseDef& wh,
                                                                               const SchemaGraph& wgraph,
                                                                               std::string_view cls)
{
    std::vector<std::pair<std::string, const WarehouseAttribute*>> out;
    std::vector<std::string> chain{std::string(cls)};
    for (const auto& a : wgraph.ancestors(cls))
        chain.push_back(a);
    for (const auto& c : chain)
        if (const auto* dc = wh.find_class(c))
            for (const auto& a : dc->attributes)
                out.emplace_back(c, &a);
    return out;
}

} // namespace

ExtractionRun Store::run_refresh(const WarehouseDef& wh, const SchemaGraph& source,
                                 const std::vector<ObjectSnapshot>& snapshots, Timestamp date,
                                 const ProgressCallback& progress)
{
    std::lock_guard writer(writer_);
    auto current = snapshot();
    date = time_model_.quantize(date);
    if (!current->runs.empty() && date <= current->runs.back().date)
        throw Error(ErrorKind::OutOfOrderRun, "out-of-order run: " + date.to_string() + " does not follow " +
                                                  current->runs.back().date.to_string());
    ExtractionRun run;
    run.sequence = current->runs.empty() ? 1 : current->runs.back().sequence + 1;
    run.date = date;
    auto report = [&](const char* phase, std::size_t done, std::size_t total) {
        if (progress)
            progress({run.sequence, phase, done, total});
    };

    report("check", 0, snapshots.size());
    check_snapshots(source, snapshots, current->known_sources);
    report("extract", 0, snapshots.size());
    auto extracted = extract(wh, source, snapshots);

    auto next = std::make_shared<StoreState>(*current);
    for (const auto& s : snapshots)
        next->known_sources[s.id] = s.class_name;
    for (const auto& c : wh.classes)
        run.counters[c.name];
    auto wgraph = wh.schema();

    std::set<std::string> seen;
    std::size_t done = 0;
    for (const auto& e : extracted) {
        seen.insert(e.id);
        bool class_hist = historized_chain(wh, wgraph, e.class_name);
        auto attrs = chain_attributes(wh, wgraph, e.class_name);
        auto it = next->objects.find(e.id);
        auto& counters = run.counters[e.class_name];
        if (it == next->objects.end()) {
            StoredObject o;
            o.id = e.id;
            o.class_name = e.class_name;
            o.values = e.values;
            for (const auto& [decl, a] : attrs)
                if (a->kind == AttributeKind::Specific)
                    o.values[a->name] = a->default_value;
            o.links = e.links;
            o.source_refs = e.source_refs;
            it = next->objects.emplace(e.id, std::move(o)).first;
            ++counters.inserted;
        } else {
            auto& o = it->second;
            bool changed = o.links != e.links || o.class_name != e.class_name;
            for (const auto& [name, v] : e.values) {
                auto cur = o.values.find(name);
                changed = changed || cur == o.values.end() || cur->second != v;
            }
            ++(changed ? counters.changed : counters.unchanged);
            for (const auto& [name, v] : e.values)
                o.values[name] = v;
            for (const auto& [decl, a] : attrs)
                if (a->kind == AttributeKind::Specific && !o.values.contains(a->name))
                    o.values[a->name] = a->default_value;
            o.links = e.links;
            o.class_name = e.class_name;
            for (const auto& r : e.source_refs)
                if (std::find(o.source_refs.begin(), o.source_refs.end(), r) == o.source_refs.end())
                    o.source_refs.push_back(r);
        }
        auto& o = it->second;
        o.present = true;
        if (class_hist) {
            bool append = o.states.empty() || o.states.back().values != e.values || o.states.back().links != e.links;
            if (append) {
                std::int64_t id = 1;
                if (!o.states.empty()) {
                    o.states.back().end = date;
                    id = o.states.back().state_id + 1;
                }
                o.states.push_back({id, e.values, e.links, date, std::nullopt, run.sequence});
            }
        }
        for (const auto& [decl, a] : attrs) {
            if (!wh.attribute_historized(decl, a->name))
                continue;
            auto v = e.values.find(a->name);
            Value value = v == e.values.end() ? Value{} : v->second;
            auto& entries = o.attribute_history[a->name];
            if (entries.empty() || entries.back().value != value)
                entries.push_back({std::move(value), date, run.sequence});
        }
        report("load", ++done, extracted.size());
    }
    for (auto& [id, o] : next->objects) {
        if (o.present && !seen.contains(id)) {
            o.present = false;
            run.tombstones.push_back({o.class_name, id});
        }
    }
    next->runs.push_back(run);
    commit(std::move(next), &run);
    report("done", extracted.size(), extracted.size());
    return run;
}

void Store::set_specific_value(const WarehouseDef& wh, std::string_view object_id, std::string_view attr,
                               const Value& value)
{
    std::lock_guard writer(writer_);
    auto current = snapshot();
    auto it = current->objects.find(std::string(object_id));
    if (it == current->objects.end())
        throw Error(ErrorKind::UnknownObject, "unknown object '" + std::string(object_id) + "'");
    auto wgraph = wh.schema();
    const WarehouseAttribute* target = nullptr;
    for (const auto& [decl, a] : chain_attributes(wh, wgraph, it->second.class_name))
        if (a->name == attr)
            target = a;
    if (!target)
        throw Error(ErrorKind::UnknownAttribute, "unknown attribute '" + std::string(attr) + "' of class '" +
                                                     it->second.class_name + "'");
    if (target->kind != AttributeKind::Specific)
        throw Error(ErrorKind::InvalidArgument,
                    "'" + std::string(attr) + "' is " + std::string(to_string(target->kind)) + "; only specific attributes are user-written");
    if (!conforms(value, target->type))
        throw Error(ErrorKind::TypeMismatch,
                    "type mismatch: " + value.to_display() + " does not conform to " + target->type.to_string());
    auto next = std::make_shared<StoreState>(*current);
    next->objects.at(std::string(object_id)).values[std::string(attr)] = value;
    commit(std::move(next), nullptr);
}

std::optional<std::map<std::string, Value>> Store::state_at(const WarehouseDef& wh, std::string_view cls,
                                                            std::string_view object_id, Timestamp t) const
{
    auto wgraph = wh.schema();
    wh.require_class(cls);
    if (!historized_chain(wh, wgraph, cls))
        throw Error(ErrorKind::NotHistorized, "class '" + std::string(cls) + "' is not historized");
    auto state = snapshot();
    auto it = state->objects.find(std::string(object_id));
    if (it == state->objects.end() || !wgraph.is_a(it->second.class_name, cls))
        throw Error(ErrorKind::UnknownObject,
                    "unknown object '" + std::string(object_id) + "' in class '" + std::string(cls) + "'");
    for (const auto& s : it->second.states)
        if (s.start <= t && (!s.end || t < *s.end))
            return s.values;
    return std::nullopt;
}

void Store::reset()
{
    std::lock_guard writer(writer_);
    if (directory_) {
        std::filesystem::remove(*directory_ / "runs.jsonl");
        std::filesystem::remove(*directory_ / "state.json");
    }
    std::lock_guard lock(state_mutex_);
    state_ = std::make_shared<StoreState>();
}

void Store::commit(std::shared_ptr<const StoreState> next, const ExtractionRun* appended_run)
{
    if (directory_) {
        if (appended_run) {
            std::ofstream runs(*directory_ / "runs.jsonl", std::ios::app | std::ios::binary);
            runs << run_to_json(*appended_run).dump() << '\n';
            if (!runs)
                throw Error(ErrorKind::IoError, "cannot append to " + (*directory_ / "runs.jsonl").string());
        }
        auto tmp = *directory_ / "state.json.tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << store_state_to_json(*next).dump() << '\n';
            if (!out)
                throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, *directory_ / "state.json");
    }
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
}

std::unique_ptr<Store> Store::open(const std::filesystem::path& directory, TimeModel time_model)
{
    auto store = std::make_unique<Store>(time_model);
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec)
        throw Error(ErrorKind::IoError, "cannot create store directory " + directory.string() + ": " + ec.message());
    store->directory_ = directory;
    auto state_file = directory / "state.json";
    if (std::filesystem::exists(state_file)) {
        std::ifstream in(state_file, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        auto loaded = std::make_shared<StoreState>(store_state_from_json(parse_json(buf.str())));
        // The run log is authoritative for runs; state.json carries the same list.
        auto runs_file = directory / "runs.jsonl";
        if (std::filesystem::exists(runs_file)) {
            std::ifstream rin(runs_file, std::ios::binary);
            std::vector<ExtractionRun> runs;
            for (std::string line; std::getline(rin, line);)
                if (!line.empty())
                    runs.push_back(run_from_json(parse_json(line)));
            if (runs != loaded->runs)
                throw Error(ErrorKind::IoError, "run log and state index disagree in " + directory.string());
        }
        store->state_ = std::move(loaded);
    }
    return store;
}

// ---------------------------------------------------------------------------------------
// Export and persistence

namespace {

json values_json(const std::map<std::string, Value>& values)
{
    json j = json::object();
    for (const auto& [k, v] : values)
        j[k] = value_to_json(v);
    return j;
}

/// Values stored without their type: decode by JSON shape. Decimals were written as
/// strings, so a tagged form keeps them apart from strings.
json tagged_value(const Value& v)
{
    return std::visit(
        [&](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>)
                return nullptr;
            else if constexpr (std::is_same_v<T, bool>)
                return {{"b", x}};
            else if constexpr (std::is_same_v<T, std::int64_t>)
                return {{"i", x}};
            else if constexpr (std::is_same_v<T, Decimal>)
                return {{"d", x.to_string()}};
            else if constexpr (std::is_same_v<T, std::string>)
                return {{"s", x}};
            else if constexpr (std::is_same_v<T, Date>)
                return {{"t", x.to_string()}};
            else if constexpr (std::is_same_v<T, TupleValue>) {
                json parts = json::array();
                for (std::size_t i = 0; i < x.names.size(); ++i)
                    parts.push_back({x.names[i], tagged_value(x.values[i])});
                return {{"tuple", parts}};
            } else {
                json items = json::array();
                for (const auto& e : x)
                    items.push_back(tagged_value(e));
                return {{"list", items}};
            }
        },
        v.data);
}

Value untag_value(const json& j)
{
    if (j.is_null())
        return {};
    if (j.contains("b"))
        return j["b"].get<bool>();
    if (j.contains("i"))
        return j["i"].get<std::int64_t>();
    if (j.contains("d"))
        return *Decimal::parse(j["d"].get<std::string>());
    if (j.contains("s"))
        return j["s"].get<std::string>();
    if (j.contains("t"))
        return *Date::parse(j["t"].get<std::string>());
    if (j.contains("tuple")) {
        TupleValue t;
        for (const auto& p : j["tuple"]) {
            t.names.push_back(p.at(0).get<std::string>());
            t.values.push_back(untag_value(p.at(1)));
        }
        return t;
    }
    ListValue l;
    for (const auto& e : j.at("list"))
        l.push_back(untag_value(e));
    return l;
}

json tagged_values(const std::map<std::string, Value>& values)
{
    json j = json::object();
    for (const auto& [k, v] : values)
        j[k] = tagged_value(v);
    return j;
}

std::map<std::string, Value> untag_values(const json& j)
{
    std::map<std::string, Value> out;
    for (const auto& [k, v] : j.items())
        out[k] = untag_value(v);
    return out;
}

Timestamp parse_ts(const json& j)
{
    auto t = Timestamp::parse(j.get<std::string>());
    if (!t)
        throw Error(ErrorKind::ParseError, "malformed timestamp '" + j.get<std::string>() + "'");
    return *t;
}

} // namespace

std::string export_history(const StoreState& state)
{
    std::string out;
    for (const auto& [id, o] : state.objects) {
        for (const auto& s : o.states) {
            json rec = {{"class", o.class_name},
                        {"object_id", id},
                        {"state_id", s.state_id},
                        {"values", values_json(s.values)},
                        {"links", s.links},
                        {"interval", {{"start", s.start.to_string()}, {"end", s.end ? json(s.end->to_string()) : json()}}},
                        {"run", s.run},
                        {"level", "class"}};
            out += rec.dump() + "\n";
        }
        for (const auto& [attr, entries] : o.attribute_history) {
            for (std::size_t i = 0; i < entries.size(); ++i) {
                const auto& e = entries[i];
                json end = i + 1 < entries.size() ? json(entries[i + 1].date.to_string()) : json();
                json rec = {{"class", o.class_name},
                            {"object_id", id},
                            {"state_id", static_cast<std::int64_t>(i + 1)},
                            {"values", {{attr, value_to_json(e.value)}}},
                            {"interval", {{"start", e.date.to_string()}, {"end", end}}},
                            {"run", e.run},
                            {"level", "attribute"},
                            {"attribute", attr}};
                out += rec.dump() + "\n";
            }
        }
    }
    return out;
}

std::string export_runs(const StoreState& state)
{
    std::string out;
    for (const auto& r : state.runs)
        out += run_to_json(r).dump() + "\n";
    return out;
}

json store_state_to_json(const StoreState& state)
{
    json runs = json::array();
    for (const auto& r : state.runs)
        runs.push_back(run_to_json(r));
    json objects = json::array();
    for (const auto& [id, o] : state.objects) {
        json states = json::array();
        for (const auto& s : o.states)
            states.push_back({{"state_id", s.state_id},
                              {"values", tagged_values(s.values)},
                              {"links", s.links},
                              {"start", s.start.to_string()},
                              {"end", s.end ? json(s.end->to_string()) : json()},
                              {"run", s.run}});
        json hist = json::object();
        for (const auto& [attr, entries] : o.attribute_history) {
            json arr = json::array();
            for (const auto& e : entries)
                arr.push_back({{"value", tagged_value(e.value)}, {"date", e.date.to_string()}, {"run", e.run}});
            hist[attr] = std::move(arr);
        }
        objects.push_back({{"id", id},
                           {"class", o.class_name},
                           {"values", tagged_values(o.values)},
                           {"links", o.links},
                           {"source_refs", o.source_refs},
                           {"states", std::move(states)},
                           {"attribute_history", std::move(hist)},
                           {"present", o.present}});
    }
    return {{"runs", std::move(runs)}, {"objects", std::move(objects)}, {"known_sources", state.known_sources}};
}

StoreState store_state_from_json(const json& j)
{
    StoreState st;
    try {
        for (const auto& r : j.at("runs"))
            st.runs.push_back(run_from_json(r));
        for (const auto& jo : j.at("objects")) {
            StoredObject o;
            o.id = jo.at("id").get<std::string>();
            o.class_name = jo.at("class").get<std::string>();
            o.values = untag_values(jo.at("values"));
            o.links = jo.at("links").get<std::map<std::string, std::vector<std::string>>>();
            o.source_refs = jo.at("source_refs").get<std::vector<std::string>>();
            for (const auto& js : jo.at("states")) {
                ObjectState s;
                s.state_id = js.at("state_id").get<std::int64_t>();
                s.values = untag_values(js.at("values"));
                s.links = js.at("links").get<std::map<std::string, std::vector<std::string>>>();
                s.start = parse_ts(js.at("start"));
                if (!js.at("end").is_null())
                    s.end = parse_ts(js.at("end"));
                s.run = js.at("run").get<std::int64_t>();
                o.states.push_back(std::move(s));
            }
            for (const auto& [attr, arr] : jo.at("attribute_history").items())
                for (const auto& e : arr)
                    o.attribute_history[attr].push_back(
                        {untag_value(e.at("value")), parse_ts(e.at("date")), e.at("run").get<std::int64_t>()});
            o.present = jo.at("present").get<bool>();
            st.objects.emplace(o.id, std::move(o));
        }
        st.known_sources = j.at("known_sources").get<KnownObjects>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed store state: ") + e.what());
    }
    return st;
}

} // namespace dw
