#include "dw/service.hpp"

#include "dw/error.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>

namespace dw {

namespace {

int status_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::StaleVersion:
    case ErrorKind::Conflict: return 409;
    case ErrorKind::IoError: return 500;
    default: return 400;
    }
}

void send_json(httplib::Response& res, const json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message, int status)
{
    send_json(res, {{"kind", to_string(kind)}, {"message", message}}, status);
}

json request_body(const httplib::Request& req)
{
    if (req.body.empty())
        return json::object();
    auto j = parse_json(req.body);
    if (!j.is_object())
        throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
    return j;
}

std::optional<std::int64_t> body_version(const json& body)
{
    if (!body.contains("version") || body["version"].is_null())
        return std::nullopt;
    if (!body["version"].is_number_integer())
        throw Error(ErrorKind::InvalidArgument, "'version' must be an integer");
    return body["version"].get<std::int64_t>();
}

/// Copies `keys` of `body` into an operation named `op`.
json make_op(const std::string& op, const json& body, std::initializer_list<const char*> keys)
{
    json out = {{"op", op}};
    for (const char* k : keys)
        if (body.contains(k))
            out[k] = body[k];
    return out;
}

/// Server-sent progress events, kept for the lifetime of the service.
class ProgressHub {
public:
    void publish(const json& event)
    {
        {
            std::lock_guard lock(mutex_);
            events_.push_back("event: progress\ndata: " + event.dump() + "\n\n");
            done_flags_.push_back(event.value("phase", "") == "done");
        }
        cv_.notify_all();
    }

    std::size_t size()
    {
        std::lock_guard lock(mutex_);
        return events_.size();
    }

    /// Events from `from` on, waiting up to `wait` for at least one.
    std::vector<std::pair<std::string, bool>> read(std::size_t from, std::chrono::milliseconds wait)
    {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, wait, [&] { return events_.size() > from || closed_; });
        std::vector<std::pair<std::string, bool>> out;
        for (std::size_t i = from; i < events_.size(); ++i)
            out.emplace_back(events_[i], done_flags_[i]);
        return out;
    }

    void close()
    {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    bool closed()
    {
        std::lock_guard lock(mutex_);
        return closed_;
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<std::string> events_;
    std::vector<bool> done_flags_;
    bool closed_ = false;
};

} // namespace

struct Service::Impl {
    Project& project;
    httplib::Server server;
    ProgressHub progress;

    explicit Impl(Project& p) : project(p) { routes(); }

    template <typename F>
    void guarded(httplib::Response& res, F&& f)
    {
        try {
            f();
        } catch (const Error& e) {
            send_error(res, e.kind(), e.what(), status_for(e.kind()));
        } catch (const std::exception& e) {
            send_error(res, ErrorKind::InvalidArgument, e.what(), 400);
        }
    }

    json apply(const json& op, std::optional<std::int64_t> version) { return project.apply(op, version); }

    void mutation(const std::string& path, std::function<json(const json& body, std::optional<std::int64_t>)> handler)
    {
        server.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto body = request_body(req);
                send_json(res, handler(body, body_version(body)));
            });
        });
    }

    void mart_mutation(const std::string& suffix,
                       std::function<json(const std::string& mart, const json& body, std::optional<std::int64_t>)> handler)
    {
        server.Post("/marts/:name/" + suffix, [this, handler](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto body = request_body(req);
                send_json(res, handler(req.path_params.at("name"), body, body_version(body)));
            });
        });
    }

    void routes()
    {
        server.Get("/schema/source", [this](const httplib::Request&, httplib::Response& res) {
            auto s = project.state();
            send_json(res, {{"version", s->version},
                            {"source", {{"path", s->source_path}, {"hash", s->source_hash}}},
                            {"schema", schema_to_json(s->source)}});
        });
        server.Get("/warehouse", [this](const httplib::Request&, httplib::Response& res) {
            auto s = project.state();
            send_json(res, {{"version", s->version},
                            {"warehouse", warehouse_to_json(s->warehouse)},
                            {"warnings", warehouse_warnings(s->warehouse)}});
        });
        server.Get("/marts", [this](const httplib::Request&, httplib::Response& res) {
            auto s = project.state();
            json names = json::array();
            for (const auto& m : s->marts)
                names.push_back(m.name);
            send_json(res, {{"version", s->version}, {"marts", names}});
        });
        server.Get("/marts/:name", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = project.state();
            const auto* m = s->find_mart(req.path_params.at("name"));
            if (!m)
                return send_error(res, ErrorKind::UnknownElement, "unknown mart '" + req.path_params.at("name") + "'", 404);
            send_json(res, {{"version", s->version}, {"mart", mart_to_json(m->definition)}});
        });
        server.Get("/marts/:name/dependencies", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto s = project.state();
                if (!req.has_param("from"))
                    throw Error(ErrorKind::InvalidArgument, "query parameter 'from' is required");
                auto from = req.get_param_value("from");
                json deps = json::array();
                for (const auto& d : transitive_dependencies(s->warehouse.schema(), from))
                    deps.push_back(dependency_to_json(d));
                send_json(res, {{"version", s->version}, {"from", from}, {"dependencies", deps}});
            });
        });

        mutation("/warehouse/project", [this](const json& body, auto version) {
            auto action = body.value("action", "project");
            if (action == "project")
                return apply(make_op("project_class", body, {"class"}), version);
            if (action == "delete")
                return apply(make_op("delete_class", body, {"class"}), version);
            if (action == "rename")
                return apply(make_op("rename_class", body, {"class", "new_name"}), version);
            throw Error(ErrorKind::InvalidArgument, "unknown action '" + action + "'");
        });
        mutation("/warehouse/selection", [this](const json& body, auto version) {
            return apply(make_op("set_selection", body, {"class", "predicate"}), version);
        });
        mutation("/warehouse/attributes", [this](const json& body, auto version) {
            static const std::map<std::string, std::string> ops{
                {"add_specific", "add_specific_attribute"}, {"add_calculated", "add_calculated_attribute"},
                {"rename", "rename_attribute"},             {"delete", "delete_attribute"},
                {"group", "group_attributes"},              {"split", "split_attribute"}};
            auto action = body.value("action", "");
            auto it = ops.find(action);
            if (it == ops.end())
                throw Error(ErrorKind::InvalidArgument, "unknown attribute action '" + action + "'");
            return apply(make_op(it->second, body,
                                 {"class", "name", "type", "default", "formula", "attribute", "new_name", "attributes"}),
                         version);
        });
        mutation("/warehouse/historize", [this](const json& body, auto version) {
            if (body.contains("attribute"))
                return apply(make_op("historize_attribute", body, {"class", "attribute"}), version);
            return apply(make_op("historize_class", body, {"class"}), version);
        });
        mutation("/warehouse/environments", [this](const json& body, auto version) {
            if (body.value("action", "create") == "delete")
                return apply(make_op("delete_environment", body, {"name"}), version);
            return apply(make_op("create_environment", body, {"name", "classes", "links"}), version);
        });

        mart_mutation("fact", [this](const std::string& mart, const json& body, auto version) {
            json op = make_op("project_fact", body, {"class", "name"});
            op["mart"] = mart;
            if (body.value("detect", false)) {
                auto detected = apply({{"op", "detect_fact"}, {"mart", mart}}, version);
                version.reset();
                if (!op.contains("class")) {
                    if (detected.at("recommended").empty())
                        throw Error(ErrorKind::NotRepresentative,
                                    "no representative class detected: " + detected.at("diagnostics").dump());
                    op["class"] = detected["recommended"][0];
                }
            } else if (body.value("flag", false)) {
                apply({{"op", "flag_representative"}, {"mart", mart}, {"class", body.value("class", "")}}, version);
                version.reset();
            }
            return apply(op, version);
        });
        mart_mutation("dimensions", [this](const std::string& mart, const json& body, auto version) {
            json op;
            if (body.value("all", false))
                op = {{"op", "project_all_dependents"}};
            else if (body.contains("parent"))
                op = make_op("specialize_dimension", body, {"parent", "name", "class", "attributes", "membership"});
            else if (body.contains("parameter")) {
                op = make_op("add_parameter", body["parameter"], {"name", "formula", "anchor"});
                op["dimension"] = body.value("dimension", "");
            } else
                op = make_op("project_dimension", body, {"class", "attribute", "name"});
            op["mart"] = mart;
            return apply(op, version);
        });
        mart_mutation("hierarchy", [this](const std::string& mart, const json& body, auto version) {
            json op;
            if (body.value("infer", false)) {
                op = make_op("infer_hierarchy", body, {"dimension"});
            } else if (body.contains("add") || body.contains("remove")) {
                bool add = body.contains("add");
                const auto& e = body[add ? "add" : "remove"];
                if (!e.is_array() || e.size() != 2)
                    throw Error(ErrorKind::InvalidArgument, "an edge is a [from, to] pair");
                op = make_op(add ? "add_hierarchy_edge" : "remove_hierarchy_edge", body, {"dimension"});
                op["from"] = e[0];
                op["to"] = e[1];
            } else {
                op = make_op("set_hierarchy", body, {"dimension", "edges"});
            }
            op["mart"] = mart;
            return apply(op, version);
        });
        mart_mutation("measures", [this](const std::string& mart, const json& body, auto version) {
            json op = make_op("add_measure", body, {"name", "formula", "anchor"});
            op["mart"] = mart;
            return apply(op, version);
        });
        mart_mutation("selection", [this](const std::string& mart, const json& body, auto version) {
            json op = make_op("select_objects", body, {"target", "predicate"});
            op["mart"] = mart;
            return apply(op, version);
        });

        server.Post("/runs/refresh", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto body = request_body(req);
                auto date_text = body.value("date", "");
                auto date = Timestamp::parse(date_text);
                if (!date)
                    throw Error(ErrorKind::InvalidArgument, "invalid run date '" + date_text + "'");
                json instances = {{"objects", body.value("objects", json::array())}};
                auto run = project.refresh(instances.dump(), *date, [this](const RefreshProgress& p) {
                    progress.publish({{"run", p.run}, {"phase", p.phase}, {"done", p.done}, {"total", p.total}});
                });
                send_json(res, {{"run", run_to_json(run)}});
            });
        });
        server.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
            json runs = json::array();
            for (const auto& r : project.store().runs())
                runs.push_back(run_to_json(r));
            send_json(res, {{"runs", runs}});
        });
        server.Get("/runs/progress", [this](const httplib::Request& req, httplib::Response& res) {
            std::size_t from = req.has_param("since") ? std::stoul(req.get_param_value("since")) : progress.size();
            auto cursor = std::make_shared<std::size_t>(from);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
                auto events = progress.read(*cursor, std::chrono::milliseconds(500));
                for (const auto& [text, done] : events) {
                    ++*cursor;
                    if (!sink.write(text.data(), text.size()))
                        return false;
                    if (done) {
                        sink.done();
                        return true;
                    }
                }
                if (progress.closed())
                    sink.done();
                return true;
            });
        });
        server.Get("/marts/:name/export", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto name = req.path_params.at("name");
                auto data = project.load_mart_data(name);
                json dims = json::object();
                for (const auto& [dim, rows] : data.dimensions)
                    dims[dim] = export_dimension(data, dim);
                send_json(res, {{"mart", name}, {"fact", export_fact(data)}, {"dimensions", dims}});
            });
        });
        server.Get("/export/history", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(export_history(*project.store().snapshot()), "application/x-ndjson");
        });
    }
};

Service::Service(Project& project) : impl_(std::make_unique<Impl>(project)) {}

Service::~Service()
{
    stop();
}

int Service::bind(const std::string& host, int port)
{
    if (port == 0)
        return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::serve()
{
    impl_->server.listen_after_bind();
}

void Service::stop()
{
    impl_->progress.close();
    impl_->server.stop();
}

} // namespace dw
