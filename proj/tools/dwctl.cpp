// dwctl: command-line front of a warehouse project. Every mutation goes through the same
// operation dispatcher and log as the HTTP service.

#include "dw/codegen.hpp"
#include "dw/error.hpp"
#include "dw/project.hpp"
#include "dw/service.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using dw::Error;
using dw::ErrorKind;
using dw::json;

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
}

dw::Timestamp parse_date(const std::string& text)
{
    auto t = dw::Timestamp::parse(text);
    if (!t)
        throw Error(ErrorKind::InvalidArgument, "invalid date '" + text + "'");
    return *t;
}

std::pair<std::string, std::string> split_pair(const std::string& text, char sep, const char* what)
{
    auto pos = text.find(sep);
    if (pos == std::string::npos || pos == 0 || pos + 1 == text.size())
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " '" + text + "' must read A" + sep + "B");
    return {text.substr(0, pos), text.substr(pos + 1)};
}

json extracted_to_json(const dw::ExtractedObject& o)
{
    json values = json::object();
    for (const auto& [k, v] : o.values)
        values[k] = dw::value_to_json(v);
    return {{"id", o.id}, {"class", o.class_name}, {"values", values}, {"links", o.links}};
}

void print(const json& j)
{
    std::cout << j.dump(2) << "\n";
}

struct Options {
    std::string project;
    std::string target = "neutral-plan";
    int port = 8080;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Warehouse and data mart builder"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    if (const char* env = std::getenv("DWCTL_PROJECT"))
        opt.project = env;
    app.add_option("--project", opt.project, "Project file (default: $DWCTL_PROJECT)");
    app.add_option("--target", opt.target, "Emission target: neutral-plan or sql");
    app.add_option("--port", opt.port, "HTTP port for serve (0 picks a free port)");

    auto open_project = [&] {
        if (opt.project.empty())
            throw Error(ErrorKind::InvalidArgument, "no project: pass --project or set DWCTL_PROJECT");
        return dw::Project::open(opt.project);
    };

    std::function<void()> action;

    // init
    std::string schema_file, granularity = "day";
    std::int64_t period = 1;
    auto* init = app.add_subcommand("init", "Create a project over a source schema");
    init->add_option("--schema", schema_file, "Source schema file")->required();
    init->add_option("--granularity", granularity, "day, hour or minute");
    init->add_option("--period", period, "Refresh period in granules");
    init->callback([&] {
        action = [&] {
            dw::TimeModel tm;
            auto g = dw::parse_granularity(granularity);
            if (!g)
                throw Error(ErrorKind::InvalidArgument, "unknown granularity '" + granularity + "'");
            tm.granularity = *g;
            tm.refresh_period = period;
            tm.validate();
            if (opt.project.empty())
                throw Error(ErrorKind::InvalidArgument, "no project: pass --project or set DWCTL_PROJECT");
            auto p = dw::Project::create(opt.project, schema_file, tm);
            print(dw::project_to_json(*p->state()));
        };
    });

    // validate
    std::string validate_schema;
    auto* validate = app.add_subcommand("validate", "Validate a schema file, or the project");
    validate->add_option("--schema", validate_schema, "Schema file to validate instead of the project");
    validate->callback([&] {
        action = [&] {
            if (!validate_schema.empty()) {
                auto g = dw::load_schema(read_text(validate_schema));
                print({{"valid", true}, {"classes", g.classes.size()}, {"links", g.links.size()}});
                return;
            }
            auto p = open_project();
            auto s = p->state();
            dw::check_closure(s->warehouse, s->source);
            for (const auto& m : s->marts)
                if (m.definition.fact)
                    dw::check_star(m.definition);
            print({{"valid", true},
                   {"version", s->version},
                   {"warnings", dw::warehouse_warnings(s->warehouse)}});
        };
    });

    // project-class
    std::string pc_class, pc_rename;
    bool pc_delete = false;
    auto* project_class = app.add_subcommand("project-class", "Project, delete or rename a warehouse class");
    project_class->add_option("class", pc_class, "Class name")->required();
    project_class->add_flag("--delete", pc_delete, "Delete the warehouse class");
    project_class->add_option("--rename", pc_rename, "New class name");
    project_class->callback([&] {
        action = [&] {
            json op;
            if (pc_delete)
                op = {{"op", "delete_class"}, {"class", pc_class}};
            else if (!pc_rename.empty())
                op = {{"op", "rename_class"}, {"class", pc_class}, {"new_name", pc_rename}};
            else
                op = {{"op", "project_class"}, {"class", pc_class}};
            print(open_project()->apply(op));
        };
    });

    // selection
    std::string sel_class, sel_predicate;
    auto* selection = app.add_subcommand("selection", "Set or clear the selection predicate of a warehouse class");
    selection->add_option("class", sel_class, "Class name")->required();
    selection->add_option("--predicate", sel_predicate, "Boolean formula; omit to clear");
    selection->callback([&] {
        action = [&] {
            json pred = sel_predicate.empty() ? json(nullptr) : json(sel_predicate);
            print(open_project()->apply({{"op", "set_selection"}, {"class", sel_class}, {"predicate", pred}}));
        };
    });

    // historize
    std::string hz_attribute, hz_class, hz_env;
    std::vector<std::string> hz_classes, hz_links;
    auto* historize = app.add_subcommand("historize", "Historize an attribute, a class, or an environment");
    auto* hz_attr_opt = historize->add_option("--attribute", hz_attribute, "Class.attribute");
    auto* hz_class_opt = historize->add_option("--class", hz_class, "Class name");
    auto* hz_env_opt = historize->add_option("--env", hz_env, "Environment name");
    historize->add_option("--classes", hz_classes, "Environment classes")->delimiter(',');
    historize->add_option("--links", hz_links, "Environment links")->delimiter(',');
    hz_attr_opt->excludes(hz_class_opt)->excludes(hz_env_opt);
    hz_class_opt->excludes(hz_env_opt);
    historize->callback([&] {
        action = [&] {
            json op;
            if (!hz_attribute.empty()) {
                auto [cls, attr] = split_pair(hz_attribute, '.', "attribute");
                op = {{"op", "historize_attribute"}, {"class", cls}, {"attribute", attr}};
            } else if (!hz_class.empty()) {
                op = {{"op", "historize_class"}, {"class", hz_class}};
            } else if (!hz_env.empty()) {
                op = {{"op", "create_environment"}, {"name", hz_env}, {"classes", hz_classes}, {"links", hz_links}};
            } else {
                throw Error(ErrorKind::InvalidArgument, "historize needs --attribute, --class or --env");
            }
            print(open_project()->apply(op));
        };
    });

    // extract / refresh
    std::string instances_file, run_date;
    auto* extract = app.add_subcommand("extract", "Dry-run extraction of an instance document");
    extract->add_option("--instances", instances_file, "Instance document")->required();
    extract->add_option("--date", run_date, "Extraction date")->required();
    extract->callback([&] {
        action = [&] {
            auto p = open_project();
            auto s = p->state();
            auto data = p->store().snapshot();
            auto snapshots = dw::load_instances(s->source, read_text(instances_file), parse_date(run_date),
                                                data->known_sources);
            for (const auto& o : dw::extract(s->warehouse, s->source, snapshots))
                std::cout << extracted_to_json(o).dump() << "\n";
        };
    });
    auto* refresh = app.add_subcommand("refresh", "Run one extraction into the historized store");
    refresh->add_option("--instances", instances_file, "Instance document")->required();
    refresh->add_option("--date", run_date, "Extraction date")->required();
    refresh->callback([&] {
        action = [&] {
            auto run = open_project()->refresh(read_text(instances_file), parse_date(run_date));
            print(dw::run_to_json(run));
        };
    });

    // set-specific
    std::string ss_object, ss_attribute, ss_value;
    auto* set_specific = app.add_subcommand("set-specific", "Write a specific attribute value of one object");
    set_specific->add_option("--object", ss_object, "Object id")->required();
    set_specific->add_option("--attribute", ss_attribute, "Specific attribute")->required();
    set_specific->add_option("--value", ss_value, "JSON value")->required();
    set_specific->callback([&] {
        action = [&] {
            open_project()->set_specific_value(ss_object, ss_attribute, dw::parse_json(ss_value));
            print({{"object", ss_object}, {"attribute", ss_attribute}, {"value", dw::parse_json(ss_value)}});
        };
    });

    // mart commands
    std::string mart, m_class, m_name, m_attribute, m_dimension, m_formula, m_anchor, m_target, m_predicate,
        m_parent, m_membership, m_add, m_remove;
    std::vector<std::string> m_edges, m_attributes;
    bool m_all = false, m_flag = false;

    auto* detect_fact = app.add_subcommand("mart-detect-fact", "Rank representative classes and flag the best");
    detect_fact->add_option("--mart", mart, "Mart name")->required();
    detect_fact->callback([&] {
        action = [&] { print(open_project()->apply({{"op", "detect_fact"}, {"mart", mart}})); };
    });

    auto* project_fact = app.add_subcommand("mart-project-fact", "Project the fact class");
    project_fact->add_option("--mart", mart, "Mart name")->required();
    project_fact->add_option("--class", m_class, "Warehouse class")->required();
    project_fact->add_option("--name", m_name, "Fact name");
    project_fact->add_flag("--flag", m_flag, "Flag the class representative first");
    project_fact->callback([&] {
        action = [&] {
            auto p = open_project();
            if (m_flag)
                p->apply({{"op", "flag_representative"}, {"mart", mart}, {"class", m_class}});
            print(p->apply({{"op", "project_fact"}, {"mart", mart}, {"class", m_class}, {"name", m_name}}));
        };
    });

    auto* project_dim = app.add_subcommand("mart-project-dim", "Project a dimension");
    project_dim->add_option("--mart", mart, "Mart name")->required();
    project_dim->add_option("--class", m_class, "Dependent warehouse class");
    project_dim->add_option("--attribute", m_attribute, "Date or address attribute");
    project_dim->add_option("--name", m_name, "Dimension name");
    project_dim->add_flag("--all", m_all, "Project every dependent class");
    project_dim->callback([&] {
        action = [&] {
            json op;
            if (m_all) {
                op = {{"op", "project_all_dependents"}, {"mart", mart}};
            } else {
                if (m_class.empty())
                    throw Error(ErrorKind::InvalidArgument, "mart-project-dim needs --class or --all");
                op = {{"op", "project_dimension"}, {"mart", mart}, {"class", m_class}};
                if (!m_attribute.empty())
                    op["attribute"] = m_attribute;
                if (!m_name.empty())
                    op["name"] = m_name;
            }
            print(open_project()->apply(op));
        };
    });

    auto* specialize = app.add_subcommand("mart-specialize", "Specialize a dimension");
    specialize->add_option("--mart", mart, "Mart name")->required();
    specialize->add_option("--parent", m_parent, "Parent dimension")->required();
    specialize->add_option("--name", m_name, "Specialization name")->required();
    specialize->add_option("--class", m_class, "Warehouse subclass");
    specialize->add_option("--attributes", m_attributes, "Extra attributes")->delimiter(',');
    specialize->add_option("--membership", m_membership, "Boolean membership formula");
    specialize->callback([&] {
        action = [&] {
            json op = {{"op", "specialize_dimension"}, {"mart", mart},       {"parent", m_parent},
                       {"name", m_name},                {"attributes", m_attributes}};
            if (!m_class.empty())
                op["class"] = m_class;
            if (!m_membership.empty())
                op["membership"] = m_membership;
            print(open_project()->apply(op));
        };
    });

    auto* infer = app.add_subcommand("mart-infer-hierarchy", "Infer a dimension hierarchy from loaded data");
    infer->add_option("--mart", mart, "Mart name")->required();
    infer->add_option("--dimension", m_dimension, "Dimension")->required();
    infer->callback([&] {
        action = [&] {
            print(open_project()->apply({{"op", "infer_hierarchy"}, {"mart", mart}, {"dimension", m_dimension}}));
        };
    });

    auto* hierarchy = app.add_subcommand("mart-hierarchy", "Set, extend or trim a dimension hierarchy");
    hierarchy->add_option("--mart", mart, "Mart name")->required();
    hierarchy->add_option("--dimension", m_dimension, "Dimension")->required();
    hierarchy->add_option("--edge", m_edges, "Edge from:to (replaces the hierarchy)");
    hierarchy->add_option("--add", m_add, "Edge from:to to add");
    hierarchy->add_option("--remove", m_remove, "Edge from:to to remove");
    hierarchy->callback([&] {
        action = [&] {
            json op = {{"mart", mart}, {"dimension", m_dimension}};
            if (!m_add.empty() || !m_remove.empty()) {
                bool add = !m_add.empty();
                auto [from, to] = split_pair(add ? m_add : m_remove, ':', "edge");
                op["op"] = add ? "add_hierarchy_edge" : "remove_hierarchy_edge";
                op["from"] = from;
                op["to"] = to;
            } else {
                json edges = json::array();
                for (const auto& e : m_edges) {
                    auto [from, to] = split_pair(e, ':', "edge");
                    edges.push_back({from, to});
                }
                op["op"] = "set_hierarchy";
                op["edges"] = edges;
            }
            print(open_project()->apply(op));
        };
    });

    auto* add_measure = app.add_subcommand("mart-add-measure", "Add a calculated measure to the fact");
    add_measure->add_option("--mart", mart, "Mart name")->required();
    add_measure->add_option("--name", m_name, "Measure name")->required();
    add_measure->add_option("--formula", m_formula, "Formula")->required();
    add_measure->add_option("--anchor", m_anchor, "Anchor class");
    add_measure->callback([&] {
        action = [&] {
            json op = {{"op", "add_measure"}, {"mart", mart}, {"name", m_name}, {"formula", m_formula}};
            if (!m_anchor.empty())
                op["anchor"] = m_anchor;
            print(open_project()->apply(op));
        };
    });

    auto* add_parameter = app.add_subcommand("mart-add-parameter", "Add a calculated parameter to a dimension");
    add_parameter->add_option("--mart", mart, "Mart name")->required();
    add_parameter->add_option("--dimension", m_dimension, "Dimension")->required();
    add_parameter->add_option("--name", m_name, "Parameter name")->required();
    add_parameter->add_option("--formula", m_formula, "Formula")->required();
    add_parameter->add_option("--anchor", m_anchor, "Anchor class");
    add_parameter->callback([&] {
        action = [&] {
            json op = {{"op", "add_parameter"}, {"mart", mart},           {"dimension", m_dimension},
                       {"name", m_name},        {"formula", m_formula}};
            if (!m_anchor.empty())
                op["anchor"] = m_anchor;
            print(open_project()->apply(op));
        };
    });

    auto* select = app.add_subcommand("mart-select", "Restrict the fact or a dimension by a predicate");
    select->add_option("--mart", mart, "Mart name")->required();
    select->add_option("--target", m_target, "Fact or dimension name")->required();
    select->add_option("--predicate", m_predicate, "Boolean formula; omit to clear");
    select->callback([&] {
        action = [&] {
            json pred = m_predicate.empty() ? json(nullptr) : json(m_predicate);
            print(open_project()->apply(
                {{"op", "select_objects"}, {"mart", mart}, {"target", m_target}, {"predicate", pred}}));
        };
    });

    std::string dep_from;
    auto* dependencies = app.add_subcommand("dependencies", "Classes dependent on a warehouse class");
    dependencies->add_option("--from", dep_from, "Warehouse class")->required();
    dependencies->callback([&] {
        action = [&] {
            auto s = open_project()->state();
            json deps = json::array();
            for (const auto& d : dw::transitive_dependencies(s->warehouse.schema(), dep_from))
                deps.push_back(dw::dependency_to_json(d));
            print({{"from", dep_from}, {"dependencies", deps}});
        };
    });

    // emit
    std::string emit_what, emit_mart, emit_output;
    auto* emit = app.add_subcommand("emit", "Emit structure or refresh code");
    emit->add_option("what", emit_what, "structure or refresh")->required()->check(CLI::IsMember({"structure", "refresh"}));
    emit->add_option("--mart", emit_mart, "Emit a mart structure instead of the warehouse");
    emit->add_option("--output", emit_output, "Output file (default stdout)");
    emit->callback([&] {
        action = [&] {
            auto target = dw::parse_target(opt.target);
            if (!target)
                throw Error(ErrorKind::InvalidArgument, "unknown target '" + opt.target + "'");
            auto s = open_project()->state();
            dw::EmissionPlan plan;
            if (emit_what == "refresh") {
                if (!emit_mart.empty())
                    throw Error(ErrorKind::InvalidArgument, "refresh code is emitted for the warehouse only");
                plan = dw::emit_refresh(s->warehouse, s->source, *target);
            } else if (!emit_mart.empty()) {
                const auto* m = s->find_mart(emit_mart);
                if (!m)
                    throw Error(ErrorKind::UnknownElement, "unknown mart '" + emit_mart + "'");
                plan = dw::emit_structure(m->definition, *target);
            } else {
                plan = dw::emit_structure(s->warehouse, *target);
            }
            write_output(emit_output, dw::render(plan));
        };
    });

    // serve
    std::string host = "127.0.0.1";
    auto* serve = app.add_subcommand("serve", "Start the HTTP/JSON service");
    serve->add_option("--host", host, "Bind address");
    serve->callback([&] {
        action = [&] {
            auto p = open_project();
            dw::Service service(*p);
            int port = service.bind(host, opt.port);
            if (port < 0)
                throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(opt.port));
            std::cout << json{{"listening", host}, {"port", port}}.dump() << std::endl;
            service.serve();
        };
    });

    // export
    std::string export_what, export_mart, export_dimension, export_output;
    auto* exp = app.add_subcommand("export", "Export history, runs or mart data");
    exp->add_option("what", export_what, "history, runs or mart")->required()->check(CLI::IsMember({"history", "runs", "mart"}));
    exp->add_option("--mart", export_mart, "Mart name (export mart)");
    exp->add_option("--dimension", export_dimension, "Dimension to export instead of the fact");
    exp->add_option("--output", export_output, "Output file (default stdout)");
    exp->callback([&] {
        action = [&] {
            auto p = open_project();
            std::string text;
            if (export_what == "history") {
                text = dw::export_history(*p->store().snapshot());
            } else if (export_what == "runs") {
                text = dw::export_runs(*p->store().snapshot());
            } else {
                if (export_mart.empty())
                    throw Error(ErrorKind::InvalidArgument, "export mart needs --mart");
                auto data = p->load_mart_data(export_mart);
                text = export_dimension.empty() ? dw::export_fact(data) : dw::export_dimension(data, export_dimension);
            }
            write_output(export_output, text);
        };
    });

    // apply / show
    std::string apply_json;
    std::int64_t expected_version = -1;
    auto* apply = app.add_subcommand("apply", "Apply one raw operation");
    apply->add_option("--json", apply_json, "Operation object")->required();
    apply->add_option("--expected-version", expected_version, "Reject unless the project is at this version");
    apply->callback([&] {
        action = [&] {
            std::optional<std::int64_t> expected;
            if (expected_version >= 0)
                expected = expected_version;
            print(open_project()->apply(dw::parse_json(apply_json), expected));
        };
    });

    std::string show_what = "project";
    auto* show = app.add_subcommand("show", "Print the resolved project");
    show->add_option("what", show_what, "project, source, warehouse or runs")
        ->check(CLI::IsMember({"project", "source", "warehouse", "runs"}));
    show->callback([&] {
        action = [&] {
            auto p = open_project();
            auto s = p->state();
            if (show_what == "source")
                print(dw::schema_to_json(s->source));
            else if (show_what == "warehouse")
                print(dw::warehouse_to_json(s->warehouse));
            else if (show_what == "runs") {
                json runs = json::array();
                for (const auto& r : p->store().runs())
                    runs.push_back(dw::run_to_json(r));
                print(runs);
            } else
                print(dw::project_to_json(*s));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (action)
            action();
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"kind", dw::to_string(e.kind())}, {"message", e.what()}}.dump() << "\n";
    } catch (const std::exception& e) {
        std::cerr << json{{"kind", "internal"}, {"message", e.what()}}.dump() << "\n";
    }
    return 1;
}
