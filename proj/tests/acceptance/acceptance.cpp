// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include "../support/fixtures.hpp"
#include "../support/generators.hpp"
#include "../support/oracles.hpp"

#include "dw/codegen.hpp"
#include "dw/error.hpp"
#include "dw/expression.hpp"
#include "dw/mart.hpp"
#include "dw/project.hpp"
#include "dw/temporal.hpp"
#include "dw/warehouse.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace dwtest;
using dw::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    int failures = 0;

    void fail(const std::string& what)
    {
        pass = false;
        if (failures++ < 5)
            detail += (detail.empty() ? "" : "; ") + what;
    }
};

std::string kind_name(dw::ErrorKind k)
{
    return std::string(dw::to_string(k));
}

// ---------------------------------------------------------------------------------------
// 1. Type closure

Outcome type_closure()
{
    Outcome out;
    int checks = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed);
        SchemaShape shape;
        shape.max_classes = 12;
        shape.tuple_attributes = true;
        auto source = random_schema(rng, shape);
        dw::WarehouseDef wh;
        int renames = 0;
        int steps = static_cast<int>(rng.range(1, 15));
        for (int s = 0; s < steps; ++s) {
            double r = rng.range(0, 99) / 100.0;
            if (r < 0.75 || wh.classes.empty()) {
                auto cls = rng.pick(source.classes).name;
                auto once = dw::project_class(wh, source, cls);
                auto twice = dw::project_class(once, source, cls);
                if (!(once == twice))
                    out.fail("seed " + std::to_string(seed) + ": projecting " + cls + " twice differs from once");
                wh = once;
            } else if (r < 0.9) {
                auto victim = rng.pick(wh.classes);
                bool referenced = false;
                for (const auto& other : wh.classes) {
                    if (other.name == victim.name)
                        continue;
                    for (const auto& l : source.links)
                        if (l.source == other.source_class && l.target == victim.source_class &&
                            l.kind != dw::LinkKind::Association)
                            referenced = true;
                }
                try {
                    wh = dw::delete_class(wh, victim.name);
                    if (referenced)
                        out.fail("seed " + std::to_string(seed) + ": deleting required class " + victim.name +
                                 " was accepted");
                } catch (const dw::Error& e) {
                    if (!referenced || e.kind() != dw::ErrorKind::ClosureViolation)
                        out.fail("seed " + std::to_string(seed) + ": delete " + victim.name + " rejected with " +
                                 kind_name(e.kind()));
                }
            } else {
                auto victim = rng.pick(wh.classes).name;
                wh = dw::rename_class(wh, victim, "R" + std::to_string(renames++));
            }
            for (const auto& v : closure_violations(wh, source))
                out.fail("seed " + std::to_string(seed) + ": " + v);
            try {
                dw::check_closure(wh, source);
            } catch (const dw::Error& e) {
                out.fail("seed " + std::to_string(seed) + ": check_closure: " + e.what());
            }
            ++checks;
        }
    }
    out.detail = out.pass ? std::to_string(checks) + " warehouse states over 200 schemas, zero violations"
                          : out.detail;
    return out;
}

// ---------------------------------------------------------------------------------------
// 2. Historization replay

/// Run indices (0-based) at which an object's source content is new or differs from the
/// previous run that contained it.
std::map<std::string, std::vector<int>> change_log(const std::vector<json>& runs)
{
    std::map<std::string, std::vector<int>> starts;
    std::map<std::string, std::string> last;
    for (int r = 0; r < static_cast<int>(runs.size()); ++r)
        for (const auto& o : runs[r]["objects"]) {
            std::string id = o["id"];
            std::string content = json{{"values", o["values"]}, {"links", o.value("links", json::object())}}.dump();
            auto it = last.find(id);
            if (it == last.end() || it->second != content)
                starts[id].push_back(r);
            last[id] = content;
        }
    return starts;
}

Outcome historization_replay()
{
    Outcome out;
    auto source = fixture_schema();
    dw::WarehouseDef wh = fixture_warehouse(source);
    for (const char* c : {"Personnes", "Actes", "Cabinets"})
        wh = dw::mark_class_historized(wh, c);

    std::vector<json> docs;
    for (int i = 1; i <= 5; ++i)
        docs.push_back(json::parse(fixture_run(i)));
    auto expected = change_log(docs);

    auto store = fixture_store(wh, source, 5);
    auto state = store->snapshot();
    std::size_t total_states = 0;
    for (const auto& [id, starts] : expected) {
        auto it = state->objects.find(id);
        if (it == state->objects.end()) {
            out.fail("object " + id + " missing");
            continue;
        }
        const auto& states = it->second.states;
        total_states += states.size();
        if (states.size() != starts.size()) {
            out.fail(id + ": " + std::to_string(states.size()) + " states, change log predicts " +
                     std::to_string(starts.size()));
            continue;
        }
        for (std::size_t k = 0; k < states.size(); ++k) {
            if (states[k].start != fixture_date(starts[k] + 1))
                out.fail(id + ": state " + std::to_string(k) + " starts at " + states[k].start.to_string());
            if (k + 1 < states.size()) {
                if (!states[k].end || *states[k].end != states[k + 1].start)
                    out.fail(id + ": gap or overlap after state " + std::to_string(k));
            } else if (states[k].end) {
                out.fail(id + ": latest state is closed");
            }
        }
    }
    if (expected.size() != state->objects.size())
        out.fail("store holds " + std::to_string(state->objects.size()) + " objects, fixture has " +
                 std::to_string(expected.size()));

    // Same snapshots again: no new state, no change counted.
    auto again = dw::load_instances(source, fixture_run(5), fixture_date(6), state->known_sources);
    auto run = store->run_refresh(wh, source, again, fixture_date(6));
    for (const auto& [cls, c] : run.counters)
        if (c.changed != 0 || c.inserted != 0)
            out.fail("identical rerun counted changes in " + cls);
    std::size_t after = 0;
    for (const auto& [id, o] : store->snapshot()->objects)
        after += o.states.size();
    if (after != total_states)
        out.fail("identical rerun added " + std::to_string(after - total_states) + " states");
    if (out.pass)
        out.detail = std::to_string(expected.size()) + " objects, " + std::to_string(total_states) +
                     " states as predicted; identical rerun added none";
    return out;
}

// ---------------------------------------------------------------------------------------
// 3. Environment algebra

struct EnvModel {
    std::string name;
    std::vector<std::string> classes;
    std::vector<std::string> links;
};

std::optional<dw::ErrorKind> predict_create(const dw::WarehouseDef& wh, const std::vector<EnvModel>& model,
                                            const EnvModel& req)
{
    if (req.classes.empty())
        return dw::ErrorKind::InvalidArgument;
    for (const auto& e : model)
        if (e.name == req.name)
            return dw::ErrorKind::DuplicateName;
    std::set<std::string> members(req.classes.begin(), req.classes.end());
    for (const auto& c : req.classes)
        if (!wh.find_class(c))
            return dw::ErrorKind::UnknownElement;
    for (const auto& ln : req.links) {
        const dw::Link* link = nullptr;
        for (const auto& l : wh.links)
            if (l.name == ln)
                link = &l;
        if (!link)
            return dw::ErrorKind::UnknownElement;
        if (!members.contains(link->source) || !members.contains(link->target))
            return dw::ErrorKind::EndpointOutsideEnvironment;
    }
    for (const auto& e : model)
        for (const auto& c : e.classes)
            if (members.contains(c))
                return dw::ErrorKind::DisjointnessViolation;
    return std::nullopt;
}

Outcome environment_algebra()
{
    Outcome out;
    int rejected = 0, accepted = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        Rng rng(seed * 7919);
        SchemaShape shape;
        shape.min_classes = 2;
        shape.max_classes = 8;
        shape.association = 0.2;
        auto source = random_schema(rng, shape);
        auto wh = fixture_warehouse(source);
        std::vector<std::string> class_names, link_names;
        for (const auto& c : wh.classes)
            class_names.push_back(c.name);
        for (const auto& l : wh.links)
            link_names.push_back(l.name);
        std::vector<EnvModel> model;
        int steps = static_cast<int>(rng.range(1, 12));
        for (int s = 0; s < steps; ++s) {
            std::string name = "E" + std::to_string(rng.range(0, 4));
            std::optional<dw::ErrorKind> expected;
            std::optional<dw::ErrorKind> got;
            std::string message;
            if (rng.chance(0.3)) {
                bool exists = false;
                for (const auto& e : model)
                    exists = exists || e.name == name;
                if (!exists)
                    expected = dw::ErrorKind::UnknownElement;
                try {
                    wh = dw::delete_environment(wh, name);
                } catch (const dw::Error& e) {
                    got = e.kind();
                }
                if (!expected)
                    std::erase_if(model, [&](const EnvModel& e) { return e.name == name; });
            } else {
                EnvModel req{name, rng.subset(class_names, 0.35), {}};
                if (rng.chance(0.05))
                    req.classes.push_back("Nowhere");
                std::set<std::string> members(req.classes.begin(), req.classes.end());
                for (const auto& l : wh.links) {
                    bool internal = members.contains(l.source) && members.contains(l.target);
                    if ((internal && rng.chance(0.7)) || (!internal && rng.chance(0.08)))
                        req.links.push_back(l.name);
                }
                if (rng.chance(0.05))
                    req.links.push_back("NoLink");
                expected = predict_create(wh, model, req);
                try {
                    wh = dw::create_environment(wh, req.name, req.classes, req.links);
                } catch (const dw::Error& e) {
                    got = e.kind();
                    message = e.what();
                }
                if (!expected)
                    model.push_back(req);
                if (got == dw::ErrorKind::DisjointnessViolation &&
                    message.find("disjointness violation") == std::string::npos)
                    out.fail("disjointness diagnostic lacks its name: " + message);
            }
            if (expected != got)
                out.fail("seed " + std::to_string(seed) + " step " + std::to_string(s) + ": expected " +
                         (expected ? kind_name(*expected) : "success") + ", got " + (got ? kind_name(*got) : "success"));
            (got ? rejected : accepted)++;

            // Invariants over the engine state.
            std::set<std::string> owned;
            for (const auto& e : wh.environments) {
                std::set<std::string> members(e.classes.begin(), e.classes.end());
                for (const auto& c : e.classes)
                    if (!owned.insert(c).second)
                        out.fail("seed " + std::to_string(seed) + ": class " + c + " in two environments");
                for (const auto& ln : e.links)
                    for (const auto& l : wh.links)
                        if (l.name == ln && (!members.contains(l.source) || !members.contains(l.target)))
                            out.fail("seed " + std::to_string(seed) + ": link " + ln + " leaves " + e.name);
            }
            if (wh.environments.size() != model.size())
                out.fail("seed " + std::to_string(seed) + ": environment count diverges from model");
        }
    }
    if (out.pass)
        out.detail = "500 sequences, " + std::to_string(accepted) + " accepted and " + std::to_string(rejected) +
                     " rejected requests, every diagnostic as predicted";
    return out;
}

// ---------------------------------------------------------------------------------------
// 4. Dependency closure

Outcome dependency_closure_oracle()
{
    Outcome out;
    int pairs = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed * 104729);
        SchemaShape shape;
        shape.max_classes = 10;
        auto g = random_schema(rng, shape);
        auto oracle = dependency_closure(g);
        for (const auto& c : g.classes) {
            std::set<std::string> got;
            for (const auto& d : dw::transitive_dependencies(g, c.name)) {
                got.insert(d.to);
                if (!dw::replay_witness(g, d))
                    out.fail("seed " + std::to_string(seed) + ": witness " + c.name + " => " + d.to + " does not replay");
                if ((d.chain.size() > 1) != (d.witness == dw::DependencyRule::Transitive))
                    out.fail("seed " + std::to_string(seed) + ": witness kind disagrees with chain length");
            }
            if (got != oracle[c.name])
                out.fail("seed " + std::to_string(seed) + ": closure of " + c.name + " differs from matrix oracle");
            pairs += static_cast<int>(got.size());
        }
    }

    auto source = fixture_schema();
    auto wschema = fixture_warehouse(source).schema();
    bool chain_ok = false;
    for (const auto& d : dw::transitive_dependencies(wschema, "Actes"))
        if (d.to == "Cabinets")
            chain_ok = d.witness == dw::DependencyRule::Transitive && d.chain.size() == 2 &&
                       d.chain[0].from == "Actes" && d.chain[0].to == "Praticiens" &&
                       d.chain[0].link == "Prescrit_par" && d.chain[0].rule == dw::DependencyRule::Association &&
                       d.chain[1].from == "Praticiens" && d.chain[1].to == "Cabinets" &&
                       d.chain[1].link == "Exerce_dans" && d.chain[1].rule == dw::DependencyRule::Association;
    if (!chain_ok)
        out.fail("Actes => Praticiens => Cabinets chain not reproduced");
    if (out.pass)
        out.detail = "100 schemas, " + std::to_string(pairs) +
                     " dependent pairs equal the Warshall closure; Actes=>Praticiens=>Cabinets via Prescrit_par, Exerce_dans";
    return out;
}

// ---------------------------------------------------------------------------------------
// 5. FD / hierarchy

std::set<std::pair<std::string, std::string>> edge_set(const dw::HierarchyGraph& h)
{
    return {h.edges.begin(), h.edges.end()};
}

/// Actes on every day of 1998, all prescribed by P1 for B1.
std::string calendar_instances()
{
    json objects = json::array();
    objects.push_back({{"id", "P1"},
                       {"class", "Praticiens"},
                       {"values", {{"nom", "Dupont"}, {"prenom", "Jean"}, {"date_naissance", "1955-04-12"},
                                   {"specialite_prat", "generaliste"}}},
                       {"links", {{"Exerce_dans", {"C1"}}}}});
    objects.push_back({{"id", "B1"},
                       {"class", "Beneficiaires"},
                       {"values", {{"nom", "Durand"}, {"prenom", "Paul"}, {"date_naissance", "1948-01-20"},
                                   {"num_secu", "148013112345"}, {"ville", "Toulouse"}}},
                       {"links", json::object()}});
    objects.push_back({{"id", "C1"},
                       {"class", "Cabinets"},
                       {"values", {{"Ville", "Toulouse"}, {"Département", "31"}, {"date_creation", "1980-05-01"},
                                   {"adresse", {{"rue", "12 rue Alsace"}, {"ville", "Toulouse"}}}}},
                       {"links", json::object()}});
    auto first = dw::Date::from_ymd(1998, 1, 1);
    for (int i = 0; i < 365; ++i) {
        dw::Date d{first.days + i};
        objects.push_back({{"id", "D" + std::to_string(1000 + i)},
                           {"class", "Actes"},
                           {"values", {{"Quantité", 1}, {"Prix Unitaire", "10"}, {"Taux Remb", "1"},
                                       {"Date_exec", d.to_string()}, {"Qté_acte", 1}, {"Type", "visite"}}},
                           {"links", {{"Prescrit_par", {"P1"}}, {"Recu_par", {"B1"}}}}});
    }
    return json{{"objects", objects}}.dump();
}

Outcome fd_hierarchy()
{
    Outcome out;
    int edges = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed * 15485863);
        std::vector<std::string> columns;
        auto rows = random_relation(rng, columns, 6, 200);
        auto got = edge_set(dw::infer_hierarchy(columns, rows));
        auto want = hierarchy_oracle(columns, rows);
        if (got != want)
            out.fail("seed " + std::to_string(seed) + ": inferred edges differ from exhaustive scan");
        edges += static_cast<int>(want.size());
    }

    // Pure calendar relation built by the oracle calendar.
    std::vector<dw::Row> rows;
    auto first = dw::Date::from_ymd(1998, 1, 1);
    for (int i = 0; i < 365; ++i) {
        dw::Date d{first.days + i};
        auto ymd = civil(d);
        rows.push_back({{"day", dw::Value(d)},
                        {"month", dw::Value(ymd.month)},
                        {"quarter", dw::Value(quarter_of(ymd.month))},
                        {"year", dw::Value(ymd.year)}});
    }
    auto calendar = edge_set(dw::infer_hierarchy({"day", "month", "quarter", "year"}, rows));
    std::set<std::pair<std::string, std::string>> chain{{"day", "month"}, {"month", "quarter"}, {"quarter", "year"}};
    if (calendar != chain)
        out.fail("calendar relation does not reduce to day=>month=>quarter=>year");

    // Same chain through a time dimension loaded from 365 executions.
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::Store store;
    auto snaps = dw::load_instances(source, calendar_instances(), fixture_date(1));
    store.run_refresh(wh, source, snaps, fixture_date(1));
    dw::MartDef mart;
    mart.name = "Calendrier";
    mart = dw::flag_representative(mart, wh, "Actes");
    mart = dw::project_fact(mart, wh, "Actes", "Prestations");
    mart = dw::project_dimension_from_attribute(mart, wh, "Actes", "Date_exec", "Execution");
    auto data = dw::load_mart(mart, wh, *store.snapshot());
    std::vector<std::string> columns;
    auto sample = dw::dimension_sample(mart, data, "Execution", &columns);
    if (sample.size() != 365)
        out.fail("time dimension holds " + std::to_string(sample.size()) + " rows");
    for (const auto& row : sample) {
        auto ymd = civil(row.at("Date_exec").as<dw::Date>());
        if (row.at("Mois") != dw::Value(ymd.month) || row.at("Trimestre") != dw::Value(quarter_of(ymd.month)) ||
            row.at("Annee") != dw::Value(ymd.year) ||
            row.at("Libelle_jour") != dw::Value(weekday_name(weekday_sakamoto(ymd.year, ymd.month, ymd.day))))
            out.fail("calendar parameters of " + row.at("Date_exec").to_display() + " disagree with the oracle");
    }
    auto inferred = edge_set(dw::infer_hierarchy(columns, sample));
    if (inferred != hierarchy_oracle(columns, sample))
        out.fail("time dimension edges differ from exhaustive scan");
    for (const auto& e : std::set<std::pair<std::string, std::string>>{
             {"Date_exec", "Mois"}, {"Mois", "Trimestre"}, {"Trimestre", "Annee"}})
        if (!inferred.contains(e))
            out.fail("time dimension lacks " + e.first + " => " + e.second);
    if (out.pass)
        out.detail = "100 relations (" + std::to_string(edges) +
                     " edges) equal the exhaustive scan; 365 dates give day=>month=>quarter=>year";
    return out;
}

// ---------------------------------------------------------------------------------------
// 6. Expressions

Outcome expressions()
{
    Outcome out;
    int values = 0, errors = 0;
    Rng rng(20240601);
    for (int i = 0; i < 1000; ++i) {
        auto expr = random_tree(rng, 4);
        auto binding = random_binding(rng);
        dw::ExpressionTree tree(expr);
        auto want = interpret(expr, binding);
        std::optional<dw::Value> got;
        std::optional<dw::ErrorKind> got_error;
        try {
            got = dw::evaluate(tree, binding);
        } catch (const dw::Error& e) {
            got_error = e.kind();
        }
        if (want.error || got_error) {
            if (want.error != got_error)
                out.fail("tree " + std::to_string(i) + " " + tree.text() + ": oracle " +
                         (want.error ? kind_name(*want.error) : describe(*want.value)) + ", engine " +
                         (got_error ? kind_name(*got_error) : got->to_display()));
            ++errors;
            continue;
        }
        if (!same_value(*want.value, from_engine(*got)))
            out.fail("tree " + std::to_string(i) + " " + tree.text() + ": oracle " + describe(*want.value) +
                     ", engine " + got->to_display());
        ++values;
    }

    // Montant_remb on literal operands: (2 x 10) x 0.5.
    auto formula = dw::parse_formula(R"(("Actes.Quantité" * "Actes.Prix Unitaire") * "Actes.Taux Remb")");
    dw::Binding b{{"Actes.Quantité", {dw::Value(2)}},
                  {"Actes.Prix Unitaire", {dw::Value(*dw::Decimal::parse("10"))}},
                  {"Actes.Taux Remb", {dw::Value(*dw::Decimal::parse("0.5"))}}};
    if (dw::evaluate(formula, b) != dw::Value(*dw::Decimal::parse("10")))
        out.fail("Montant_remb(2, 10, 0.5) is not exactly 10");

    // Montant_remb as a mart measure over the first fixture run.
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto store = fixture_store(wh, source, 1);
    dw::MartDef mart;
    mart.name = "Prestations";
    mart = dw::flag_representative(mart, wh, "Actes");
    mart = dw::project_fact(mart, wh, "Actes", "Prestations");
    mart = dw::add_measure(mart, wh, "Montant_remb", formula);
    auto data = dw::load_mart(mart, wh, *store->snapshot());
    // Hand arithmetic: 2 x 23 x 0.65, 3 x 17.5 x 1, 1 x 42.30 x 0.7.
    std::map<std::string, std::string> hand{{"A01", "29.9"}, {"A02", "52.5"}, {"A03", "29.61"}};
    if (data.facts.size() != hand.size())
        out.fail("fact holds " + std::to_string(data.facts.size()) + " rows");
    for (const auto& f : data.facts) {
        auto it = hand.find(f.id);
        if (it == hand.end() || f.measures.at("Montant_remb") != dw::Value(*dw::Decimal::parse(it->second)))
            out.fail("Montant_remb of " + f.id + " = " + f.measures.at("Montant_remb").to_display());
    }
    if (out.pass)
        out.detail = "1000 trees agree (" + std::to_string(values) + " values, " + std::to_string(errors) +
                     " identical errors); Montant_remb = 29.9, 52.5, 29.61 exactly";
    return out;
}

// ---------------------------------------------------------------------------------------
// 7. Codegen

dw::WarehouseDef codegen_warehouse(const dw::SchemaGraph& source)
{
    auto wh = fixture_warehouse(source);
    wh = dw::mark_class_historized(wh, "Beneficiaires");
    wh = dw::mark_class_historized(wh, "Actes");
    wh = dw::mark_attribute_historized(wh, "Praticiens", "D_specialite_prat");
    wh = dw::add_specific_attribute(wh, "Personnes", "poids", dw::AttributeType::simple(dw::TypeKind::Decimal));
    wh = dw::add_calculated_attribute(wh, source, "Actes", "Montant",
                                      dw::parse_formula(R"("Actes.Quantité" * "Actes.Prix Unitaire")"));
    return wh;
}

Outcome codegen()
{
    Outcome out;
    auto source = fixture_schema();
    std::vector<std::string> first, second;
    for (auto* sink : {&first, &second}) {
        auto wh = codegen_warehouse(source);
        dw::MartDef mart;
        mart.name = "Prestations";
        mart = dw::flag_representative(mart, wh, "Actes");
        mart = dw::project_fact(mart, wh, "Actes", "Prestations");
        mart = dw::project_dimension_from_attribute(mart, wh, "Actes", "Date_exec", "Execution");
        mart = dw::project_dimension(mart, wh, "Cabinets");
        for (auto target : {dw::Target::NeutralPlan, dw::Target::Sql}) {
            sink->push_back(dw::render(dw::emit_structure(wh, target)));
            sink->push_back(dw::render(dw::emit_refresh(wh, source, target)));
            sink->push_back(dw::render(dw::emit_structure(mart, target)));
        }
    }
    if (first != second)
        out.fail("plans differ between two emissions");
    for (const auto& text : first)
        if (text.empty())
            out.fail("empty plan");

    auto wh = codegen_warehouse(source);
    auto store = fixture_store(wh, source, 2);
    dw::PlanExecutor executor(dw::emit_refresh(wh, source, dw::Target::NeutralPlan), source);
    dw::KnownObjects known;
    for (int i = 1; i <= 2; ++i) {
        auto snaps = dw::load_instances(source, fixture_run(i), fixture_date(i), known);
        for (const auto& s : snaps)
            known[s.id] = s.class_name;
        executor.run(snaps, fixture_date(i));
    }
    auto native = dw::export_history(*store->snapshot());
    auto executed = executor.history_jsonl();
    if (native != executed)
        out.fail("executor history differs from native history (" + std::to_string(executed.size()) + " vs " +
                 std::to_string(native.size()) + " bytes)");
    if (executor.runs() != store->runs())
        out.fail("executor run log differs from native run log");
    if (out.pass)
        out.detail = "6 plans byte-identical across emissions; executed neutral plan history = native (" +
                     std::to_string(native.size()) + " bytes)";
    return out;
}

// ---------------------------------------------------------------------------------------
// 8. Project replay

Outcome project_replay()
{
    Outcome out;
    TempDir dir("acceptance");
    auto schema_path = dir.path() / "assurance_maladie.json";
    std::filesystem::copy_file(fixture_dir() / "assurance_maladie.json", schema_path);
    auto file = dir.path() / "project.json";

    std::shared_ptr<const dw::ProjectState> before;
    std::string before_json;
    std::string before_fact;
    {
        auto p = dw::Project::create(file, schema_path, {});
        for (const auto& op : fixture_warehouse_ops())
            p->apply(op);
        for (const auto& op : fixture_mart_ops())
            p->apply(op);
        for (int i = 1; i <= 2; ++i)
            p->refresh(fixture_run(i), fixture_date(i));
        p->apply({{"op", "infer_hierarchy"}, {"mart", "Prestations"}, {"dimension", "Cabinets"}});
        before = p->state();
        before_json = dw::project_to_json(*before).dump();
        before_fact = dw::export_fact(p->load_mart_data("Prestations"));
    }

    auto reopened = dw::Project::open(file);
    auto after = reopened->state();
    if (!(after->warehouse == before->warehouse))
        out.fail("reloaded warehouse differs");
    if (after->marts.size() != before->marts.size())
        out.fail("reloaded mart count differs");
    for (std::size_t i = 0; i < std::min(after->marts.size(), before->marts.size()); ++i)
        if (!(after->marts[i].definition == before->marts[i].definition) ||
            after->marts[i].operations != before->marts[i].operations)
            out.fail("reloaded mart " + before->marts[i].name + " differs");
    if (dw::project_to_json(*after).dump() != before_json)
        out.fail("project file does not round-trip");

    dw::ProjectState base = *after;
    base.version = 0;
    base.warehouse = {};
    base.warehouse_operations.clear();
    base.marts.clear();
    std::vector<std::pair<std::string, std::vector<json>>> mart_ops;
    for (const auto& m : after->marts)
        mart_ops.emplace_back(m.name, m.operations);
    auto replayed = dw::replay(base, after->warehouse_operations, mart_ops);
    if (!(replayed.warehouse == before->warehouse))
        out.fail("replayed warehouse differs");
    const auto* m = replayed.find_mart("Prestations");
    if (!m || !before->find_mart("Prestations") || !(m->definition == before->find_mart("Prestations")->definition))
        out.fail("replayed mart differs");
    if (m) {
        const auto& def = m->definition;
        if (!def.fact || def.fact->name != "Prestations")
            out.fail("fact Prestations missing");
        if (!def.find_dimension("Execution") || !def.find_dimension("Cabinets"))
            out.fail("dimensions Execution and Cabinets missing");
    }
    if (dw::export_fact(reopened->load_mart_data("Prestations")) != before_fact)
        out.fail("reloaded mart data differs");
    if (out.pass)
        out.detail = "reload and replay reproduce warehouse and mart (fact Prestations, dimensions Execution, Cabinets)";
    return out;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"type closure", type_closure},
        {"historization replay", historization_replay},
        {"environment algebra", environment_algebra},
        {"dependency closure", dependency_closure_oracle},
        {"FD/hierarchy", fd_hierarchy},
        {"expression equivalence", expressions},
        {"codegen determinism and executability", codegen},
        {"project replay", project_replay},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        auto started = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("uncaught: ") + e.what();
        }
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
                  << " [" << ms.count() << " ms]" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
