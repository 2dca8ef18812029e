#include "doctest.h"

#include "support/fixtures.hpp"

#include "dw/error.hpp"
#include "dw/project.hpp"

#include <fstream>
#include <latch>
#include <thread>

using namespace dwtest;
using dw::ErrorKind;
using dw::json;

namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const dw::Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::IoError;
}

// A project over a private copy of the fixture schema, so tests may edit the source.
struct Workspace {
    TempDir dir{"project"};
    fs::path source = dir.path() / "schema.json";
    fs::path file = dir.path() / "project.json";

    Workspace() { fs::copy_file(fixture_dir() / "assurance_maladie.json", source); }

    std::unique_ptr<dw::Project> create() { return dw::Project::create(file, source, {}); }

    json saved() const { return json::parse(read_file(file)); }
};

void apply_all(dw::Project& p, const std::vector<json>& ops)
{
    for (const auto& op : ops)
        p.apply(op);
}

} // namespace

TEST_CASE("operations are logged, versioned and persisted")
{
    Workspace ws;
    auto p = ws.create();
    CHECK(p->state()->version == 0);
    CHECK(p->state()->source_path == "schema.json");
    auto result = p->apply({{"op", "project_class"}, {"class", "Praticiens"}}, 0);
    CHECK(result["version"] == 1);
    CHECK(p->state()->warehouse.find_class("Personnes"));

    auto before = ws.saved();
    CHECK(kind_of([&] { p->apply({{"op", "project_class"}, {"class", "Actes"}}, 0); }) == ErrorKind::StaleVersion);
    CHECK(ws.saved() == before);
    CHECK(p->state()->version == 1);

    CHECK(kind_of([&] { p->apply({{"op", "frobnicate"}}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { p->apply(json::array()); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { p->apply({{"op", "project_fact"}, {"class", "Actes"}}); }) == ErrorKind::InvalidArgument);
    CHECK(p->state()->version == 1);

    p.reset();
    auto reopened = dw::Project::open(ws.file);
    CHECK(dw::project_to_json(*reopened->state()) == before);
}

TEST_CASE("logs replay to the stored definitions")
{
    Workspace ws;
    auto p = ws.create();
    apply_all(*p, fixture_warehouse_ops());
    apply_all(*p, fixture_mart_ops());
    auto state = p->state();
    CHECK(state->version == static_cast<std::int64_t>(fixture_warehouse_ops().size() + fixture_mart_ops().size()));
    REQUIRE(state->marts.size() == 1);
    CHECK(state->marts[0].operations == fixture_mart_ops());

    auto replayed = dw::replay(*state, state->warehouse_operations, {{"Prestations", fixture_mart_ops()}});
    CHECK(dw::project_to_json(replayed) == dw::project_to_json(*state));

    // A warehouse log cannot carry mart operations.
    auto mixed = state->warehouse_operations;
    mixed.push_back(fixture_mart_ops().front());
    CHECK(kind_of([&] { dw::replay(*state, mixed, {}); }) == ErrorKind::ReplayMismatch);
}

TEST_CASE("a changed source schema is detected on open")
{
    Workspace ws;
    apply_all(*ws.create(), fixture_warehouse_ops());
    {
        std::ofstream out(ws.source, std::ios::app);
        out << "\n";
    }
    try {
        dw::Project::open(ws.file);
        FAIL("opened");
    } catch (const dw::Error& e) {
        CHECK(e.kind() == ErrorKind::HashMismatch);
        CHECK(std::string(e.what()).find("hash mismatch") != std::string::npos);
    }
}

TEST_CASE("a tampered resolved definition fails replay")
{
    Workspace ws;
    apply_all(*ws.create(), fixture_warehouse_ops());
    auto doc = ws.saved();
    doc["warehouse"]["operations"].erase(doc["warehouse"]["operations"].size() - 1);
    doc["version"] = doc["version"].get<int>() - 1;
    std::ofstream(ws.file) << doc.dump(2);
    CHECK(kind_of([&] { dw::Project::open(ws.file); }) == ErrorKind::ReplayMismatch);

    doc = ws.saved();
    doc["format_version"] = 99;
    std::ofstream(ws.file) << doc.dump(2);
    CHECK(kind_of([&] { dw::Project::open(ws.file); }) == ErrorKind::ParseError);
}

TEST_CASE("data-dependent operations are logged in resolved form")
{
    Workspace ws;
    auto p = ws.create();
    apply_all(*p, fixture_warehouse_ops());

    // One run is not enough evidence to pick a fact.
    p->refresh(fixture_run(1), fixture_date(1));
    auto none = p->apply({{"op", "detect_fact"}, {"mart", "M"}});
    CHECK(none["recommended"].empty());
    CHECK(!none["diagnostics"].empty());
    CHECK(p->state()->version == 9);

    for (int i = 2; i <= 5; ++i)
        p->refresh(fixture_run(i), fixture_date(i));
    auto detected = p->apply({{"op", "detect_fact"}, {"mart", "M"}});
    REQUIRE(!detected["recommended"].empty());
    CHECK(detected["recommended"][0] == "Actes");
    p->apply({{"op", "project_fact"}, {"mart", "M"}, {"class", "Actes"}});
    p->apply({{"op", "project_dimension"}, {"mart", "M"}, {"class", "Cabinets"}});
    auto inferred = p->apply({{"op", "infer_hierarchy"}, {"mart", "M"}, {"dimension", "Cabinets"}});
    CHECK(inferred["sample_size"].get<int>() > 0);

    const auto& ops = p->state()->find_mart("M")->operations;
    REQUIRE(ops.size() == 4);
    CHECK(ops[0] == json{{"op", "flag_representative"}, {"mart", "M"}, {"class", "Actes"}});
    CHECK(ops[3]["op"] == "set_hierarchy");
    auto edges = ops[3]["edges"];
    CHECK(std::find(edges.begin(), edges.end(), json::array({"Ville", "Département"})) != edges.end());

    // Replay needs no data.
    auto state = dw::project_to_json(*p->state());
    p.reset();
    CHECK(dw::project_to_json(*dw::Project::open(ws.file)->state()) == state);
}

TEST_CASE("a second writer is refused while a refresh runs")
{
    Workspace ws;
    auto p = ws.create();
    apply_all(*p, fixture_warehouse_ops());
    std::latch inside(1), release(1);
    std::thread refresher([&] {
        bool first = true;
        p->refresh(fixture_run(1), fixture_date(1), [&](const dw::RefreshProgress&) {
            if (std::exchange(first, false)) {
                inside.count_down();
                release.wait();
            }
        });
    });
    inside.wait();
    CHECK(kind_of([&] { p->apply({{"op", "historize_class"}, {"class", "Beneficiaires"}}); }) == ErrorKind::Conflict);
    CHECK(kind_of([&] { p->refresh(fixture_run(2), fixture_date(2)); }) == ErrorKind::Conflict);
    release.count_down();
    refresher.join();
    CHECK(p->store().runs().size() == 1);
    CHECK_NOTHROW(p->apply({{"op", "historize_class"}, {"class", "Beneficiaires"}}));
}

TEST_CASE("specific values and mart data through the project")
{
    Workspace ws;
    auto p = ws.create();
    apply_all(*p, fixture_warehouse_ops());
    p->apply({{"op", "add_specific_attribute"}, {"class", "Personnes"}, {"name", "poids"}, {"type", "decimal"}});
    apply_all(*p, fixture_mart_ops());
    p->refresh(fixture_run(1), fixture_date(1));
    p->set_specific_value("B1", "S_poids", "72.5");
    CHECK(p->store().snapshot()->objects.at("B1").values.at("S_poids") == dw::Value(*dw::Decimal::parse("72.5")));
    CHECK(kind_of([&] { p->set_specific_value("B1", "S_nope", 1); }) == ErrorKind::UnknownAttribute);
    CHECK(kind_of([&] { p->set_specific_value("ZZ", "S_poids", 1); }) == ErrorKind::UnknownObject);

    auto data = p->load_mart_data("Prestations");
    CHECK(data.facts.size() == 3);
    CHECK(data.dimensions.count("Execution"));
    CHECK(data.dimensions.count("Cabinets"));
    CHECK(kind_of([&] { p->load_mart_data("Nope"); }) == ErrorKind::UnknownClass);
}
