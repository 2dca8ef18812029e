#include "doctest.h"

#include "support/fixtures.hpp"
#include "support/rng.hpp"

#include "dw/error.hpp"
#include "dw/temporal.hpp"

using namespace dwtest;
using dw::ErrorKind;
using dw::Value;

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

dw::ExtractionRun refresh(dw::Store& store, const dw::WarehouseDef& wh, const dw::SchemaGraph& source, int run,
                          dw::Timestamp date)
{
    auto snaps = dw::load_instances(source, fixture_run(run), date, store.snapshot()->known_sources);
    return store.run_refresh(wh, source, snaps, date);
}

} // namespace

TEST_CASE("historized specialty keeps one entry per distinct value")
{
    auto source = fixture_schema();
    auto wh = dw::mark_attribute_historized(fixture_warehouse(source), "Praticiens", "D_specialite_prat");
    auto store = fixture_store(wh, source, 5);
    const auto& p1 = store->snapshot()->objects.at("P1");
    const auto& entries = p1.attribute_history.at("D_specialite_prat");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].value == Value("generaliste"));
    CHECK(entries[0].date == fixture_date(1));
    CHECK(entries[1].value == Value("pediatre"));
    CHECK(entries[1].date == fixture_date(3));
    CHECK(entries[1].run == 3);
    CHECK(p1.states.empty());
    CHECK(store->snapshot()->objects.at("P2").attribute_history.at("D_specialite_prat").size() == 1);
}

TEST_CASE("specific attributes cannot be historized and survive refreshes")
{
    auto source = fixture_schema();
    auto wh = dw::add_specific_attribute(fixture_warehouse(source), "Personnes", "poids",
                                         dw::AttributeType::simple(dw::TypeKind::Decimal));
    CHECK(kind_of([&] { dw::mark_attribute_historized(wh, "Personnes", "S_poids"); }) == ErrorKind::SpecificAttribute);
    dw::Store store;
    refresh(store, wh, source, 1, fixture_date(1));
    auto weight = Value(*dw::Decimal::parse("72.5"));
    store.set_specific_value(wh, "B1", "S_poids", weight);
    CHECK(kind_of([&] { store.set_specific_value(wh, "B1", "D_ville", Value("X")); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { store.set_specific_value(wh, "B1", "S_poids", Value("lourd")); }) == ErrorKind::TypeMismatch);
    CHECK(kind_of([&] { store.set_specific_value(wh, "ZZ", "S_poids", weight); }) == ErrorKind::UnknownObject);
    refresh(store, wh, source, 2, fixture_date(2));
    CHECK(store.snapshot()->objects.at("B1").values.at("S_poids") == weight);
    CHECK(store.snapshot()->objects.at("B1").values.at("D_ville") == Value("Muret"));
}

TEST_CASE("overlapping environments are rejected")
{
    auto source = fixture_schema();
    auto wh = dw::create_environment(fixture_warehouse(source), "Soins", {"Actes", "Praticiens", "Beneficiaires"},
                                     {"Prescrit_par", "Recu_par"});
    try {
        dw::create_environment(wh, "Personnel", {"Praticiens"}, {});
        FAIL("overlap accepted");
    } catch (const dw::Error& e) {
        CHECK(e.kind() == ErrorKind::DisjointnessViolation);
        CHECK(std::string(e.what()).find("disjointness violation") != std::string::npos);
    }
    // Environment membership historizes at class level.
    auto store = fixture_store(wh, source, 5);
    CHECK(store->snapshot()->objects.at("B1").states.size() == 3);
    CHECK(store->snapshot()->objects.at("C1").states.empty());
}

TEST_CASE("a refresh without snapshots counts nothing")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::Store store;
    auto run = store.run_refresh(wh, source, {}, fixture_date(1));
    CHECK(run.sequence == 1);
    REQUIRE(run.counters.size() == wh.classes.size());
    for (const auto& [cls, c] : run.counters)
        CHECK(c == dw::ClassCounters{});
    CHECK(run.tombstones.empty());
    CHECK(store.snapshot()->objects.empty());
}

TEST_CASE("runs must move forward in time")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::Store store;
    refresh(store, wh, source, 1, fixture_date(2));
    CHECK(kind_of([&] { refresh(store, wh, source, 2, fixture_date(2)); }) == ErrorKind::OutOfOrderRun);
    CHECK(kind_of([&] { refresh(store, wh, source, 2, fixture_date(1)); }) == ErrorKind::OutOfOrderRun);
    CHECK(store.runs().size() == 1);
    CHECK_NOTHROW(refresh(store, wh, source, 2, fixture_date(3)));
}

TEST_CASE("counters and tombstones over the five runs")
{
    auto source = fixture_schema();
    auto wh = dw::mark_class_historized(fixture_warehouse(source), "Personnes");
    auto store = fixture_store(wh, source, 5);
    auto runs = store->runs();
    REQUIRE(runs.size() == 5);
    CHECK(runs[0].counters.at("Actes").inserted == 3);
    for (int i = 1; i < 5; ++i)
        CHECK(runs[i].counters.at("Actes").inserted == 3);
    CHECK(runs[1].counters.at("Beneficiaires").changed == 1);
    CHECK(runs[2].counters.at("Praticiens").changed == 1);
    REQUIRE(runs[3].tombstones.size() == 1);
    CHECK(runs[3].tombstones[0] == dw::Tombstone{"Beneficiaires", "B3"});
    CHECK(!store->snapshot()->objects.at("B3").present);
    for (const auto& r : runs) {
        auto j = dw::run_to_json(r);
        CHECK(dw::run_from_json(j) == r);
    }
}

TEST_CASE("state_at agrees with a linear scan")
{
    auto source = fixture_schema();
    auto wh = dw::mark_class_historized(fixture_warehouse(source), "Personnes");
    wh = dw::mark_class_historized(wh, "Actes");
    auto store = fixture_store(wh, source, 5);
    auto state = store->snapshot();
    Rng rng(41);
    for (int i = 0; i < 500; ++i) {
        auto it = std::next(state->objects.begin(), static_cast<long>(rng.index(state->objects.size())));
        const auto& obj = it->second;
        if (obj.states.empty())
            continue;
        dw::Timestamp t{fixture_date(1).minutes + rng.range(-1440, 7 * 1440)};
        std::optional<std::map<std::string, Value>> want;
        for (const auto& s : obj.states)
            if (s.start <= t && (!s.end || t < *s.end))
                want = s.values;
        CHECK(store->state_at(wh, obj.class_name, obj.id, t) == want);
    }
    CHECK(kind_of([&] { store->state_at(wh, "Cabinets", "C1", fixture_date(2)); }) == ErrorKind::NotHistorized);
    CHECK(kind_of([&] { store->state_at(wh, "Actes", "A99", fixture_date(2)); }) == ErrorKind::UnknownObject);
}

TEST_CASE("time model quantizes extraction dates")
{
    dw::TimeModel hourly{dw::Granularity::Hour, 6};
    auto t = *dw::Timestamp::parse("1998-12-01T13:45");
    CHECK(hourly.quantize(t).to_string() == "1998-12-01T13:00");
    CHECK(hourly.next_due(hourly.quantize(t)).to_string() == "1998-12-01T19:00");
    CHECK(dw::time_model_from_json(dw::time_model_to_json(hourly)) == hourly);
    CHECK(kind_of([] { dw::TimeModel{dw::Granularity::Day, 0}.validate(); }) == ErrorKind::InvalidArgument);

    // Two extractions within one day-granule collide.
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::Store store(dw::TimeModel{dw::Granularity::Day, 1});
    refresh(store, wh, source, 1, *dw::Timestamp::parse("1998-12-01T08:00"));
    CHECK(kind_of([&] { refresh(store, wh, source, 2, *dw::Timestamp::parse("1998-12-01T18:00")); }) ==
          ErrorKind::OutOfOrderRun);
}

TEST_CASE("refresh reports its phases")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::Store store;
    std::vector<std::string> phases;
    auto snaps = dw::load_instances(source, fixture_run(1), fixture_date(1));
    store.run_refresh(wh, source, snaps, fixture_date(1), [&](const dw::RefreshProgress& p) {
        if (phases.empty() || phases.back() != p.phase)
            phases.push_back(p.phase);
        CHECK(p.run == 1);
        CHECK(p.done <= p.total);
    });
    CHECK(phases == std::vector<std::string>{"check", "extract", "load", "done"});
}

TEST_CASE("a failed refresh leaves the store untouched")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto store = fixture_store(wh, source, 1);
    auto before = store->snapshot();
    auto snaps = dw::load_instances(source, fixture_run(2), fixture_date(2), before->known_sources);
    snaps.front().values["nom"] = Value(12);
    CHECK(kind_of([&] { store->run_refresh(wh, source, snaps, fixture_date(2)); }) == ErrorKind::TypeMismatch);
    CHECK(*store->snapshot() == *before);
}

TEST_CASE("file-backed store persists every run")
{
    TempDir dir("store");
    auto source = fixture_schema();
    auto wh = dw::mark_class_historized(fixture_warehouse(source), "Personnes");
    std::string history;
    {
        auto store = dw::Store::open(dir.path(), {});
        for (int i = 1; i <= 3; ++i)
            refresh(*store, wh, source, i, fixture_date(i));
        history = dw::export_history(*store->snapshot());
    }
    auto reopened = dw::Store::open(dir.path(), {});
    CHECK(dw::export_history(*reopened->snapshot()) == history);
    CHECK(reopened->runs().size() == 3);
    auto state = reopened->snapshot();
    CHECK(dw::store_state_from_json(dw::store_state_to_json(*state)) == *state);
}

TEST_CASE("history export layout")
{
    auto source = fixture_schema();
    auto wh = dw::mark_class_historized(fixture_warehouse(source), "Personnes");
    wh = dw::mark_attribute_historized(wh, "Actes", "D_Taux Remb");
    auto store = fixture_store(wh, source, 2);
    auto text = dw::export_history(*store->snapshot());
    std::istringstream in(text);
    std::string line;
    int class_lines = 0, attribute_lines = 0;
    while (std::getline(in, line)) {
        auto j = dw::json::parse(line);
        for (const char* key : {"class", "object_id", "state_id", "values", "interval", "run", "level"})
            CHECK_MESSAGE(j.contains(key), key);
        if (j["level"] == "class") {
            ++class_lines;
            CHECK(j.contains("links"));
        } else {
            ++attribute_lines;
            CHECK(j["attribute"] == "D_Taux Remb");
        }
    }
    CHECK(class_lines == 6);      // B1 twice, B2, B3, P1, P2 once each
    CHECK(attribute_lines == 6);  // A01..A06
}
