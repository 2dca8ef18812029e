#include "doctest.h"

#include "support/fixtures.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

#include "dw/error.hpp"
#include "dw/mart.hpp"

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

dw::ExtractionRun run_with(std::int64_t seq, std::map<std::string, std::int64_t> inserted)
{
    dw::ExtractionRun r;
    r.sequence = seq;
    r.date = fixture_date(static_cast<int>(seq));
    for (const auto& [cls, n] : inserted)
        r.counters[cls].inserted = n;
    return r;
}

dw::MartDef base_mart(const dw::WarehouseDef& wh)
{
    dw::MartDef m;
    m.name = "Prestations";
    m = dw::flag_representative(m, wh, "Actes");
    m = dw::project_fact(m, wh, "Actes", "Prestations");
    return m;
}

std::vector<std::string> parameter_names(const std::vector<dw::MartAttribute>& ps)
{
    std::vector<std::string> out;
    for (const auto& p : ps)
        out.push_back(p.name);
    return out;
}

std::set<std::pair<std::string, std::string>> edges(const dw::HierarchyGraph& h)
{
    return {h.edges.begin(), h.edges.end()};
}

} // namespace

TEST_CASE("representative classes are ranked by mean inserts after the first run")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    std::vector<dw::ExtractionRun> runs;
    runs.push_back(run_with(1, {{"Actes", 5000}, {"Praticiens", 5000}}));
    for (int i = 2; i <= 5; ++i)
        runs.push_back(run_with(i, {{"Actes", 100}, {"Praticiens", 1}}));
    auto report = dw::detect_representative_classes(wh, runs);
    REQUIRE(report.ranking.size() >= 2);
    CHECK(report.ranking[0].class_name == "Actes");
    CHECK(report.ranking[0].score == dw::Decimal(100));
    CHECK(report.ranking[1].class_name == "Praticiens");
    CHECK(report.ranking[1].score == dw::Decimal(1));
    CHECK(report.recommended == std::vector<std::string>{"Actes", "Praticiens"});
}

TEST_CASE("ties rank alphabetically and a single run recommends nothing")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    std::vector<dw::ExtractionRun> runs{run_with(1, {}), run_with(2, {{"Cabinets", 3}, {"Actes", 3}, {"Beneficiaires", 3}})};
    auto report = dw::detect_representative_classes(wh, runs);
    REQUIRE(report.ranking.size() >= 3);
    CHECK(report.ranking[0].class_name == "Actes");
    CHECK(report.ranking[1].class_name == "Beneficiaires");
    CHECK(report.ranking[2].class_name == "Cabinets");

    auto single = dw::detect_representative_classes(wh, {run_with(1, {{"Actes", 9}})});
    CHECK(single.recommended.empty());
    CHECK(!single.diagnostics.empty());
}

TEST_CASE("fact projection needs a flag and is unique")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    dw::MartDef m;
    m.name = "M";
    CHECK(kind_of([&] { dw::project_fact(m, wh, "Actes", "F"); }) == ErrorKind::NotRepresentative);
    m = dw::flag_representative(m, wh, "Actes");
    std::vector<std::string> diags;
    m = dw::project_fact(m, wh, "Actes", "F", &diags);
    CHECK(m.fact->measures.size() == 6);
    CHECK(diags.empty());
    m = dw::flag_representative(m, wh, "Praticiens");
    CHECK(kind_of([&] { dw::project_fact(m, wh, "Praticiens", "G"); }) == ErrorKind::FactExists);
    CHECK(kind_of([&] { dw::load_mart(dw::MartDef{}, wh, dw::StoreState{}); }) == ErrorKind::NoFactClass);
}

TEST_CASE("dimensions come from dependent classes only")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = base_mart(wh);
    m = dw::project_dimension(m, wh, "Cabinets");
    const auto* cab = m.find_dimension("Cabinets");
    REQUIRE(cab);
    REQUIRE(cab->path.size() == 2);
    CHECK(cab->path[0].link == "Prescrit_par");
    CHECK(cab->path[1].link == "Exerce_dans");
    CHECK(parameter_names(cab->parameters) == std::vector<std::string>{"Ville", "Département", "date_creation", "adresse"});
    CHECK_NOTHROW(dw::check_star(m));

    dw::MartDef p;
    p.name = "P";
    p = dw::flag_representative(p, wh, "Praticiens");
    p = dw::project_fact(p, wh, "Praticiens", "Praticiens");
    CHECK(kind_of([&] { dw::project_dimension(p, wh, "Actes"); }) == ErrorKind::NotDependent);
    CHECK(kind_of([&] { dw::project_dimension_from_attribute(m, wh, "Actes", "D_Type"); }) ==
          ErrorKind::NotDateOrAddress);

    auto all = dw::project_all_dependents(base_mart(wh), wh);
    std::set<std::string> classes;
    for (const auto& d : all.dimensions)
        classes.insert(d.warehouse_class);
    CHECK(classes == std::set<std::string>{"Praticiens", "Personnes", "Beneficiaires", "Cabinets", "Pharmacie"});
}

TEST_CASE("time dimension from Date_exec")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension_from_attribute(base_mart(wh), wh, "Actes", "Date_exec", "Execution");
    const auto* d = m.find_dimension("Execution");
    REQUIRE(d);
    CHECK(d->origin == dw::DimensionOrigin::DateAttribute);
    CHECK(parameter_names(d->parameters) ==
          std::vector<std::string>{"Date_exec", "Libelle_jour", "Mois", "Trimestre", "Annee"});

    auto store = fixture_store(wh, source, 2);
    auto data = dw::load_mart(m, wh, *store->snapshot());
    const auto& rows = data.dimensions.at("Execution");
    CHECK(rows.size() == 6);
    for (const auto& r : rows) {
        auto ymd = civil(*dw::Date::parse(r.key));
        CHECK(r.parameters.at("Mois") == Value(ymd.month));
        CHECK(r.parameters.at("Trimestre") == Value(quarter_of(ymd.month)));
        CHECK(r.parameters.at("Annee") == Value(ymd.year));
        CHECK(r.parameters.at("Libelle_jour") == Value(weekday_name(weekday_sakamoto(ymd.year, ymd.month, ymd.day))));
    }
    for (const auto& f : data.facts)
        CHECK(f.dimensions.at("Execution"));
}

TEST_CASE("city determines department")
{
    std::vector<dw::Row> rows{{{"Ville", Value("Toulouse")}, {"Département", Value("31")}},
                              {{"Ville", Value("Blagnac")}, {"Département", Value("31")}},
                              {{"Ville", Value("Albi")}, {"Département", Value("81")}}};
    auto h = dw::infer_hierarchy({"Ville", "Département"}, rows);
    CHECK(edges(h) == std::set<std::pair<std::string, std::string>>{{"Ville", "Département"}});
    CHECK(dw::fd_holds(rows, "Ville", "Département"));
    CHECK(!dw::fd_holds(rows, "Département", "Ville"));
}

TEST_CASE("a bijection yields no edge")
{
    std::vector<dw::Row> rows{{{"code", Value(1)}, {"nom", Value("un")}},
                              {{"code", Value(2)}, {"nom", Value("deux")}},
                              {{"code", Value(1)}, {"nom", Value("un")}}};
    CHECK(dw::infer_hierarchy({"code", "nom"}, rows).edges.empty());
    CHECK(kind_of([] { dw::infer_hierarchy({"a"}, {}); }) == ErrorKind::EmptySample);
}

TEST_CASE("hierarchy inference matches the exhaustive scan")
{
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        Rng rng(seed * 7);
        std::vector<std::string> columns;
        auto rows = random_relation(rng, columns, 6, 60);
        auto h = dw::infer_hierarchy(columns, rows);
        CHECK(edges(h) == hierarchy_oracle(columns, rows));
        for (const auto& [a, b] : h.edges)
            CHECK(fd_scan(rows, a, b));
        CHECK(dw::hierarchy_warnings(h, rows).empty());
    }
}

TEST_CASE("hierarchy edits")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension(base_mart(wh), wh, "Cabinets");
    m = dw::set_hierarchy(m, "Cabinets", {{"Ville", "Département"}});
    CHECK(kind_of([&] { dw::add_hierarchy_edge(m, "Cabinets", "Département", "Ville"); }) == ErrorKind::HierarchyCycle);
    CHECK(kind_of([&] { dw::add_hierarchy_edge(m, "Cabinets", "Ville", "Pays"); }) == ErrorKind::UnknownAttribute);
    m = dw::add_hierarchy_edge(m, "Cabinets", "date_creation", "Ville");
    CHECK(m.find_dimension("Cabinets")->hierarchy.edges.size() == 2);
    m = dw::remove_hierarchy_edge(m, "Cabinets", "date_creation", "Ville");
    CHECK(m.find_dimension("Cabinets")->hierarchy.edges ==
          std::vector<std::pair<std::string, std::string>>{{"Ville", "Département"}});

    // Data contradicting an edge is reported.
    std::vector<dw::Row> rows{{{"Ville", Value("Toulouse")}, {"Département", Value("31")}},
                              {{"Ville", Value("Toulouse")}, {"Département", Value("32")}}};
    CHECK(dw::hierarchy_warnings(m.find_dimension("Cabinets")->hierarchy, rows).size() == 1);
}

TEST_CASE("Pharmacie specializes the Cabinets dimension")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension(base_mart(wh), wh, "Cabinets");
    m = dw::set_hierarchy(m, "Cabinets", {{"Ville", "Département"}});
    m = dw::specialize_dimension(m, wh, "Cabinets", "Pharmacies", "Pharmacie", {"licence"}, std::nullopt);
    const auto* ph = m.find_dimension("Pharmacies");
    REQUIRE(ph);
    CHECK(parameter_names(ph->parameters) == std::vector<std::string>{"licence"});
    CHECK(parameter_names(dw::all_parameters(m, *ph)) ==
          std::vector<std::string>{"Ville", "Département", "date_creation", "adresse", "licence"});
    CHECK(dw::full_hierarchy(m, *ph).edges.size() == 1);
    CHECK_NOTHROW(dw::check_star(m));
    CHECK(kind_of([&] { dw::specialize_dimension(m, wh, "Cabinets", "X", "Actes", {}, std::nullopt); }) ==
          ErrorKind::InvalidArgument);

    auto store = fixture_store(wh, source, 1);
    auto data = dw::load_mart(m, wh, *store->snapshot());
    const auto& rows = data.dimensions.at("Pharmacies");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].key == "PH1");
    CHECK(rows[0].parameters.at("licence") == Value("L-31-001"));
    CHECK(rows[0].parameters.at("Ville") == Value("Toulouse"));
    CHECK(data.dimensions.at("Cabinets").size() == 4);
}

TEST_CASE("selection on the Cabinets dimension")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension(base_mart(wh), wh, "Cabinets");
    auto store = fixture_store(wh, source, 1);
    auto unfiltered = dw::load_mart(m, wh, *store->snapshot());

    for (const char* text : {"Ville = 'Toulouse' and date_creation > 1975-01-01",
                             "\"Cabinets.Ville\" = 'Toulouse' and \"Cabinets.date_creation\" > 1975-01-01"}) {
        auto predicate = dw::parse_formula(text);
        auto filtered = dw::select_objects(m, wh, "Cabinets", predicate);
        auto data = dw::load_mart(filtered, wh, *store->snapshot());
        std::set<std::string> got, want;
        for (const auto& r : data.dimensions.at("Cabinets"))
            got.insert(r.key);
        for (const auto& r : unfiltered.dimensions.at("Cabinets")) {
            dw::Binding b;
            for (const auto& ref : predicate.references()) {
                auto attr = dw::split_reference(ref).attribute;
                b[ref] = {r.parameters.at(attr)};
            }
            auto verdict = interpret(predicate.root(), b);
            if (verdict.value && verdict.value->flag)
                want.insert(r.key);
        }
        CHECK(want == std::set<std::string>{"C1", "PH1"});
        CHECK(got == want);
    }
    CHECK(kind_of([&] { dw::select_objects(m, wh, "Cabinets", dw::parse_formula("Ville")); }) ==
          ErrorKind::TypeMismatch);
}

TEST_CASE("calculated parameters and measures")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension(base_mart(wh), wh, "Praticiens");
    m = dw::add_parameter(m, wh, "Praticiens", "Nb_actes", dw::parse_formula("count(\"Actes.Type\")"));
    m = dw::add_measure(m, wh, "Montant_remb",
                        dw::parse_formula(R"(("Actes.Quantité" * "Actes.Prix Unitaire") * "Actes.Taux Remb")"));
    CHECK(kind_of([&] { dw::add_measure(m, wh, "Montant_remb", dw::parse_formula("1")); }) == ErrorKind::DuplicateName);
    auto store = fixture_store(wh, source, 2);
    auto data = dw::load_mart(m, wh, *store->snapshot());
    std::map<std::string, std::int64_t> per_prat;
    for (const auto& f : data.facts)
        ++per_prat[*f.dimensions.at("Praticiens")];
    for (const auto& r : data.dimensions.at("Praticiens"))
        CHECK(r.parameters.at("Nb_actes") == Value(per_prat[r.key]));
}

TEST_CASE("mart JSON round-trip")
{
    auto source = fixture_schema();
    auto wh = fixture_warehouse(source);
    auto m = dw::project_dimension(base_mart(wh), wh, "Cabinets");
    m = dw::project_dimension_from_attribute(m, wh, "Actes", "Date_exec", "Execution");
    m = dw::set_hierarchy(m, "Cabinets", {{"Ville", "Département"}});
    m = dw::specialize_dimension(m, wh, "Cabinets", "Pharmacies", "Pharmacie", {"licence"},
                                 dw::parse_formula("\"Pharmacie.licence\" = 'L-31-001'"));
    m = dw::select_objects(m, wh, "Prestations", dw::parse_formula("\"Actes.Quantité\" > 1"));
    CHECK(dw::mart_from_json(dw::mart_to_json(m)) == m);
    auto star = m.schema();
    CHECK(star.classes.size() == 4);
    CHECK_NOTHROW(star.validate());
}
