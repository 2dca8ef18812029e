#include "fixtures.hpp"

#include "dw/error.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

namespace dwtest {

namespace fs = std::filesystem;

fs::path fixture_dir()
{
    return fs::path(DW_FIXTURE_DIR);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

dw::SchemaGraph fixture_schema()
{
    return dw::load_schema(read_file(fixture_dir() / "assurance_maladie.json"));
}

std::string fixture_run(int i)
{
    return read_file(fixture_dir() / "runs" / ("run" + std::to_string(i) + ".json"));
}

dw::Timestamp fixture_date(int i)
{
    return dw::Timestamp::from_date(dw::Date{dw::Date::from_ymd(1998, 12, 1).days + i - 1});
}

dw::WarehouseDef fixture_warehouse(const dw::SchemaGraph& source)
{
    dw::WarehouseDef wh;
    for (const auto& c : source.classes)
        wh = dw::project_class(wh, source, c.name);
    return wh;
}

std::vector<dw::json> fixture_warehouse_ops()
{
    std::vector<dw::json> ops;
    for (const char* c : {"Personnes", "Praticiens", "Beneficiaires", "Actes", "Cabinets", "Pharmacie"})
        ops.push_back({{"op", "project_class"}, {"class", c}});
    for (const char* c : {"Personnes", "Actes", "Cabinets"})
        ops.push_back({{"op", "historize_class"}, {"class", c}});
    return ops;
}

std::vector<dw::json> fixture_mart_ops()
{
    const std::string mart = "Prestations";
    return {
        {{"op", "flag_representative"}, {"mart", mart}, {"class", "Actes"}},
        {{"op", "project_fact"}, {"mart", mart}, {"class", "Actes"}, {"name", "Prestations"}},
        {{"op", "project_dimension"}, {"mart", mart}, {"class", "Actes"}, {"attribute", "Date_exec"},
         {"name", "Execution"}},
        {{"op", "project_dimension"}, {"mart", mart}, {"class", "Cabinets"}, {"name", "Cabinets"}},
        {{"op", "add_measure"}, {"mart", mart}, {"name", "Montant_remb"},
         {"formula", "(\"Actes.Quantité\" * \"Actes.Prix Unitaire\") * \"Actes.Taux Remb\""}},
        {{"op", "set_hierarchy"}, {"mart", mart}, {"dimension", "Cabinets"},
         {"edges", dw::json::array({dw::json::array({"Ville", "Département"})})}},
    };
}

std::unique_ptr<dw::Store> fixture_store(const dw::WarehouseDef& wh, const dw::SchemaGraph& source, int runs)
{
    auto store = std::make_unique<dw::Store>();
    for (int i = 1; i <= runs; ++i) {
        auto snaps = dw::load_instances(source, fixture_run(i), fixture_date(i), store->snapshot()->known_sources);
        store->run_refresh(wh, source, snaps, fixture_date(i));
    }
    return store;
}

TempDir::TempDir(const std::string& tag)
{
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("dwtest-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

} // namespace dwtest
