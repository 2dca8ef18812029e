#pragma once

#include "dw/project.hpp"
#include "dw/schema.hpp"
#include "dw/schema_io.hpp"
#include "dw/temporal.hpp"
#include "dw/warehouse.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dwtest {

std::filesystem::path fixture_dir();
std::string read_file(const std::filesystem::path& path);

dw::SchemaGraph fixture_schema();
/// Raw instance document of run `i` (1..5).
std::string fixture_run(int i);
/// Extraction date of run `i`: 1998-12-01 plus i-1 days.
dw::Timestamp fixture_date(int i);

/// Every source class projected.
dw::WarehouseDef fixture_warehouse(const dw::SchemaGraph& source);

/// Project-file operations: all classes, class history on Personnes, Actes and Cabinets.
std::vector<dw::json> fixture_warehouse_ops();
/// The Prestations mart: fact Actes, dimensions Execution (from Date_exec) and Cabinets,
/// the Montant_remb measure and a hierarchy on Cabinets. Needs no warehouse data.
std::vector<dw::json> fixture_mart_ops();

/// Applies runs 1..n through a native store and returns it.
std::unique_ptr<dw::Store> fixture_store(const dw::WarehouseDef& wh, const dw::SchemaGraph& source, int runs);

/// Fresh empty directory under the system temp dir, removed by the destructor.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace dwtest
