#pragma once

#include "dw/mart.hpp"
#include "dw/schema.hpp"
#include "dw/schema_io.hpp"
#include "dw/temporal.hpp"
#include "dw/warehouse.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dw {

inline constexpr int kProjectFormatVersion = 1;

struct MartEntry {
    std::string name;
    std::vector<json> operations;
    MartDef definition;
};

/// Everything an operation log resolves to. Value type.
struct ProjectState {
    std::int64_t version = 0;  // number of logged operations
    std::string source_path;   // as written in the project file
    std::string source_hash;   // SHA-256 of the source schema file
    SchemaGraph source;
    TimeModel time_model;
    std::vector<json> warehouse_operations;
    WarehouseDef warehouse;
    std::vector<MartEntry> marts;

    const MartEntry* find_mart(std::string_view name) const;
};

struct OperationOutcome {
    ProjectState state;
    json result;
};

/// The single operation dispatcher behind the CLI, the HTTP service and replay. Operations
/// whose effect depends on warehouse data (`detect_fact`, `infer_hierarchy`) read `data`
/// and are logged in data-independent form (`flag_representative`, `set_hierarchy`).
OperationOutcome apply_operation(const ProjectState& state, const json& op, const StoreState* data);

/// Replays logs from scratch against `state.source`.
ProjectState replay(const ProjectState& base, const std::vector<json>& warehouse_operations,
                    const std::vector<std::pair<std::string, std::vector<json>>>& mart_operations);

json project_to_json(const ProjectState& state);

/// A project file with its store directory (`<file>.store`) beside it.
class Project {
public:
    /// Writes a new project over `source_file` (path stored relative to the project file
    /// when possible).
    static std::unique_ptr<Project> create(const std::filesystem::path& project_file,
                                           const std::filesystem::path& source_file, TimeModel time_model);
    /// Throws Error(HashMismatch) when the source changed, Error(ReplayMismatch) when the
    /// logs no longer reproduce the stored resolved definitions.
    static std::unique_ptr<Project> open(const std::filesystem::path& project_file);

    std::shared_ptr<const ProjectState> state() const;
    Store& store() { return *store_; }
    const std::filesystem::path& file() const noexcept { return file_; }

    /// Applies, logs and saves one operation. Throws Error(StaleVersion) when
    /// `expected_version` is given and differs, Error(Conflict) while another mutation runs.
    json apply(const json& op, std::optional<std::int64_t> expected_version = std::nullopt);

    /// Loads an instance document and runs one refresh under the writer lock.
    ExtractionRun refresh(std::string_view instances, Timestamp date, const ProgressCallback& progress = {});

    void set_specific_value(std::string_view object_id, std::string_view attr, const json& value);

    /// Star data from the current definitions and the latest store snapshot.
    MartData load_mart_data(std::string_view mart) const;

private:
    Project() = default;
    void save(const ProjectState& state) const;
    std::unique_lock<std::mutex> acquire_writer();

    std::filesystem::path file_;
    std::unique_ptr<Store> store_;
    mutable std::mutex state_mutex_;
    std::shared_ptr<const ProjectState> state_;
    std::mutex writer_;
};

} // namespace dw
