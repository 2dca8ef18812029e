#pragma once

#include "dw/schema.hpp"
#include "dw/schema_io.hpp"
#include "dw/warehouse.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dw {

enum class Granularity { Day, Hour, Minute };

std::string_view to_string(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view text);

/// Extraction calendar: timestamps are floored to the granule; runs are due every
/// `refresh_period` granules.
struct TimeModel {
    Granularity granularity = Granularity::Day;
    std::int64_t refresh_period = 1;

    std::int64_t granule_minutes() const;
    Timestamp quantize(Timestamp t) const;
    Timestamp next_due(Timestamp last) const;
    /// Throws Error(InvalidArgument) when the period is below one granule.
    void validate() const;

    friend bool operator==(const TimeModel&, const TimeModel&) = default;
};

json time_model_to_json(const TimeModel& tm);
TimeModel time_model_from_json(const json& j);

struct ClassCounters {
    std::int64_t inserted = 0;
    std::int64_t changed = 0;
    std::int64_t unchanged = 0;

    friend bool operator==(const ClassCounters&, const ClassCounters&) = default;
};

/// An object seen by an earlier run and absent from this one. The object is kept.
struct Tombstone {
    std::string class_name;
    std::string object_id;

    friend bool operator==(const Tombstone&, const Tombstone&) = default;
};

struct ExtractionRun {
    std::int64_t sequence = 0;
    Timestamp date;
    std::map<std::string, ClassCounters> counters;  // every warehouse class, zeros included
    std::vector<Tombstone> tombstones;

    friend bool operator==(const ExtractionRun&, const ExtractionRun&) = default;
};

json run_to_json(const ExtractionRun& run);
ExtractionRun run_from_json(const json& j);

/// One (value, extraction date) pair of a historized attribute.
struct HistoryEntry {
    Value value;
    Timestamp date;
    std::int64_t run = 0;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

/// One state of a generic object over the half-open interval [start, end).
struct ObjectState {
    std::int64_t state_id = 0;
    std::map<std::string, Value> values;
    std::map<std::string, std::vector<std::string>> links;
    Timestamp start;
    std::optional<Timestamp> end;  // open on the latest state only
    std::int64_t run = 0;

    friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct StoredObject {
    std::string id;
    std::string class_name;
    std::map<std::string, Value> values;  // latest derived/calculated values and specific values
    std::map<std::string, std::vector<std::string>> links;
    std::vector<std::string> source_refs;
    std::vector<ObjectState> states;  // class-level history
    std::map<std::string, std::vector<HistoryEntry>> attribute_history;
    bool present = true;  // seen by the latest run

    friend bool operator==(const StoredObject&, const StoredObject&) = default;
};

struct StoreState {
    std::vector<ExtractionRun> runs;
    std::map<std::string, StoredObject> objects;
    KnownObjects known_sources;  // source id -> source class, across all runs

    friend bool operator==(const StoreState&, const StoreState&) = default;
};

struct RefreshProgress {
    std::int64_t run = 0;
    std::string phase;  // "check", "extract", "load", "done"
    std::size_t done = 0;
    std::size_t total = 0;
};

using ProgressCallback = std::function<void(const RefreshProgress&)>;

/// Historized warehouse extension. One writer at a time; readers take an immutable
/// snapshot and never observe a run half-applied.
class Store {
public:
    explicit Store(TimeModel time_model = {});

    /// Opens (or creates) a file-backed store in `directory`; every committed change is
    /// persisted there before the in-memory state is swapped.
    static std::unique_ptr<Store> open(const std::filesystem::path& directory, TimeModel time_model);

    const TimeModel& time_model() const noexcept { return time_model_; }
    std::shared_ptr<const StoreState> snapshot() const;

    /// Throws Error(OutOfOrderRun) when `date` does not follow the previous run, and the
    /// snapshot type-check errors of check_snapshots.
    ExtractionRun run_refresh(const WarehouseDef& wh, const SchemaGraph& source,
                              const std::vector<ObjectSnapshot>& snapshots, Timestamp date,
                              const ProgressCallback& progress = {});

    /// Writes a user-owned specific attribute value; refreshes never overwrite it.
    void set_specific_value(const WarehouseDef& wh, std::string_view object_id, std::string_view attr,
                            const Value& value);

    /// Values of the state whose interval contains `t`; nullopt before the first state.
    /// Throws Error(NotHistorized) or Error(UnknownObject).
    std::optional<std::map<std::string, Value>> state_at(const WarehouseDef& wh, std::string_view cls,
                                                         std::string_view object_id, Timestamp t) const;

    std::vector<ExtractionRun> runs() const;

    /// Replaces the whole content (used when resetting a project).
    void reset();

private:
    void commit(std::shared_ptr<const StoreState> next, const ExtractionRun* appended_run);

    TimeModel time_model_;
    std::optional<std::filesystem::path> directory_;
    mutable std::mutex state_mutex_;
    std::shared_ptr<const StoreState> state_;
    std::mutex writer_;
};

/// Class-level historization applies to `cls` when it or one of its warehouse ancestors
/// is historized directly or through an environment.
bool historized_chain(const WarehouseDef& wh, const SchemaGraph& wgraph, std::string_view cls);

/// History export, one JSON object per line: class-level states then attribute entries,
/// objects in id order. Record: {class, object_id, state_id, values, interval:{start,
/// end|null}, run, level} plus "links" for class states and "attribute" for attribute
/// entries.
std::string export_history(const StoreState& state);
/// Run log, one ExtractionRun per line.
std::string export_runs(const StoreState& state);

json store_state_to_json(const StoreState& state);
StoreState store_state_from_json(const json& j);

} // namespace dw
