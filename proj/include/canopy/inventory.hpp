#pragma once

#include "canopy/geometry.hpp"
#include "canopy/timeutil.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace canopy {

using SnapshotId = std::int64_t;

// Parses "S12" or "12".
SnapshotId parse_snapshot_id(std::string_view text);

struct VitalityRange {
    int min = 0;  // vital
    int max = 4;  // dead
};

struct TreeRecord {
    std::string tree_id;
    double x = 0.0;
    double y = 0.0;
    std::string crs;
    std::string species = "unknown";
    std::optional<double> height_est;
    std::optional<double> crown_diameter_est;
    std::optional<int> vitality;
    std::string site_info;
    std::optional<std::string> last_inspected;  // YYYY-MM-DD

    bool operator==(const TreeRecord&) const = default;
};

// Field names in canonical order; x and y are reported as separate fields.
const std::vector<std::string>& tree_fields();
nlohmann::ordered_json to_json(const TreeRecord& r);
TreeRecord tree_from_json(const nlohmann::json& j);
nlohmann::ordered_json field_value(const TreeRecord& r, const std::string& field);
void set_field(TreeRecord& r, const std::string& field, const nlohmann::json& value);

struct CadastreSnapshot {
    SnapshotId snapshot_id = 0;
    Timestamp captured_at{};
    std::vector<TreeRecord> records;  // sorted by tree_id

    const TreeRecord* find(const std::string& tree_id) const;
};

// Records sorted by tree_id, one JSON document, fixed key order.
std::string canonical_json(const std::vector<TreeRecord>& records);
std::string canonical_json(const CadastreSnapshot& snapshot);
CadastreSnapshot snapshot_from_json(const nlohmann::json& j);

struct CadastreOptions {
    std::string default_crs;
    VitalityRange vitality{};
};

// CSV (tree_id,x,y[,crs,species,height_est,crown_diameter_est,vitality,site_info,last_inspected])
// or GeoJSON point features. Throws on missing columns and duplicate ids.
std::vector<TreeRecord> read_cadastre(const std::filesystem::path& path, const CadastreOptions& options = {});

enum class Depth { d1, d2, d3 };
std::string to_string(Depth d);
Depth parse_depth(std::string_view text);

struct SoilMoistureReading {
    std::string sensor_id;
    Timestamp timestamp{};
    Depth depth = Depth::d1;
    double vwc = 0.0;  // percent
};

enum class AnnotationKind { species_prediction, ndvi_stats, ndre_stats, vitality_prediction };
std::string to_string(AnnotationKind k);
AnnotationKind parse_annotation_kind(std::string_view text);

struct TreeAnnotation {
    std::string target_id;  // tree_id or crown_id
    AnnotationKind kind = AnnotationKind::species_prediction;
    nlohmann::json payload;
    Timestamp produced_at{};
    std::string producer;
};

// Throws ValidationError when the payload does not match the kind's schema.
void validate(const TreeAnnotation& a, const VitalityRange& vitality = {});
nlohmann::ordered_json to_json(const TreeAnnotation& a);
TreeAnnotation annotation_from_json(const nlohmann::json& j);

struct SnapshotInfo {
    SnapshotId id = 0;
    Timestamp captured_at{};
    std::size_t records = 0;
};

struct IngestCount {
    std::size_t ingested = 0;
    std::size_t rejected = 0;
};

struct SeriesQuery {
    std::string sensor_id;
    std::optional<Timestamp> from;  // inclusive
    std::optional<Timestamp> to;    // inclusive
    std::optional<Depth> depth;
};

// Persistent inventory. Readers may run concurrently; writes are serialized.
class InventoryStore {
public:
    virtual ~InventoryStore() = default;

    virtual std::vector<SnapshotInfo> snapshots() const = 0;
    // Throws NotFoundError for unknown ids.
    virtual std::shared_ptr<const CadastreSnapshot> snapshot(SnapshotId id) const = 0;
    virtual std::optional<SnapshotId> latest_snapshot() const = 0;
    // Assigns the next id; captured_at must be later than every stored snapshot.
    virtual CadastreSnapshot commit_snapshot(Timestamp captured_at, std::vector<TreeRecord> records) = 0;

    virtual void append_annotations(const std::vector<TreeAnnotation>& annotations) = 0;
    virtual std::vector<TreeAnnotation> annotations() const = 0;

    // Rows whose (sensor_id, timestamp, depth) already exists are rejected.
    virtual IngestCount add_readings(const std::vector<SoilMoistureReading>& readings) = 0;
    // Ascending (timestamp, depth).
    virtual std::vector<SoilMoistureReading> series(const SeriesQuery& query) const = 0;
};

// Directory layout:
//   snapshots/<id>.json   one immutable file per snapshot, written via rename
//   annotations.jsonl     append-only annotation log
//   readings.csv          append-only sensor readings
//   .lock                 advisory lock held by the single writer
class FileStore final : public InventoryStore {
public:
    explicit FileStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    std::vector<SnapshotInfo> snapshots() const override;
    std::shared_ptr<const CadastreSnapshot> snapshot(SnapshotId id) const override;
    std::optional<SnapshotId> latest_snapshot() const override;
    CadastreSnapshot commit_snapshot(Timestamp captured_at, std::vector<TreeRecord> records) override;

    void append_annotations(const std::vector<TreeAnnotation>& annotations) override;
    std::vector<TreeAnnotation> annotations() const override;

    IngestCount add_readings(const std::vector<SoilMoistureReading>& readings) override;
    std::vector<SoilMoistureReading> series(const SeriesQuery& query) const override;

private:
    class WriterLock;
    std::vector<SoilMoistureReading> load_readings() const;

    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
    mutable std::mutex cache_mutex_;
    mutable std::map<SnapshotId, std::shared_ptr<const CadastreSnapshot>> cache_;
};

CadastreSnapshot ingest_cadastre(InventoryStore& store, const std::filesystem::path& path, Timestamp captured_at,
                                 const CadastreOptions& options = {});

// Reads sensor_id,timestamp,depth,vwc rows. Invalid rows abort the whole
// ingest; duplicates are counted as rejected.
std::vector<SoilMoistureReading> read_sensor_csv(const std::filesystem::path& path);
IngestCount ingest_sensor_series(InventoryStore& store, const std::filesystem::path& path);

struct FieldChange {
    std::string field;
    nlohmann::ordered_json old_value;
    nlohmann::ordered_json new_value;
};

struct ModifiedTree {
    std::string tree_id;
    std::vector<FieldChange> changes;
};

struct ChangeSet {
    std::optional<SnapshotId> from;
    std::optional<SnapshotId> to;
    std::vector<TreeRecord> added;
    std::vector<TreeRecord> removed;
    std::vector<ModifiedTree> modified;
    // (removed tree_id, added tree_id) pairs sharing identical coordinates.
    std::vector<std::pair<std::string, std::string>> possible_id_churn;

    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

ChangeSet diff_records(const std::vector<TreeRecord>& a, const std::vector<TreeRecord>& b);
// Throws NotFoundError for unknown ids and ValidationError when a is later than b.
ChangeSet snapshot_diff(const InventoryStore& store, SnapshotId a, SnapshotId b);
std::vector<TreeRecord> apply_diff(const std::vector<TreeRecord>& a, const ChangeSet& diff);

nlohmann::ordered_json to_json(const ChangeSet& diff);
ChangeSet changeset_from_json(const nlohmann::json& j);

struct TreeHistoryEntry {
    SnapshotId from = 0;
    SnapshotId to = 0;
    Timestamp captured_at{};
    std::string change;  // added, removed or modified
    std::vector<FieldChange> fields;
};

// Changes of one tree across consecutive snapshots.
std::vector<TreeHistoryEntry> tree_history(const InventoryStore& store, const std::string& tree_id);

struct JoinMatch {
    std::string tree_id;
    std::string crown_id;
    double distance = 0.0;
};

struct JoinResult {
    std::vector<JoinMatch> matches;  // sorted by tree_id
    std::vector<std::string> unmatched_trees;
    std::vector<std::string> unmatched_crowns;
};

// Greedy mutual-nearest matching of tree locations to crown centroids within
// max_dist. Approximate: not a global optimum.
JoinResult join_predictions(const std::vector<TreeRecord>& trees, const CrownCollection& crowns, double max_dist);
JoinResult join_predictions(const InventoryStore& store, SnapshotId snapshot, const CrownCollection& crowns,
                            double max_dist);

}  // namespace canopy
