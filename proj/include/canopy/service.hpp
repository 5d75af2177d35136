#pragma once

#include "canopy/inventory.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace canopy {

using QueryParams = std::multimap<std::string, std::string>;

template <typename T>
struct Range {
    std::optional<T> min;
    std::optional<T> max;

    bool active() const { return min || max; }
    bool contains(T v) const { return (!min || v >= *min) && (!max || v <= *max); }
};

struct BBox {
    double min_x, min_y, max_x, max_y;
    bool contains(double x, double y) const { return x >= min_x && x <= max_x && y >= min_y && y <= max_y; }
};

inline constexpr std::size_t kMaxQueryLimit = 10000;

struct TreeQuery {
    std::set<std::string> species;
    Range<int> vitality;
    std::optional<BBox> bbox;
    Range<double> ndvi_mean;
    Range<double> ndre_mean;
    std::optional<SnapshotId> snapshot;
    std::size_t offset = 0;
    std::size_t limit = 100;
};

// Throws ValidationError naming the field for malformed or inverted ranges.
void validate(const TreeQuery& q);

// Accepts species (comma separated or repeated), vitality_min/max,
// bbox=min_x,min_y,max_x,max_y, ndvi_min/max, ndre_min/max, snapshot,
// offset, limit. Keys listed in `extra` are ignored; anything else is an error.
TreeQuery parse_tree_query(const QueryParams& params, const std::set<std::string>& extra = {});

struct TreeView {
    const TreeRecord* record = nullptr;
    // Latest annotation per kind (by produced_at, then log order).
    std::map<AnnotationKind, TreeAnnotation> annotations;

    std::optional<double> stat_mean(AnnotationKind kind) const;
};

struct TreePage {
    SnapshotId snapshot_id = 0;
    std::size_t total_count = 0;
    std::size_t offset = 0;
    std::size_t limit = 0;
    std::vector<TreeView> items;
    std::shared_ptr<const CadastreSnapshot> snapshot;  // keeps records alive
};

bool matches(const TreeQuery& q, const TreeView& tree);

// Conjunctive filters, ordered by tree_id.
TreePage query_trees(const InventoryStore& store, const TreeQuery& q);
// All matching trees without paging.
TreePage query_all(const InventoryStore& store, const TreeQuery& q);

enum class HistogramField { species, vitality, ndvi_mean, ndre_mean };
HistogramField parse_histogram_field(std::string_view text);
std::string to_string(HistogramField f);

struct HistogramBucket {
    std::string key;
    std::optional<double> lower, upper;
    std::size_t count = 0;
};

struct Histogram {
    HistogramField field = HistogramField::species;
    std::size_t total = 0;
    std::vector<HistogramBucket> buckets;
};

// Numeric fields bin [-1, 1] into `bins` equal buckets (the last one closed)
// plus an "unknown" bucket for trees without a value.
Histogram stats_histogram(const InventoryStore& store, const TreeQuery& q, HistogramField field, int bins);
// Edges lo + (hi - lo) * i / bins for i = 0..bins.
std::vector<double> histogram_edges(double lo, double hi, int bins);

nlohmann::ordered_json to_geojson(const TreePage& page);
nlohmann::ordered_json to_json(const TreeView& tree);
nlohmann::ordered_json to_json(const Histogram& h);

}  // namespace canopy
