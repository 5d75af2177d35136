#pragma once

#include "canopy/clustering.hpp"
#include "canopy/raster.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace canopy {

// Optimal assignment maximizing the total of `profit` (rows -> columns,
// rectangular allowed). Returns the column per row, -1 when unassigned.
std::vector<Index> hungarian_max(const Eigen::MatrixXd& profit);

struct ClassCounts {
    long long tp = 0, fp = 0, fn = 0;
};

struct ConfusionCounts {
    std::vector<std::string> classes;  // sorted by name
    std::vector<ClassCounts> counts;
    std::vector<long long> supports;

    long long total_tp() const;
};

struct ClusterMapping {
    std::map<int, std::string> cluster_to_class;  // assigned clusters only
    ConfusionCounts counts;
    Eigen::MatrixXd contingency;  // clusters x classes
    std::vector<int> clusters;    // row labels of the contingency table
};

// labels[i] is the cluster of item i (-1 noise); truth[i] its class.
ClusterMapping map_clusters_to_classes(std::span<const int> labels, std::span<const std::string> truth);
// Truth looked up by crown id; every assigned crown must have a class.
ClusterMapping map_clusters_to_classes(const ClusterAssignment& assignment,
                                       const std::unordered_map<std::string, std::string>& truth);

struct F1Report {
    std::vector<std::string> classes;
    std::vector<double> f1;
    double macro = 0.0;
    double weighted = 0.0;
    double micro = 0.0;
};

double f1_score(const ClassCounts& c);
// Supports default to tp + fn when empty.
F1Report f1_scores(const ConfusionCounts& counts);
F1Report f1_scores(const ConfusionCounts& counts, const std::map<std::string, long long>& supports);

void write_f1_report(std::ostream& out, const ConfusionCounts& counts, const F1Report& report);

struct SegmentationMap {
    LabelPlane ids;
    std::map<std::int32_t, std::string> classes;
    std::int32_t nodata = -1;

    Index width() const { return ids.cols(); }
    Index height() const { return ids.rows(); }
};

void validate(const SegmentationMap& map);

// Shares in table order, normalized to sum 1.
class ClassShareTable {
public:
    ClassShareTable() = default;
    // Raw shares (fractions or percentages) are normalized by their sum.
    explicit ClassShareTable(std::vector<std::pair<std::string, double>> raw);

    const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
    std::optional<double> share(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }
    double raw_sum() const { return raw_sum_; }

private:
    std::vector<std::pair<std::string, double>> entries_;
    double raw_sum_ = 0.0;
};

ClassShareTable read_shares_csv(const std::filesystem::path& path);
ClassShareTable shares_from_map(const SegmentationMap& truth);

struct ClassIou {
    std::string name;
    double share = 0.0;
    std::optional<double> iou;  // empty when the class is absent from both maps
};

struct IouReport {
    std::vector<ClassIou> classes;
    double weighted = 0.0;
};

// Share-weighted mean over entries with a defined IoU, normalized by their shares.
double weighted_iou(std::span<const ClassIou> classes);

IouReport iou_scores(const SegmentationMap& pred, const SegmentationMap& truth, const ClassShareTable& shares);

void write_iou_report(std::ostream& out, const IouReport& report);

struct KeepTop {
    std::size_t count = 0;
};
struct ShareThreshold {
    double threshold = 0.0;
};
using MergeRule = std::variant<KeepTop, ShareThreshold>;

inline constexpr const char* kOtherClass = "other";

struct ClassMerge {
    std::map<std::string, std::string> remap;  // every input class -> output class
    ClassShareTable shares;
};

ClassMerge merge_minor_classes(const ClassShareTable& shares, const MergeRule& rule);
std::vector<std::string> apply_merge(const ClassMerge& merge, std::span<const std::string> labels);
SegmentationMap apply_merge(const ClassMerge& merge, const SegmentationMap& map);

// w(c) = 1 / (K * share(c)), so the share-weighted mean weight is 1.
std::vector<std::pair<std::string, double>> class_weights(const ClassShareTable& shares);

SegmentationMap majority_vote_smooth(const SegmentationMap& map, Index window);
SegmentationMap majority_vote_smooth(std::span<const SegmentationMap> maps, Index window);

}  // namespace canopy
