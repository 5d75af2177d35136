#pragma once

#include "canopy/chips.hpp"
#include "canopy/clustering.hpp"
#include "canopy/features.hpp"
#include "canopy/filters.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace canopy {

enum class Preprocess { clahe, clahe_denoising };
std::string to_string(Preprocess p);
Preprocess parse_preprocess(const std::string& name);

enum class Reduction { pca, imported };
std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& name);

struct FeatureSourceConfig {
    std::string name;
    FeatureSource::Kind kind = FeatureSource::Kind::builtin_descriptor;
    // Embedding files per preprocess variant (imported embeddings only).
    std::map<Preprocess, std::filesystem::path> files;
    // Pre-reduced vectors per preprocess variant, used by Reduction::imported.
    std::map<Preprocess, std::filesystem::path> reduced;
};

struct GridConfig {
    std::vector<Preprocess> preprocess{Preprocess::clahe, Preprocess::clahe_denoising};
    std::vector<FeatureSourceConfig> features;
    std::vector<Reduction> reductions{Reduction::pca, Reduction::imported};
    std::vector<ClusterAlgorithm> clusterers{std::begin(kAllClusterAlgorithms), std::end(kAllClusterAlgorithms)};
    int k = 0;  // 0 = number of distinct species
    double pca_variance = 0.95;
    ClaheOptions clahe{};
    Index denoise_window = 3;
    FeatureOptions feature_options{};
    ClusterParams cluster_params{};
    unsigned threads = 0;  // 0 = hardware concurrency
};

// Relative paths resolve against the config file's directory.
GridConfig read_grid_config(const std::filesystem::path& path);
GridConfig parse_grid_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});

struct Combination {
    Preprocess preprocess;
    std::string features;
    Reduction reduction;
    ClusterAlgorithm clusterer;
};

// Cartesian product in config order (preprocess outermost, clusterer innermost).
std::vector<Combination> enumerate_combinations(const GridConfig& config);

struct ClusterExperimentResult {
    Combination combination;
    int k = 0;
    std::vector<double> f1;           // per repeat
    std::vector<double> weighted_f1;  // per repeat
    std::vector<int> assigned_clusters;
    double mean_f1 = 0.0;
    double mean_weighted_f1 = 0.0;
    int n_repeats = 0;
};

// Reads `crown_id,species` rows.
std::unordered_map<std::string, std::string> read_labels_csv(const std::filesystem::path& path);

// Each combination runs n_repeats times with seeds base_seed + r. Results are
// sorted by mean F1, descending, ties in enumeration order.
std::vector<ClusterExperimentResult> run_experiment_grid(const std::vector<CrownChip>& chips,
                                                         const std::unordered_map<std::string, std::string>& labels,
                                                         const GridConfig& config, int n_repeats,
                                                         std::uint64_t base_seed);

inline constexpr const char* kGridReportHeader =
    "preprocess,features,reduction,clusterer,k,mean_f1,mean_weighted_f1,n_repeats";
void write_grid_report(std::ostream& out, const std::vector<ClusterExperimentResult>& results);

}  // namespace canopy
