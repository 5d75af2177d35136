#pragma once

#include "canopy/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace canopy {

enum class ClusterAlgorithm { kmeans_pp, mean_shift, fuzzy_cmeans, agglomerative, optics };

std::string to_string(ClusterAlgorithm a);
ClusterAlgorithm parse_cluster_algorithm(const std::string& name);
inline constexpr ClusterAlgorithm kAllClusterAlgorithms[] = {
    ClusterAlgorithm::kmeans_pp, ClusterAlgorithm::mean_shift, ClusterAlgorithm::fuzzy_cmeans,
    ClusterAlgorithm::agglomerative, ClusterAlgorithm::optics};

struct ClusterParams {
    int k = 0;
    std::optional<double> bandwidth;  // empty = automatic
    int min_samples = 5;
    double xi = 0.05;
    int max_iter = 300;
    double tol = 1e-6;
    int n_init = 10;
    double fuzzifier = 2.0;
    double membership_tol = 1e-5;
    int fuzzy_max_iter = 1000;
};

struct ClusterAssignment {
    std::vector<std::string> crown_ids;
    std::vector<int> labels;  // -1 = noise
    ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans_pp;
    ClusterParams params;
    std::optional<Eigen::MatrixXd> memberships;

    int n_clusters() const;
};

ClusterAssignment cluster(const FeatureMatrix& features, ClusterAlgorithm algorithm, const ClusterParams& params,
                          std::uint64_t seed);

// Uniform double in [0, 1) from raw 64-bit output; identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline Index uniform_index(std::mt19937_64& rng, Index n) {
    return std::min<Index>(n - 1, static_cast<Index>(uniform01(rng) * static_cast<double>(n)));
}

// Rows of x are points.
Eigen::MatrixXd kmeans_pp_seeds(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng);

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centers;
    std::vector<double> inertia_history;  // one entry per assignment step
    int iterations = 0;
    double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};
// Best of n_init seeded runs by final inertia; the first wins ties.
KMeansResult kmeans_pp(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iter = 300, double tol = 1e-6,
                       int n_init = 10);

struct FuzzyResult {
    Eigen::MatrixXd memberships;  // n x k
    Eigen::MatrixXd centers;
    std::vector<int> labels;
    int iterations = 0;
};
Eigen::MatrixXd fuzzy_memberships(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, double m);
FuzzyResult fuzzy_cmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, double m = 2.0, double tol = 1e-5,
                         int max_iter = 1000);

// Ward merge in squared-distance units; a and b are cluster ids where ids
// 0..n-1 are points and n+i is the cluster formed by merge i.
struct WardMerge {
    Index a = 0, b = 0;
    double height = 0.0;
    Index size = 0;
};
std::vector<WardMerge> ward_linkage(const Eigen::MatrixXd& x);
std::vector<int> cut_linkage(const std::vector<WardMerge>& merges, Index n, int k);
std::vector<int> ward_agglomerative(const Eigen::MatrixXd& x, int k);

double auto_bandwidth(const Eigen::MatrixXd& x, std::uint64_t seed);
struct MeanShiftResult {
    std::vector<int> labels;
    Eigen::MatrixXd modes;
    double bandwidth = 0.0;
};
MeanShiftResult mean_shift(const Eigen::MatrixXd& x, double bandwidth, int max_iter = 300);

struct OpticsResult {
    std::vector<Index> ordering;
    Eigen::VectorXd reachability;  // indexed by point, +inf when undefined
    Eigen::VectorXd core_distance;
    std::vector<Index> predecessor;  // -1 when undefined
    std::vector<int> labels;
};
OpticsResult optics(const Eigen::MatrixXd& x, int min_samples, double xi = 0.05, int min_cluster_size = 0);

}  // namespace canopy
