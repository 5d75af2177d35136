#pragma once

#include "canopy/chips.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace canopy {

struct FeatureSource {
    enum class Kind { builtin_descriptor, imported_embedding };
    Kind kind = Kind::builtin_descriptor;
    std::string name = "builtin";
};

// Row i holds the feature vector of crown_ids[i].
struct FeatureMatrix {
    std::vector<std::string> crown_ids;
    Eigen::MatrixXd values;
    FeatureSource source;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }
};

// Throws ValidationError on row/id count mismatch, empty feature set, or a
// non-finite entry (reported with its row and column).
void validate(const FeatureMatrix& features);

// Builtin descriptor layout per band: mean, std, skewness, then a 16-bin
// histogram over [0, 1]; finally an 8-bin gradient orientation histogram of
// the band-averaged image.
inline constexpr Index kMomentFeatures = 3;
inline constexpr Index kIntensityBins = 16;
inline constexpr Index kOrientationBins = 8;
inline constexpr Index kMinFeatureSide = 16;

constexpr Index builtin_feature_length(Index n_bands) {
    return n_bands * (kMomentFeatures + kIntensityBins) + kOrientationBins;
}

enum class BackgroundFill { band_mean, zero };

struct FeatureOptions {
    Index side = 64;
    Index min_pixels = kDefaultMinChipPixels;
    BackgroundFill background = BackgroundFill::band_mean;
};

// Nearest-neighbour resampling of the chip's unmasked extent to side x side.
// Returns the resampled planes (background filled) and the resampled mask.
struct ResampledChip {
    std::vector<Plane> planes;
    Mask mask;
};
ResampledChip resample_chip(const CrownChip& chip, Index side, BackgroundFill background);

Eigen::VectorXd extract_builtin_features(const CrownChip& chip, const FeatureOptions& options = {});

FeatureMatrix builtin_feature_matrix(std::span<const CrownChip> chips, const FeatureOptions& options = {});

// Embedding CSV: optional first line "# source=<name>", header
// crown_id,dim_0,...,dim_{d-1}. Rows are reordered to follow `crown_ids`.
FeatureMatrix import_embeddings(const std::vector<std::string>& crown_ids, const std::filesystem::path& embedding_file);

// Crown ids are taken from the chip manifest's crown_id column.
FeatureMatrix import_embeddings(const std::filesystem::path& manifest, const std::filesystem::path& embedding_file);

void write_embeddings(const FeatureMatrix& features, const std::filesystem::path& path);

}  // namespace canopy
