#pragma once

#include "canopy/chips.hpp"
#include "canopy/geometry.hpp"
#include "canopy/raster.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace canopy {

enum class VegetationIndex { ndvi, ndre };

std::string_view to_string(VegetationIndex index);
VegetationIndex parse_vegetation_index(std::string_view name);

// (a - b) / (a + b) per pixel into a single float band named `name` with a
// NaN nodata marker. Zero denominators and pixels invalid in either input
// band become nodata.
MultibandRaster normalized_difference(const MultibandRaster& raster, std::string_view band_a,
                                      std::string_view band_b, std::string name);

// NDVI = (NIR - Red) / (NIR + Red) from bands "nir" and "red".
MultibandRaster compute_ndvi(const MultibandRaster& raster);

// NDRE = (RE - Red) / (RE + Red) from bands "rededge" and "red". Note this
// pairs red edge with red; the variant pairing NIR with red edge is not used.
MultibandRaster compute_ndre(const MultibandRaster& raster);

MultibandRaster compute_index(const MultibandRaster& raster, VegetationIndex index);

// Linear interpolation between order statistics at h = (n - 1) * q over a
// sorted sample.
double percentile_sorted(std::span<const double> sorted, double q);

struct ZonalStats {
    std::string crown_id;
    Index count = 0;
    double mean = 0, median = 0, std = 0, min = 0, max = 0, p10 = 0, p90 = 0;
};

// Population statistics (divisor n) of a non-empty sample.
ZonalStats summarize(std::string crown_id, std::vector<double> values);

struct ZonalResult {
    std::vector<ZonalStats> stats;
    std::vector<SkippedCrown> skipped;
};

// Statistics of the first band under each crown footprint, valid pixels only.
// Crowns without valid pixels are skipped ("no coverage" outside the raster,
// "all nodata" otherwise). Throws on CRS mismatch.
ZonalResult zonal_stats(const MultibandRaster& index, const CrownCollection& crowns);

// crown_id,count,mean,median,std,min,max,p10,p90
void write_stats_csv(const std::vector<ZonalStats>& stats, const std::filesystem::path& path);
std::vector<ZonalStats> read_stats_csv(const std::filesystem::path& path);

}  // namespace canopy
