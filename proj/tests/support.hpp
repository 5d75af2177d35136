#pragma once

#include "canopy/chips.hpp"
#include "canopy/inventory.hpp"
#include "canopy/itcd.hpp"
#include "canopy/raster.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace canopy::testing {

// Removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

MultibandRaster make_raster(std::vector<Band> bands, const std::string& crs = "EPSG:32632",
                            GeoTransform transform = {0.0, 100.0, 1.0, -1.0});

Plane random_plane(Index rows, Index cols, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f);

// Axis-aligned rectangle ring in world units, counter-clockwise.
Ring rect_ring(double x0, double y0, double x1, double y1);

// Sum of 2..6 Gaussian blobs (height 8..25 m, sigma 2..5 px) on a rows x cols grid.
struct BlobChm {
    MultibandRaster chm;
    std::vector<std::pair<double, double>> centres;  // (row, col)
};
BlobChm blob_chm(Index rows, Index cols, std::mt19937_64& rng);

// Four well separated Gaussian clumps, `per` points each, in `dim` dimensions.
struct Clumps {
    Eigen::MatrixXd x;
    std::vector<std::string> truth;
};
Clumps synthetic_clumps(int per, int dim, double separation, double spread, std::mt19937_64& rng);

// Chips of four "species" differing in mean reflectance, 3 bands, side x side.
std::vector<CrownChip> synthetic_chips(int per_species, Index side, std::mt19937_64& rng);

// Random cadastre of n trees in a 1000 m square; vitality and species mixed.
std::vector<TreeRecord> random_records(std::size_t n, std::mt19937_64& rng, const std::string& prefix = "T");

// Copy of `a` with random removals, additions and field edits.
std::vector<TreeRecord> mutate_records(const std::vector<TreeRecord>& a, std::mt19937_64& rng);

Timestamp ts(const std::string& iso);

}  // namespace canopy::testing
