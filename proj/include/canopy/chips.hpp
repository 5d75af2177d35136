#pragma once

#include "canopy/geometry.hpp"
#include "canopy/raster.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace canopy {

// Pixels whose centre lies inside the exterior ring (even-odd rule).
// Throws ValidationError for zero-area polygons.
Mask rasterize_polygon(const CrownPolygon& polygon, const GeoTransform& transform, Index width, Index height);

// Rasterized footprint restricted to the window that can contain it.
struct Footprint {
    PixelWindow window;  // empty when the polygon misses the raster
    Mask inside;         // window-sized
};
Footprint rasterize_footprint(const CrownPolygon& polygon, const GeoTransform& transform, Index width, Index height);

struct CrownChip {
    std::string crown_id;
    // Pixel bounding box of the crown; pixels outside the crown are nodata.
    MultibandRaster patch;
    // Inside the crown and valid in every band.
    Mask mask;
    Index valid_pixels = 0;
    std::string source_id;
    std::optional<std::string> species;
};

struct SkippedCrown {
    std::string crown_id;
    std::string reason;
};

struct ChipExtraction {
    std::vector<CrownChip> chips;
    std::vector<SkippedCrown> skipped;
};

inline constexpr Index kDefaultMinChipPixels = 64;

// One chip per crown with at least `min_pixels` valid pixels, in crown
// order. Values are copied without resampling. Throws on CRS mismatch.
ChipExtraction extract_chips(const MultibandRaster& ortho, const CrownCollection& crowns,
                             Index min_pixels = kDefaultMinChipPixels, const std::string& source_id = {});

// Writes `<dir>/<crown_id>.tif` per chip and the manifest
// (crown_id,file,valid_pixels,species_label). File paths are relative to the
// manifest's directory.
void write_chips(const std::vector<CrownChip>& chips, const std::filesystem::path& dir,
                 const std::filesystem::path& manifest);
std::vector<CrownChip> read_chips(const std::filesystem::path& manifest);

}  // namespace canopy
