#pragma once

#include "canopy/raster.hpp"

#include <filesystem>

namespace canopy {

enum class TiffCompression { none, deflate };

struct SaveOptions {
    TiffCompression compression = TiffCompression::deflate;
};

// Loads a GeoTIFF (.tif/.tiff) or the plain interchange pair (.json header
// beside a .bin of little-endian row-major float32 planes).
//
// GeoTIFF subset: stripped layout, contiguous or separate planes, no or
// deflate compression, uint8/uint16/int16/float32 samples. Integer samples
// are normalized to [0, 1] (int16 to [-1, 1]) and the source type is kept as
// the raster's storage type.
MultibandRaster load_raster(const std::filesystem::path& path);

// Writes the raster in the format implied by the extension. Integer storage
// types are scaled back and rounded, so load(save(r)) reproduces r exactly.
void save_raster(const MultibandRaster& raster, const std::filesystem::path& path,
                 const SaveOptions& options = {});

}  // namespace canopy
