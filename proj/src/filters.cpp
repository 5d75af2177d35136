#include "canopy/filters.hpp"

namespace canopy {

MultibandRaster apply_clahe(const MultibandRaster& raster, const ClaheOptions& options) {
    std::vector<Band> out;
    out.reserve(raster.band_count());
    for (const auto& b : raster.bands()) {
        out.push_back({b.name, clahe_plane(b.values, b.valid_mask(), options), b.nodata});
    }
    auto result = raster.with_bands(std::move(out));
    result.set_metadata("clahe", "per-band");
    return result;
}

MultibandRaster denoise(const MultibandRaster& raster, Index window) {
    std::vector<Band> out;
    out.reserve(raster.band_count());
    for (const auto& b : raster.bands()) {
        out.push_back({b.name, median_plane(b.values, b.valid_mask(), window), b.nodata});
    }
    return raster.with_bands(std::move(out));
}

}  // namespace canopy
