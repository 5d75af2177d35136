#include "canopy/raster.hpp"

#include "canopy/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace canopy {

GeoTransform GeoTransform::from_gdal(const std::array<double, 6>& gt) {
    if (gt[2] != 0.0 || gt[4] != 0.0) {
        throw UnsupportedError("rotated geotransforms are not supported", "transform");
    }
    return {gt[0], gt[3], gt[1], gt[5]};
}

double sample_scale(SampleType type) {
    switch (type) {
        case SampleType::uint8: return 255.0;
        case SampleType::uint16: return 65535.0;
        case SampleType::int16: return 32767.0;
        case SampleType::float32: break;
    }
    return 1.0;
}

std::string_view to_string(SampleType type) {
    switch (type) {
        case SampleType::uint8: return "uint8";
        case SampleType::uint16: return "uint16";
        case SampleType::int16: return "int16";
        case SampleType::float32: break;
    }
    return "float32";
}

bool Band::is_valid_value(float v) const {
    if (!std::isfinite(v)) return false;
    return !(nodata && v == *nodata);
}

Mask Band::valid_mask() const {
    Mask m(values.rows(), values.cols());
    for (Index r = 0; r < values.rows(); ++r)
        for (Index c = 0; c < values.cols(); ++c) m(r, c) = is_valid_value(values(r, c));
    return m;
}

MultibandRaster::MultibandRaster(std::vector<Band> bands, GeoTransform transform, std::string crs)
    : bands_(std::move(bands)), transform_(transform), crs_(std::move(crs)) {
    if (!(transform_.pixel_size_x > 0.0)) {
        throw ValidationError("pixel_size_x must be positive", "transform");
    }
    if (transform_.pixel_size_y == 0.0 || !std::isfinite(transform_.pixel_size_y)) {
        throw ValidationError("pixel_size_y must be non-zero", "transform");
    }
    std::set<std::string> names;
    for (const auto& b : bands_) {
        if (b.name.empty()) throw ValidationError("band name must not be empty", "bands");
        if (!names.insert(b.name).second) {
            throw ValidationError("duplicate band name '" + b.name + "'", "bands");
        }
    }
    if (!bands_.empty()) {
        height_ = bands_.front().values.rows();
        width_ = bands_.front().values.cols();
        for (const auto& b : bands_) {
            if (b.values.rows() != height_ || b.values.cols() != width_) {
                throw ValidationError("band '" + b.name + "' has a different size", "bands");
            }
        }
    }
}

const Band* MultibandRaster::find_band(std::string_view name) const {
    for (const auto& b : bands_)
        if (b.name == name) return &b;
    return nullptr;
}

const Band& MultibandRaster::band(std::string_view name) const {
    if (const Band* b = find_band(name)) return *b;
    throw ValidationError("raster has no band named '" + std::string(name) + "'", std::string(name));
}

std::vector<std::string> MultibandRaster::band_names() const {
    std::vector<std::string> out;
    out.reserve(bands_.size());
    for (const auto& b : bands_) out.push_back(b.name);
    return out;
}

Mask MultibandRaster::valid_mask() const {
    Mask m = Mask::Constant(height_, width_, true);
    for (const auto& b : bands_) m = m && b.valid_mask();
    return m;
}

MultibandRaster MultibandRaster::window(Index row0, Index col0, Index rows, Index cols) const {
    if (row0 < 0 || col0 < 0 || rows < 0 || cols < 0 || row0 + rows > height_ || col0 + cols > width_) {
        throw ValidationError("window outside raster bounds", "window");
    }
    std::vector<Band> out;
    out.reserve(bands_.size());
    for (const auto& b : bands_) {
        out.push_back({b.name, b.values.block(row0, col0, rows, cols), b.nodata});
    }
    MultibandRaster w(std::move(out), transform_.shifted(row0, col0), crs_);
    w.metadata_ = metadata_;
    w.storage_type_ = storage_type_;
    return w;
}

MultibandRaster MultibandRaster::with_bands(std::vector<Band> bands) const {
    MultibandRaster r(std::move(bands), transform_, crs_);
    r.metadata_ = metadata_;
    r.storage_type_ = storage_type_;
    return r;
}

bool same_geometry(const MultibandRaster& a, const MultibandRaster& b) {
    if (a.width() != b.width() || a.height() != b.height()) return false;
    if (!(a.transform() == b.transform()) || a.crs() != b.crs()) return false;
    if (a.band_count() != b.band_count()) return false;
    for (std::size_t i = 0; i < a.band_count(); ++i) {
        if ((a.bands()[i].valid_mask() != b.bands()[i].valid_mask()).any()) return false;
    }
    return true;
}

void validate(const TileSpec& spec) {
    if (spec.tile_size <= 0) throw ValidationError("tile_size must be positive", "tile_size");
    if (spec.overlap < 0 || spec.overlap >= spec.tile_size) {
        throw ValidationError("overlap must be in [0, tile_size)", "overlap");
    }
}

std::vector<TileWindow> tile_windows(Index width, Index height, const TileSpec& spec) {
    validate(spec);
    std::vector<TileWindow> out;
    if (width <= 0 || height <= 0) return out;
    const Index n_rows = (height + spec.tile_size - 1) / spec.tile_size;
    const Index n_cols = (width + spec.tile_size - 1) / spec.tile_size;
    out.reserve(static_cast<std::size_t>(n_rows * n_cols));
    for (Index tr = 0; tr < n_rows; ++tr) {
        for (Index tc = 0; tc < n_cols; ++tc) {
            PixelWindow interior{tr * spec.tile_size, tc * spec.tile_size,
                                 std::min(spec.tile_size, height - tr * spec.tile_size),
                                 std::min(spec.tile_size, width - tc * spec.tile_size)};
            const Index r0 = std::max<Index>(0, interior.row0 - spec.overlap);
            const Index c0 = std::max<Index>(0, interior.col0 - spec.overlap);
            const Index r1 = std::min(height, interior.row0 + interior.rows + spec.overlap);
            const Index c1 = std::min(width, interior.col0 + interior.cols + spec.overlap);
            out.push_back({{tr, tc}, interior, {r0, c0, r1 - r0, c1 - c0}});
        }
    }
    return out;
}

std::vector<Tile> iterate_tiles(const MultibandRaster& raster, const TileSpec& spec) {
    std::vector<Tile> out;
    for (const auto& w : tile_windows(raster.width(), raster.empty() ? 0 : raster.height(), spec)) {
        out.push_back({w.index, w.interior, w.extent,
                       raster.window(w.extent.row0, w.extent.col0, w.extent.rows, w.extent.cols)});
    }
    return out;
}

}  // namespace canopy
