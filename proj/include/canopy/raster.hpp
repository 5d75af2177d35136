#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace canopy {

using Index = Eigen::Index;

// Row-major 2-D planes. Row index is the image row (north to south for
// north-up rasters), column index the image column.
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<float>;
using Mask = PlaneT<bool>;
using LabelPlane = PlaneT<std::int32_t>;

// Axis-aligned affine pixel -> world mapping. Pixel (col, row) corner
// coordinates map to (origin_x + col * pixel_size_x, origin_y + row * pixel_size_y).
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size_x = 1.0;
    double pixel_size_y = -1.0;

    Eigen::Vector2d pixel_to_world(double col, double row) const {
        return {origin_x + col * pixel_size_x, origin_y + row * pixel_size_y};
    }
    Eigen::Vector2d pixel_center(Index row, Index col) const {
        return pixel_to_world(static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5);
    }
    // Fractional (col, row) of a world point.
    Eigen::Vector2d world_to_pixel(double x, double y) const {
        return {(x - origin_x) / pixel_size_x, (y - origin_y) / pixel_size_y};
    }
    GeoTransform shifted(Index row0, Index col0) const {
        auto o = pixel_to_world(static_cast<double>(col0), static_cast<double>(row0));
        return {o.x(), o.y(), pixel_size_x, pixel_size_y};
    }

    // GDAL ordering: origin_x, pixel_size_x, 0, origin_y, 0, pixel_size_y.
    std::array<double, 6> to_gdal() const {
        return {origin_x, pixel_size_x, 0.0, origin_y, 0.0, pixel_size_y};
    }
    static GeoTransform from_gdal(const std::array<double, 6>& gt);

    bool operator==(const GeoTransform&) const = default;
};

// On-disk sample type a raster was read from. Integer sources are
// normalized to [0, 1] on load and scaled back on save.
enum class SampleType { float32, uint8, uint16, int16 };

double sample_scale(SampleType type);
std::string_view to_string(SampleType type);

struct Band {
    std::string name;
    Plane values;
    std::optional<float> nodata;

    bool is_valid(Index row, Index col) const { return is_valid_value(values(row, col)); }
    bool is_valid_value(float v) const;
    Mask valid_mask() const;
};

// Georeferenced grid of named spectral bands. Treated as immutable once
// shared; every processing function returns a new raster.
class MultibandRaster {
public:
    MultibandRaster() = default;
    MultibandRaster(std::vector<Band> bands, GeoTransform transform, std::string crs);

    Index width() const { return width_; }
    Index height() const { return height_; }
    bool empty() const { return bands_.empty() || width_ == 0 || height_ == 0; }

    const std::vector<Band>& bands() const { return bands_; }
    std::size_t band_count() const { return bands_.size(); }
    const Band* find_band(std::string_view name) const;
    // Throws ValidationError naming the band when absent.
    const Band& band(std::string_view name) const;
    std::vector<std::string> band_names() const;

    const GeoTransform& transform() const { return transform_; }
    const std::string& crs() const { return crs_; }

    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    void set_metadata(std::string key, std::string value) { metadata_[std::move(key)] = std::move(value); }

    SampleType storage_type() const { return storage_type_; }
    void set_storage_type(SampleType type) { storage_type_ = type; }

    // Pixels valid in every band.
    Mask valid_mask() const;

    // Sub-window with a transform shifted to the window origin. Metadata and
    // storage type carry over.
    MultibandRaster window(Index row0, Index col0, Index rows, Index cols) const;

    // Same geometry and metadata, new bands.
    MultibandRaster with_bands(std::vector<Band> bands) const;

private:
    std::vector<Band> bands_;
    Index width_ = 0;
    Index height_ = 0;
    GeoTransform transform_;
    std::string crs_;
    std::map<std::string, std::string> metadata_;
    SampleType storage_type_ = SampleType::float32;
};

// True when both rasters have the same size, transform, CRS and per-band
// validity masks.
bool same_geometry(const MultibandRaster& a, const MultibandRaster& b);

struct TileSpec {
    Index tile_size = 256;
    Index overlap = 0;
};

struct TileIndex {
    Index row = 0;
    Index col = 0;
    bool operator==(const TileIndex&) const = default;
};

struct PixelWindow {
    Index row0 = 0;
    Index col0 = 0;
    Index rows = 0;
    Index cols = 0;
    bool operator==(const PixelWindow&) const = default;
};

struct TileWindow {
    TileIndex index;
    PixelWindow interior;  // partition cell, no overlap
    PixelWindow extent;    // interior grown by overlap, clipped to the raster
};

struct Tile {
    TileIndex index;
    PixelWindow interior;
    PixelWindow extent;
    MultibandRaster raster;  // covers `extent`
};

void validate(const TileSpec& spec);

// Row-major tile layout for a width x height grid. Edge tiles may be smaller.
std::vector<TileWindow> tile_windows(Index width, Index height, const TileSpec& spec);

// Materialized tiles in row-major order. An empty raster yields no tiles.
std::vector<Tile> iterate_tiles(const MultibandRaster& raster, const TileSpec& spec);

}  // namespace canopy
