#pragma once

#include "canopy/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace canopy {

inline constexpr int kTileSize = 256;
inline constexpr int kMaxZoom = 22;
inline constexpr double kEarthRadius = 6378137.0;
inline constexpr double kMercatorHalfExtent = 20037508.342789244;

struct TileAddress {
    std::string layer;
    int z = 0;
    long long x = 0;
    long long y = 0;
};

// Throws ValidationError when z is outside 0..22 or x, y outside 0..2^z-1.
void validate(const TileAddress& addr);

struct MercatorBounds {
    double min_x, min_y, max_x, max_y;
};

// XYZ scheme: y = 0 is the northernmost row.
MercatorBounds tile_bounds(int z, long long x, long long y);
Eigen::Vector2d lonlat_to_mercator(double lon, double lat);
Eigen::Vector2d mercator_to_lonlat(double x, double y);

struct ColorStop {
    double value;
    std::array<std::uint8_t, 3> rgb;
};

// Diverging red-yellow-green map over [-1, 1]; values are clamped.
const std::vector<ColorStop>& index_colormap();
std::array<std::uint8_t, 3> index_color(double value);

enum class LayerKind { rgb, ndvi, ndre };
std::string to_string(LayerKind k);
LayerKind parse_layer_kind(const std::string& text);

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::rgb;
    MultibandRaster raster;  // EPSG:3857 or EPSG:4326
};

// Checks CRS and bands for the kind.
void validate(const Layer& layer);
Layer load_layer(const std::string& name, LayerKind kind, const std::filesystem::path& path);

// Bounds of the layer in web-mercator meters.
MercatorBounds layer_bounds(const Layer& layer);

// 256 x 256 RGBA, row-major, 4 bytes per pixel. Pixels without data are
// fully transparent. A tile pixel covering several raster pixels averages
// them; otherwise the raster pixel under its centre is used.
std::vector<std::uint8_t> render_tile_rgba(const Layer& layer, int z, long long x, long long y);

std::string encode_png(const std::vector<std::uint8_t>& rgba, int width, int height);
std::vector<std::uint8_t> decode_png(const std::string& bytes, int& width, int& height);

std::string render_tile(const Layer& layer, const TileAddress& addr);

}  // namespace canopy
