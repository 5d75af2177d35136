#include "canopy/tiles.hpp"

#include "canopy/error.hpp"
#include "canopy/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <numbers>

namespace canopy {

void validate(const TileAddress& a) {
    if (a.z < 0 || a.z > kMaxZoom) {
        throw ValidationError("zoom " + std::to_string(a.z) + " outside 0.." + std::to_string(kMaxZoom), "z");
    }
    const long long n = 1LL << a.z;
    if (a.x < 0 || a.x >= n) throw ValidationError("tile x " + std::to_string(a.x) + " outside 0.." + std::to_string(n - 1), "x");
    if (a.y < 0 || a.y >= n) throw ValidationError("tile y " + std::to_string(a.y) + " outside 0.." + std::to_string(n - 1), "y");
}

MercatorBounds tile_bounds(int z, long long x, long long y) {
    const double span = 2.0 * kMercatorHalfExtent / static_cast<double>(1LL << z);
    return {-kMercatorHalfExtent + static_cast<double>(x) * span, kMercatorHalfExtent - static_cast<double>(y + 1) * span,
            -kMercatorHalfExtent + static_cast<double>(x + 1) * span, kMercatorHalfExtent - static_cast<double>(y) * span};
}

Eigen::Vector2d lonlat_to_mercator(double lon, double lat) {
    constexpr double pi = std::numbers::pi;
    return {kEarthRadius * lon * pi / 180.0, kEarthRadius * std::log(std::tan(pi / 4.0 + lat * pi / 360.0))};
}

Eigen::Vector2d mercator_to_lonlat(double x, double y) {
    constexpr double pi = std::numbers::pi;
    return {x / kEarthRadius * 180.0 / pi, (2.0 * std::atan(std::exp(y / kEarthRadius)) - pi / 2.0) * 180.0 / pi};
}

const std::vector<ColorStop>& index_colormap() {
    static const std::vector<ColorStop> stops{{-1.0, {165, 0, 38}},
                                              {-0.5, {244, 109, 67}},
                                              {0.0, {255, 255, 191}},
                                              {0.5, {102, 189, 99}},
                                              {1.0, {0, 104, 55}}};
    return stops;
}

std::array<std::uint8_t, 3> index_color(double v) {
    const auto& s = index_colormap();
    v = std::clamp(v, s.front().value, s.back().value);
    std::size_t i = 0;
    while (i + 2 < s.size() && v > s[i + 1].value) ++i;
    const double t = (v - s[i].value) / (s[i + 1].value - s[i].value);
    std::array<std::uint8_t, 3> c{};
    for (int k = 0; k < 3; ++k) {
        const double a = s[i].rgb[static_cast<std::size_t>(k)], b = s[i + 1].rgb[static_cast<std::size_t>(k)];
        c[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(std::lround(a + (b - a) * t));
    }
    return c;
}

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::rgb: return "rgb";
        case LayerKind::ndvi: return "ndvi";
        case LayerKind::ndre: return "ndre";
    }
    return "rgb";
}

LayerKind parse_layer_kind(const std::string& text) {
    if (text == "rgb") return LayerKind::rgb;
    if (text == "ndvi") return LayerKind::ndvi;
    if (text == "ndre") return LayerKind::ndre;
    throw ValidationError("unknown layer kind '" + text + "' (expected rgb, ndvi or ndre)", "kind");
}

namespace {

bool is_mercator(const std::string& crs) { return crs == "EPSG:3857"; }

const Band& index_band(const Layer& l) {
    const std::string name = to_string(l.kind);
    if (const Band* b = l.raster.find_band(name)) return *b;
    if (l.raster.band_count() == 1) return l.raster.bands().front();
    throw ValidationError("layer '" + l.name + "' needs a band named '" + name + "' or a single band", "bands");
}

}  // namespace

void validate(const Layer& l) {
    if (l.name.empty()) throw ValidationError("layer without a name", "name");
    if (l.raster.empty()) throw ValidationError("layer '" + l.name + "' has an empty raster", "raster");
    if (l.raster.crs() != "EPSG:3857" && l.raster.crs() != "EPSG:4326") {
        throw ValidationError("layer '" + l.name + "' must be in EPSG:3857 or EPSG:4326, not '" + l.raster.crs() + "'",
                              "crs");
    }
    if (l.kind == LayerKind::rgb) {
        for (const char* b : {"red", "green", "blue"}) l.raster.band(b);
    } else {
        index_band(l);
    }
}

Layer load_layer(const std::string& name, LayerKind kind, const std::filesystem::path& path) {
    Layer l{name, kind, load_raster(path)};
    validate(l);
    return l;
}

namespace {

// Layer CRS coordinate of a mercator coordinate along one axis.
double to_layer_x(const Layer& l, double mx) { return is_mercator(l.raster.crs()) ? mx : mercator_to_lonlat(mx, 0.0).x(); }
double to_layer_y(const Layer& l, double my) { return is_mercator(l.raster.crs()) ? my : mercator_to_lonlat(0.0, my).y(); }
double from_layer_x(const Layer& l, double x) { return is_mercator(l.raster.crs()) ? x : lonlat_to_mercator(x, 0.0).x(); }
double from_layer_y(const Layer& l, double y) {
    if (is_mercator(l.raster.crs())) return y;
    return lonlat_to_mercator(0.0, std::clamp(y, -85.0511287798066, 85.0511287798066)).y();
}

struct AxisSpan {
    Index lo = 0, hi = -1;  // inclusive raster index range, empty when hi < lo
};

// Raster indices whose centres fall inside [a, b] (fractional pixel units);
// the index under the centre when none does.
AxisSpan span(double a, double b, Index n) {
    if (a > b) std::swap(a, b);
    Index lo = static_cast<Index>(std::ceil(a - 0.5)), hi = static_cast<Index>(std::floor(b - 0.5));
    if (lo > hi) lo = hi = static_cast<Index>(std::floor(0.5 * (a + b)));
    lo = std::max<Index>(lo, 0);
    hi = std::min<Index>(hi, n - 1);
    return {lo, hi};
}

}  // namespace

MercatorBounds layer_bounds(const Layer& l) {
    const GeoTransform& t = l.raster.transform();
    const Eigen::Vector2d a = t.pixel_to_world(0.0, 0.0);
    const Eigen::Vector2d b = t.pixel_to_world(static_cast<double>(l.raster.width()), static_cast<double>(l.raster.height()));
    const double x0 = from_layer_x(l, std::min(a.x(), b.x())), x1 = from_layer_x(l, std::max(a.x(), b.x()));
    const double y0 = from_layer_y(l, std::min(a.y(), b.y())), y1 = from_layer_y(l, std::max(a.y(), b.y()));
    return {x0, y0, x1, y1};
}

std::vector<std::uint8_t> render_tile_rgba(const Layer& l, int z, long long x, long long y) {
    validate(TileAddress{l.name, z, x, y});
    const MercatorBounds tb = tile_bounds(z, x, y);
    const double res = (tb.max_x - tb.min_x) / kTileSize;
    const GeoTransform& gt = l.raster.transform();
    const Index w = l.raster.width(), h = l.raster.height();

    std::vector<AxisSpan> cols(kTileSize), rows(kTileSize);
    for (int j = 0; j < kTileSize; ++j) {
        const double a = to_layer_x(l, tb.min_x + j * res), b = to_layer_x(l, tb.min_x + (j + 1) * res);
        cols[static_cast<std::size_t>(j)] = span((a - gt.origin_x) / gt.pixel_size_x, (b - gt.origin_x) / gt.pixel_size_x, w);
    }
    for (int i = 0; i < kTileSize; ++i) {
        const double a = to_layer_y(l, tb.max_y - i * res), b = to_layer_y(l, tb.max_y - (i + 1) * res);
        rows[static_cast<std::size_t>(i)] = span((a - gt.origin_y) / gt.pixel_size_y, (b - gt.origin_y) / gt.pixel_size_y, h);
    }

    std::vector<const Band*> bands;
    if (l.kind == LayerKind::rgb) {
        for (const char* b : {"red", "green", "blue"}) bands.push_back(&l.raster.band(b));
    } else {
        bands.push_back(&index_band(l));
    }

    std::vector<std::uint8_t> out(static_cast<std::size_t>(kTileSize * kTileSize * 4), 0);
    std::vector<double> acc(bands.size());
    for (int i = 0; i < kTileSize; ++i) {
        const AxisSpan& rs = rows[static_cast<std::size_t>(i)];
        if (rs.hi < rs.lo) continue;
        for (int j = 0; j < kTileSize; ++j) {
            const AxisSpan& cs = cols[static_cast<std::size_t>(j)];
            if (cs.hi < cs.lo) continue;
            std::fill(acc.begin(), acc.end(), 0.0);
            long long n = 0;
            for (Index r = rs.lo; r <= rs.hi; ++r)
                for (Index c = cs.lo; c <= cs.hi; ++c) {
                    bool ok = true;
                    for (const Band* b : bands) ok = ok && b->is_valid(r, c);
                    if (!ok) continue;
                    for (std::size_t k = 0; k < bands.size(); ++k) acc[k] += bands[k]->values(r, c);
                    ++n;
                }
            if (n == 0) continue;
            std::uint8_t* px = &out[static_cast<std::size_t>((i * kTileSize + j) * 4)];
            if (l.kind == LayerKind::rgb) {
                for (int k = 0; k < 3; ++k) {
                    const double v = acc[static_cast<std::size_t>(k)] / static_cast<double>(n);
                    px[k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                }
            } else {
                const auto c = index_color(acc[0] / static_cast<double>(n));
                std::memcpy(px, c.data(), 3);
            }
            px[3] = 255;
        }
    }
    return out;
}

namespace {

struct PngBuffer {
    std::string* out = nullptr;
    const std::string* in = nullptr;
    std::size_t pos = 0;
};

void png_write_to_string(png_structp png, png_bytep data, png_size_t len) {
    auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
    buf->out->append(reinterpret_cast<const char*>(data), len);
}

void png_read_from_string(png_structp png, png_bytep data, png_size_t len) {
    auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
    if (buf->pos + len > buf->in->size()) png_error(png, "truncated PNG");
    std::memcpy(data, buf->in->data() + buf->pos, len);
    buf->pos += len;
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_quiet_warning(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const std::vector<std::uint8_t>& rgba, int width, int height) {
    if (rgba.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4) {
        throw ValidationError("RGBA buffer size does not match the image size", "image");
    }
    std::string out;
    PngBuffer buf{&out, nullptr, 0};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
    if (!png) throw IoError("cannot create PNG writer");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(png, &buf, png_write_to_string, png_flush_noop);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGBA,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
        png_write_row(png, const_cast<png_bytep>(rgba.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(width) * 4));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::vector<std::uint8_t> decode_png(const std::string& bytes, int& width, int& height) {
    PngBuffer buf{nullptr, &bytes, 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet_error, png_quiet_warning);
    if (!png) throw IoError("cannot create PNG reader");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> pixels;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("invalid PNG data", "png");
    }
    png_set_read_fn(png, &buf, png_read_from_string);
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGBA || png_get_bit_depth(png, info) != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError("only 8-bit RGBA PNG is supported", "png");
    }
    pixels.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4);
    for (int r = 0; r < height; ++r) png_read_row(png, pixels.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(width) * 4, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pixels;
}

std::string render_tile(const Layer& layer, const TileAddress& addr) {
    return encode_png(render_tile_rgba(layer, addr.z, addr.x, addr.y), kTileSize, kTileSize);
}

}  // namespace canopy
