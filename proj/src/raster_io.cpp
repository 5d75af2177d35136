#include "canopy/raster_io.hpp"

#include "canopy/error.hpp"

#include <nlohmann/json.hpp>
#include <tiffio.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <regex>
#include <sstream>

namespace canopy {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr ttag_t kTagModelPixelScale = 33550;
constexpr ttag_t kTagModelTiepoint = 33922;
constexpr ttag_t kTagModelTransformation = 34264;
constexpr ttag_t kTagGeoKeyDirectory = 34735;
constexpr ttag_t kTagGeoAsciiParams = 34737;
constexpr ttag_t kTagGdalMetadata = 42112;
constexpr ttag_t kTagGdalNodata = 42113;

constexpr std::uint16_t kKeyGeographicType = 2048;
constexpr std::uint16_t kKeyProjectedCsType = 3072;

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

// ---------------------------------------------------------------------------
// GeoTIFF tag registration

TIFFExtendProc g_parent_extender = nullptr;

void register_geotiff_tags(TIFF* tif) {
    static const TIFFFieldInfo fields[] = {
        {kTagModelPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScale")},
        {kTagModelTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepoint")},
        {kTagModelTransformation, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
         const_cast<char*>("ModelTransformation")},
        {kTagGeoKeyDirectory, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectory")},
        {kTagGeoAsciiParams, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GeoAsciiParams")},
        {kTagGdalMetadata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALMetadata")},
        {kTagGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataValue")},
    };
    TIFFMergeFieldInfo(tif, fields, sizeof(fields) / sizeof(fields[0]));
    if (g_parent_extender) g_parent_extender(tif);
}

void ensure_tags_registered() {
    static std::once_flag once;
    std::call_once(once, [] { g_parent_extender = TIFFSetTagExtender(register_geotiff_tags); });
}

struct TiffCloser {
    void operator()(TIFF* t) const {
        if (t) TIFFClose(t);
    }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

void silence_libtiff() {
    static std::once_flag once;
    std::call_once(once, [] {
        TIFFSetWarningHandler(nullptr);
        TIFFSetErrorHandler(nullptr);
    });
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string xml_unescape(std::string s) {
    const std::pair<const char*, const char*> reps[] = {
        {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&amp;", "&"}};
    for (const auto& [from, to] : reps) {
        std::string::size_type pos = 0;
        const std::size_t n = std::strlen(from);
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, n, to);
            pos += std::strlen(to);
        }
    }
    return s;
}

std::string format_float(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(std::numeric_limits<float>::max_digits10);
    os << v;
    return os.str();
}

std::optional<float> parse_nodata(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "nan") return std::numeric_limits<float>::quiet_NaN();
    try {
        return static_cast<float>(std::stod(s));
    } catch (const std::exception&) {
        throw ValidationError("unparseable nodata value '" + s + "'", "nodata");
    }
}

std::optional<int> epsg_code(const std::string& crs) {
    std::smatch m;
    static const std::regex re(R"(^\s*EPSG:(\d+)\s*$)", std::regex::icase);
    if (std::regex_match(crs, m, re)) return std::stoi(m[1]);
    return std::nullopt;
}

bool is_geographic_epsg(int code) { return code == 4326 || code == 4258 || code == 4269; }

// Common nodata marker in storage units, or nullopt when bands disagree.
std::optional<std::optional<float>> common_nodata(const MultibandRaster& r) {
    std::optional<float> first = r.bands().front().nodata;
    for (const auto& b : r.bands()) {
        const bool same = (b.nodata.has_value() == first.has_value()) &&
                          (!first || (std::isnan(*first) ? std::isnan(*b.nodata) : *b.nodata == *first));
        if (!same) return std::nullopt;
    }
    return first;
}

template <typename T>
T to_storage(float v, double scale) {
    if (!std::isfinite(v)) return T{0};
    const double s = std::round(static_cast<double>(v) * scale);
    const double lo = static_cast<double>(std::numeric_limits<T>::lowest());
    const double hi = static_cast<double>(std::numeric_limits<T>::max());
    return static_cast<T>(std::clamp(s, lo, hi));
}

// ---------------------------------------------------------------------------
// GeoTIFF read

MultibandRaster read_geotiff(const fs::path& path) {
    ensure_tags_registered();
    silence_libtiff();
    TiffPtr tif(TIFFOpen(path.string().c_str(), "r"));
    if (!tif) throw IoError("cannot open GeoTIFF '" + path.string() + "'");
    TIFF* t = tif.get();

    if (TIFFIsTiled(t)) throw UnsupportedError("tiled GeoTIFF layout is not supported", "layout");

    std::uint32_t width = 0, height = 0;
    std::uint16_t spp = 1, bps = 0, sample_format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG,
                  compression = COMPRESSION_NONE;
    TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &width);
    TIFFGetField(t, TIFFTAG_IMAGELENGTH, &height);
    TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
    TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &sample_format);
    TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
    TIFFGetFieldDefaulted(t, TIFFTAG_COMPRESSION, &compression);

    if (compression != COMPRESSION_NONE && compression != COMPRESSION_ADOBE_DEFLATE &&
        compression != COMPRESSION_DEFLATE) {
        throw UnsupportedError("unsupported TIFF compression " + std::to_string(compression), "compression");
    }
    SampleType type;
    if (sample_format == SAMPLEFORMAT_IEEEFP && bps == 32) {
        type = SampleType::float32;
    } else if (sample_format == SAMPLEFORMAT_UINT && bps == 8) {
        type = SampleType::uint8;
    } else if (sample_format == SAMPLEFORMAT_UINT && bps == 16) {
        type = SampleType::uint16;
    } else if (sample_format == SAMPLEFORMAT_INT && bps == 16) {
        type = SampleType::int16;
    } else {
        throw UnsupportedError("unsupported sample type: format " + std::to_string(sample_format) + ", " +
                                   std::to_string(bps) + " bits",
                               "sample_type");
    }

    // Geotransform.
    std::optional<GeoTransform> gt;
    {
        std::uint32_t n = 0;
        double* vals = nullptr;
        if (TIFFGetField(t, kTagModelTransformation, &n, &vals) && n >= 16) {
            if (vals[1] != 0.0 || vals[4] != 0.0) {
                throw UnsupportedError("rotated ModelTransformation is not supported", "transform");
            }
            gt = GeoTransform{vals[3], vals[7], vals[0], vals[5]};
        }
    }
    if (!gt) {
        std::uint32_t ns = 0, nt = 0;
        double* scale = nullptr;
        double* tie = nullptr;
        const bool has_scale = TIFFGetField(t, kTagModelPixelScale, &ns, &scale) && ns >= 2;
        const bool has_tie = TIFFGetField(t, kTagModelTiepoint, &nt, &tie) && nt >= 6;
        if (!has_scale && !has_tie) {
            throw ValidationError(
                "missing geotransform: no ModelPixelScale/ModelTiepoint or ModelTransformation tag in '" +
                    path.string() + "'",
                "geotransform");
        }
        if (!has_scale) throw ValidationError("missing geotransform element ModelPixelScale", "geotransform");
        if (!has_tie) throw ValidationError("missing geotransform element ModelTiepoint", "geotransform");
        const double psx = scale[0], psy = -scale[1];
        gt = GeoTransform{tie[3] - tie[0] * psx, tie[4] - tie[1] * psy, psx, psy};
    }

    // Metadata: band names, CRS, free items.
    std::vector<std::string> names(spp);
    for (std::uint16_t i = 0; i < spp; ++i) names[i] = "band_" + std::to_string(i + 1);
    std::map<std::string, std::string> metadata;
    std::string crs;
    {
        char* xml = nullptr;
        if (TIFFGetField(t, kTagGdalMetadata, &xml) && xml) {
            static const std::regex item_re(R"re(<Item\s+([^>]*)>([^<]*)</Item>)re");
            static const std::regex name_re(R"re(name="([^"]*)")re");
            static const std::regex sample_re(R"re(sample="(\d+)")re");
            static const std::regex role_re(R"re(role="([^"]*)")re");
            std::string s(xml);
            for (auto it = std::sregex_iterator(s.begin(), s.end(), item_re); it != std::sregex_iterator(); ++it) {
                const std::string attrs = (*it)[1];
                const std::string value = xml_unescape((*it)[2]);
                std::smatch m;
                std::string name, role;
                std::optional<int> sample;
                if (std::regex_search(attrs, m, name_re)) name = xml_unescape(m[1]);
                if (std::regex_search(attrs, m, sample_re)) sample = std::stoi(m[1]);
                if (std::regex_search(attrs, m, role_re)) role = m[1];
                if (sample && role == "description") {
                    if (*sample >= 0 && *sample < spp && !value.empty()) names[*sample] = value;
                } else if (!sample && name == "CRS") {
                    crs = value;
                } else if (!sample && !name.empty()) {
                    metadata[name] = value;
                }
            }
        }
    }
    if (crs.empty()) {
        std::uint32_t n = 0;
        std::uint16_t* keys = nullptr;
        if (TIFFGetField(t, kTagGeoKeyDirectory, &n, &keys) && n >= 4) {
            const std::uint32_t count = keys[3];
            for (std::uint32_t k = 0; k < count && 4 + 4 * k + 3 < n; ++k) {
                const std::uint16_t* e = keys + 4 + 4 * k;
                if ((e[0] == kKeyProjectedCsType || e[0] == kKeyGeographicType) && e[1] == 0 && e[3] != 32767) {
                    crs = "EPSG:" + std::to_string(e[3]);
                    if (e[0] == kKeyProjectedCsType) break;
                }
            }
        }
    }

    std::optional<float> nodata_storage;
    {
        char* nd = nullptr;
        if (TIFFGetField(t, kTagGdalNodata, &nd) && nd) nodata_storage = parse_nodata(nd);
    }

    const double scale = sample_scale(type);
    std::vector<Plane> planes(spp, Plane(height, width));
    const tmsize_t strip_size = TIFFStripSize(t);
    std::vector<unsigned char> buf(static_cast<std::size_t>(strip_size));
    std::uint32_t rows_per_strip = height;
    TIFFGetFieldDefaulted(t, TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
    rows_per_strip = std::min(rows_per_strip, height);
    const std::size_t bytes = bps / 8;

    auto decode = [&](const unsigned char* p) -> float {
        switch (type) {
            case SampleType::float32: {
                float v;
                std::memcpy(&v, p, 4);
                return v;
            }
            case SampleType::uint8: return *p;
            case SampleType::uint16: {
                std::uint16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            case SampleType::int16: {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
        }
        return 0.0f;
    };
    auto store = [&](float raw) -> float {
        if (type == SampleType::float32) return raw;
        return static_cast<float>(raw / scale);
    };

    const tstrip_t n_strips = TIFFNumberOfStrips(t);
    const tstrip_t strips_per_plane = (height + rows_per_strip - 1) / rows_per_strip;
    for (tstrip_t s = 0; s < n_strips; ++s) {
        const tmsize_t got = TIFFReadEncodedStrip(t, s, buf.data(), strip_size);
        if (got < 0) throw IoError("failed to decode strip " + std::to_string(s) + " of '" + path.string() + "'");
        const std::uint16_t plane_idx =
            planar == PLANARCONFIG_SEPARATE ? static_cast<std::uint16_t>(s / strips_per_plane) : 0;
        const std::uint32_t strip_in_plane = planar == PLANARCONFIG_SEPARATE ? s % strips_per_plane : s;
        const std::uint32_t row0 = strip_in_plane * rows_per_strip;
        const std::uint32_t rows = std::min(rows_per_strip, height - row0);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < width; ++c) {
                if (planar == PLANARCONFIG_SEPARATE) {
                    const unsigned char* p = buf.data() + (static_cast<std::size_t>(r) * width + c) * bytes;
                    planes[plane_idx](row0 + r, c) = store(decode(p));
                } else {
                    for (std::uint16_t b = 0; b < spp; ++b) {
                        const unsigned char* p =
                            buf.data() + ((static_cast<std::size_t>(r) * width + c) * spp + b) * bytes;
                        planes[b](row0 + r, c) = store(decode(p));
                    }
                }
            }
        }
    }

    std::optional<float> nodata;
    if (nodata_storage) {
        nodata = type == SampleType::float32 ? *nodata_storage : static_cast<float>(*nodata_storage / scale);
    }
    std::vector<Band> bands;
    for (std::uint16_t b = 0; b < spp; ++b) bands.push_back({names[b], std::move(planes[b]), nodata});
    MultibandRaster raster(std::move(bands), *gt, crs);
    for (auto& [k, v] : metadata) raster.set_metadata(k, v);
    raster.set_storage_type(type);
    return raster;
}

// ---------------------------------------------------------------------------
// GeoTIFF write

void write_geotiff(const MultibandRaster& raster, const fs::path& path, const SaveOptions& options) {
    ensure_tags_registered();
    silence_libtiff();
    auto nodata = common_nodata(raster);
    if (!nodata) throw UnsupportedError("GeoTIFF requires one nodata marker shared by all bands", "nodata");

    TiffPtr tif(TIFFOpen(path.string().c_str(), "w"));
    if (!tif) throw IoError("cannot write GeoTIFF '" + path.string() + "'");
    TIFF* t = tif.get();

    const SampleType type = raster.storage_type();
    const auto width = static_cast<std::uint32_t>(raster.width());
    const auto height = static_cast<std::uint32_t>(raster.height());
    const auto spp = static_cast<std::uint16_t>(raster.band_count());
    std::uint16_t bps = 32, fmt = SAMPLEFORMAT_IEEEFP;
    if (type == SampleType::uint8) {
        bps = 8;
        fmt = SAMPLEFORMAT_UINT;
    } else if (type == SampleType::uint16) {
        bps = 16;
        fmt = SAMPLEFORMAT_UINT;
    } else if (type == SampleType::int16) {
        bps = 16;
        fmt = SAMPLEFORMAT_INT;
    }
    TIFFSetField(t, TIFFTAG_IMAGEWIDTH, width);
    TIFFSetField(t, TIFFTAG_IMAGELENGTH, height);
    TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, spp);
    TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, bps);
    TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, fmt);
    TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
    TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(t, TIFFTAG_COMPRESSION,
                 options.compression == TiffCompression::deflate ? COMPRESSION_ADOBE_DEFLATE : COMPRESSION_NONE);
    if (spp > 1) {
        std::vector<std::uint16_t> extra(spp - 1, EXTRASAMPLE_UNSPECIFIED);
        TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
    }
    const std::uint32_t rows_per_strip = std::max<std::uint32_t>(1, std::min<std::uint32_t>(height, 64));
    TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, rows_per_strip);

    const auto& g = raster.transform();
    if (g.pixel_size_y < 0) {
        double scale[3] = {g.pixel_size_x, -g.pixel_size_y, 0.0};
        double tie[6] = {0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0};
        TIFFSetField(t, kTagModelPixelScale, 3, scale);
        TIFFSetField(t, kTagModelTiepoint, 6, tie);
    } else {
        double m[16] = {g.pixel_size_x, 0, 0, g.origin_x, 0, g.pixel_size_y, 0, g.origin_y,
                        0, 0, 0, 0, 0, 0, 0, 1};
        TIFFSetField(t, kTagModelTransformation, 16, m);
    }

    // GeoKey directory: raster-is-area plus the EPSG code when the CRS has one.
    std::vector<std::uint16_t> keys = {1, 1, 0, 0};
    auto add_key = [&](std::uint16_t id, std::uint16_t value) {
        keys.insert(keys.end(), {id, 0, 1, value});
        ++keys[3];
    };
    const auto code = epsg_code(raster.crs());
    add_key(1024, code ? (is_geographic_epsg(*code) ? 2 : 1) : 32767);  // GTModelType
    add_key(1025, 1);                                                   // GTRasterType = PixelIsArea
    if (code && *code < 32767) add_key(is_geographic_epsg(*code) ? kKeyGeographicType : kKeyProjectedCsType,
                                       static_cast<std::uint16_t>(*code));
    TIFFSetField(t, kTagGeoKeyDirectory, static_cast<std::uint32_t>(keys.size()), keys.data());

    std::string xml = "<GDALMetadata>\n";
    if (!raster.crs().empty()) xml += "  <Item name=\"CRS\">" + xml_escape(raster.crs()) + "</Item>\n";
    for (const auto& [k, v] : raster.metadata()) {
        xml += "  <Item name=\"" + xml_escape(k) + "\">" + xml_escape(v) + "</Item>\n";
    }
    for (std::size_t b = 0; b < raster.band_count(); ++b) {
        xml += "  <Item name=\"DESCRIPTION\" sample=\"" + std::to_string(b) + "\" role=\"description\">" +
               xml_escape(raster.bands()[b].name) + "</Item>\n";
    }
    xml += "</GDALMetadata>";
    TIFFSetField(t, kTagGdalMetadata, xml.c_str());

    const double scale = sample_scale(type);
    if (*nodata) {
        const float nd = **nodata;
        std::string s = type == SampleType::float32 ? format_float(nd) : format_float(std::round(nd * scale));
        TIFFSetField(t, kTagGdalNodata, s.c_str());
    }

    const std::size_t bytes = bps / 8;
    std::vector<unsigned char> strip(static_cast<std::size_t>(rows_per_strip) * width * bytes);
    for (std::uint16_t b = 0; b < spp; ++b) {
        const Plane& plane = raster.bands()[b].values;
        for (std::uint32_t row0 = 0, s = 0; row0 < height; row0 += rows_per_strip, ++s) {
            const std::uint32_t rows = std::min(rows_per_strip, height - row0);
            for (std::uint32_t r = 0; r < rows; ++r) {
                for (std::uint32_t c = 0; c < width; ++c) {
                    unsigned char* p = strip.data() + (static_cast<std::size_t>(r) * width + c) * bytes;
                    const float v = plane(row0 + r, c);
                    switch (type) {
                        case SampleType::float32: std::memcpy(p, &v, 4); break;
                        case SampleType::uint8: *p = to_storage<std::uint8_t>(v, scale); break;
                        case SampleType::uint16: {
                            auto x = to_storage<std::uint16_t>(v, scale);
                            std::memcpy(p, &x, 2);
                            break;
                        }
                        case SampleType::int16: {
                            auto x = to_storage<std::int16_t>(v, scale);
                            std::memcpy(p, &x, 2);
                            break;
                        }
                    }
                }
            }
            const tstrip_t strip_id = TIFFComputeStrip(t, row0, b);
            if (TIFFWriteEncodedStrip(t, strip_id, strip.data(),
                                      static_cast<tmsize_t>(rows) * width * static_cast<tmsize_t>(bytes)) < 0) {
                throw IoError("failed writing strip to '" + path.string() + "'");
            }
        }
    }
    if (!TIFFWriteDirectory(t)) throw IoError("failed writing TIFF directory to '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Plain interchange: JSON header + float32 planes

fs::path bin_path_for(const fs::path& header) {
    fs::path p = header;
    p.replace_extension(".bin");
    return p;
}

json nodata_to_json(const std::optional<float>& nd) {
    if (!nd) return nullptr;
    if (std::isnan(*nd)) return "nan";
    return static_cast<double>(*nd);
}

std::optional<float> nodata_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (j.is_string()) return parse_nodata(j.get<std::string>());
    if (j.is_number()) return static_cast<float>(j.get<double>());
    throw ValidationError("nodata must be a number, \"nan\" or null", "nodata");
}

void write_interchange(const MultibandRaster& raster, const fs::path& path) {
    json h;
    h["width"] = raster.width();
    h["height"] = raster.height();
    h["bands"] = raster.band_names();
    const auto gt = raster.transform().to_gdal();
    h["transform"] = std::vector<double>(gt.begin(), gt.end());
    h["crs"] = raster.crs();
    auto common = common_nodata(raster);
    h["nodata"] = common ? nodata_to_json(*common) : json(nullptr);
    if (!common) {
        json per = json::array();
        for (const auto& b : raster.bands()) per.push_back(nodata_to_json(b.nodata));
        h["band_nodata"] = per;
    }
    if (!raster.metadata().empty()) h["metadata"] = raster.metadata();

    std::ofstream hf(path);
    if (!hf) throw IoError("cannot write raster header '" + path.string() + "'");
    hf << h.dump(2) << '\n';
    if (!hf) throw IoError("failed writing raster header '" + path.string() + "'");

    const fs::path bin = bin_path_for(path);
    std::ofstream bf(bin, std::ios::binary);
    if (!bf) throw IoError("cannot write raster data '" + bin.string() + "'");
    std::vector<char> row(static_cast<std::size_t>(raster.width()) * 4);
    for (const auto& b : raster.bands()) {
        for (Index r = 0; r < raster.height(); ++r) {
            for (Index c = 0; c < raster.width(); ++c) {
                auto bits = std::bit_cast<std::uint32_t>(b.values(r, c));
                if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
                std::memcpy(row.data() + c * 4, &bits, 4);
            }
            bf.write(row.data(), static_cast<std::streamsize>(row.size()));
        }
    }
    if (!bf) throw IoError("failed writing raster data '" + bin.string() + "'");
}

MultibandRaster read_interchange(const fs::path& path) {
    std::ifstream hf(path);
    if (!hf) throw IoError("cannot open raster header '" + path.string() + "'");
    json h;
    try {
        h = json::parse(hf);
    } catch (const json::exception& e) {
        throw ValidationError("malformed raster header '" + path.string() + "': " + e.what(), "header");
    }
    for (const char* key : {"width", "height", "bands", "transform"}) {
        if (!h.contains(key)) throw ValidationError(std::string("raster header missing '") + key + "'", key);
    }
    const auto width = h["width"].get<Index>();
    const auto height = h["height"].get<Index>();
    const auto names = h["bands"].get<std::vector<std::string>>();
    const auto gtv = h["transform"].get<std::vector<double>>();
    if (gtv.size() != 6) throw ValidationError("transform must have 6 numbers", "transform");
    std::array<double, 6> gt{};
    std::copy(gtv.begin(), gtv.end(), gt.begin());
    const std::string crs = h.value("crs", std::string{});
    std::vector<std::optional<float>> nodata(names.size(), nodata_from_json(h.value("nodata", json(nullptr))));
    if (h.contains("band_nodata")) {
        const auto& per = h["band_nodata"];
        if (per.size() != names.size()) throw ValidationError("band_nodata length mismatch", "band_nodata");
        for (std::size_t i = 0; i < names.size(); ++i) nodata[i] = nodata_from_json(per[i]);
    }

    const fs::path bin = bin_path_for(path);
    std::ifstream bf(bin, std::ios::binary);
    if (!bf) throw IoError("cannot open raster data '" + bin.string() + "'");
    const auto expected = static_cast<std::uintmax_t>(width) * height * names.size() * 4;
    std::error_code ec;
    if (fs::file_size(bin, ec) != expected) {
        throw ValidationError("raster data '" + bin.string() + "' has wrong size, expected " +
                                  std::to_string(expected) + " bytes",
                              "data");
    }
    std::vector<Band> bands;
    std::vector<char> row(static_cast<std::size_t>(width) * 4);
    for (std::size_t b = 0; b < names.size(); ++b) {
        Plane plane(height, width);
        for (Index r = 0; r < height; ++r) {
            bf.read(row.data(), static_cast<std::streamsize>(row.size()));
            for (Index c = 0; c < width; ++c) {
                std::uint32_t bits;
                std::memcpy(&bits, row.data() + c * 4, 4);
                if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
                plane(r, c) = std::bit_cast<float>(bits);
            }
        }
        bands.push_back({names[b], std::move(plane), nodata[b]});
    }
    if (!bf) throw IoError("failed reading raster data '" + bin.string() + "'");
    MultibandRaster raster(std::move(bands), GeoTransform::from_gdal(gt), crs);
    if (h.contains("metadata")) {
        for (auto& [k, v] : h["metadata"].items()) raster.set_metadata(k, v.get<std::string>());
    }
    return raster;
}

}  // namespace

MultibandRaster load_raster(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("raster file '" + path.string() + "' does not exist");
    const std::string ext = lower_ext(path);
    if (ext == ".tif" || ext == ".tiff") return read_geotiff(path);
    if (ext == ".json") return read_interchange(path);
    throw UnsupportedError("unsupported raster format '" + ext + "' (expected .tif, .tiff or .json)", "format");
}

void save_raster(const MultibandRaster& raster, const fs::path& path, const SaveOptions& options) {
    if (raster.band_count() == 0) throw ValidationError("cannot save a raster with no bands", "bands");
    const std::string ext = lower_ext(path);
    if (ext == ".tif" || ext == ".tiff") {
        write_geotiff(raster, path, options);
    } else if (ext == ".json") {
        write_interchange(raster, path);
    } else {
        throw UnsupportedError("unsupported raster format '" + ext + "' (expected .tif, .tiff or .json)", "format");
    }
}

}  // namespace canopy
