#include "canopy/indices.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace canopy {

std::string_view to_string(VegetationIndex index) { return index == VegetationIndex::ndvi ? "ndvi" : "ndre"; }

VegetationIndex parse_vegetation_index(std::string_view name) {
    if (name == "ndvi") return VegetationIndex::ndvi;
    if (name == "ndre") return VegetationIndex::ndre;
    throw ValidationError("unknown index '" + std::string(name) + "' (expected ndvi or ndre)", "index");
}

MultibandRaster normalized_difference(const MultibandRaster& raster, std::string_view band_a,
                                      std::string_view band_b, std::string name) {
    const Band& a = raster.band(band_a);
    const Band& b = raster.band(band_b);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    Plane out(raster.height(), raster.width());
    for (Index r = 0; r < raster.height(); ++r) {
        for (Index c = 0; c < raster.width(); ++c) {
            const float va = a.values(r, c), vb = b.values(r, c);
            const float den = va + vb;
            out(r, c) = (a.is_valid_value(va) && b.is_valid_value(vb) && den != 0.0f) ? (va - vb) / den : nan;
        }
    }
    std::vector<Band> bands;
    bands.push_back({std::move(name), std::move(out), nan});
    MultibandRaster result(std::move(bands), raster.transform(), raster.crs());
    result.set_storage_type(SampleType::float32);
    return result;
}

MultibandRaster compute_ndvi(const MultibandRaster& raster) { return normalized_difference(raster, "nir", "red", "ndvi"); }

MultibandRaster compute_ndre(const MultibandRaster& raster) {
    return normalized_difference(raster, "rededge", "red", "ndre");
}

MultibandRaster compute_index(const MultibandRaster& raster, VegetationIndex index) {
    return index == VegetationIndex::ndvi ? compute_ndvi(raster) : compute_ndre(raster);
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ValidationError("percentile of empty sample", "sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ZonalStats summarize(std::string crown_id, std::vector<double> values) {
    if (values.empty()) throw ValidationError("cannot summarize an empty sample", "sample");
    std::sort(values.begin(), values.end());
    ZonalStats s;
    s.crown_id = std::move(crown_id);
    s.count = static_cast<Index>(values.size());
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / n);
    s.min = values.front();
    s.max = values.back();
    s.median = percentile_sorted(values, 0.5);
    s.p10 = percentile_sorted(values, 0.1);
    s.p90 = percentile_sorted(values, 0.9);
    return s;
}

ZonalResult zonal_stats(const MultibandRaster& index, const CrownCollection& crowns) {
    if (!crs_compatible(index.crs(), crowns.crs)) {
        throw ValidationError("CRS mismatch: raster '" + index.crs() + "' vs crowns '" + crowns.crs + "'", "crs");
    }
    if (index.band_count() == 0) throw ValidationError("index raster has no band", "bands");
    const Band& band = index.bands().front();
    ZonalResult out;
    std::vector<double> values;
    for (const auto& crown : crowns.crowns) {
        const Footprint fp = rasterize_footprint(crown, index.transform(), index.width(), index.height());
        if (!fp.inside.any()) {
            out.skipped.push_back({crown.crown_id, "no coverage"});
            continue;
        }
        values.clear();
        for (Index r = 0; r < fp.window.rows; ++r)
            for (Index c = 0; c < fp.window.cols; ++c)
                if (fp.inside(r, c) && band.is_valid(fp.window.row0 + r, fp.window.col0 + c))
                    values.push_back(band.values(fp.window.row0 + r, fp.window.col0 + c));
        if (values.empty()) {
            out.skipped.push_back({crown.crown_id, "all nodata"});
            continue;
        }
        out.stats.push_back(summarize(crown.crown_id, values));
    }
    return out;
}

void write_stats_csv(const std::vector<ZonalStats>& stats, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write stats '" + path.string() + "'");
    write_csv_row(out, {"crown_id", "count", "mean", "median", "std", "min", "max", "p10", "p90"});
    for (const auto& s : stats) {
        write_csv_row(out, {s.crown_id, std::to_string(s.count), format_number(s.mean), format_number(s.median),
                            format_number(s.std), format_number(s.min), format_number(s.max),
                            format_number(s.p10), format_number(s.p90)});
    }
    if (!out) throw IoError("failed writing stats '" + path.string() + "'");
}

std::vector<ZonalStats> read_stats_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t id = t.column("crown_id"), count = t.column("count"), mean = t.column("mean"),
                      median = t.column("median"), sd = t.column("std"), mn = t.column("min"), mx = t.column("max"),
                      p10 = t.column("p10"), p90 = t.column("p90");
    std::vector<ZonalStats> out;
    for (const auto& row : t.rows) {
        ZonalStats s;
        s.crown_id = row[id];
        s.count = static_cast<Index>(parse_number(row[count], "count"));
        s.mean = parse_number(row[mean], "mean");
        s.median = parse_number(row[median], "median");
        s.std = parse_number(row[sd], "std");
        s.min = parse_number(row[mn], "min");
        s.max = parse_number(row[mx], "max");
        s.p10 = parse_number(row[p10], "p10");
        s.p90 = parse_number(row[p90], "p90");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace canopy
