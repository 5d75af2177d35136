#include "canopy/chips.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"
#include "canopy/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace canopy {
namespace {

namespace fs = std::filesystem;

PixelWindow polygon_window(const Ring& ring, const GeoTransform& t, Index width, Index height) {
    double c_min = std::numeric_limits<double>::infinity(), c_max = -c_min;
    double r_min = c_min, r_max = -c_min;
    for (const auto& p : ring) {
        const auto px = t.world_to_pixel(p.x(), p.y());
        c_min = std::min(c_min, px.x());
        c_max = std::max(c_max, px.x());
        r_min = std::min(r_min, px.y());
        r_max = std::max(r_max, px.y());
    }
    const auto clampi = [](double v, Index hi) {
        return static_cast<Index>(std::clamp(v, 0.0, static_cast<double>(hi)));
    };
    const Index c0 = clampi(std::floor(c_min), width), c1 = clampi(std::ceil(c_max), width);
    const Index r0 = clampi(std::floor(r_min), height), r1 = clampi(std::ceil(r_max), height);
    if (c1 <= c0 || r1 <= r0) return {0, 0, 0, 0};
    return {r0, c0, r1 - r0, c1 - c0};
}

}  // namespace

Footprint rasterize_footprint(const CrownPolygon& polygon, const GeoTransform& transform, Index width,
                              Index height) {
    const Ring& ring = polygon.ring;
    if (ring.size() < 4 || !(std::abs(signed_area(ring)) > 0.0)) {
        throw ValidationError("crown '" + polygon.crown_id + "' is degenerate (zero area)", "ring");
    }
    Footprint fp;
    fp.window = polygon_window(ring, transform, width, height);
    fp.inside = Mask::Constant(fp.window.rows, fp.window.cols, false);
    std::vector<double> crossings;
    const std::size_t n = ring.size();
    for (Index r = 0; r < fp.window.rows; ++r) {
        const double y = transform.pixel_center(fp.window.row0 + r, 0).y();
        crossings.clear();
        // Same edge pairing and crossing expression as point_in_ring, so the
        // scanline result is identical to a per-pixel test.
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const double xi = ring[i].x(), yi = ring[i].y();
            const double xj = ring[j].x(), yj = ring[j].y();
            if ((yi > y) != (yj > y)) crossings.push_back((xj - xi) * (y - yi) / (yj - yi) + xi);
        }
        if (crossings.empty()) continue;
        std::sort(crossings.begin(), crossings.end());
        for (Index c = 0; c < fp.window.cols; ++c) {
            const double x = transform.pixel_center(0, fp.window.col0 + c).x();
            const auto above = crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), x);
            fp.inside(r, c) = (above % 2) == 1;
        }
    }
    return fp;
}

Mask rasterize_polygon(const CrownPolygon& polygon, const GeoTransform& transform, Index width, Index height) {
    Mask out = Mask::Constant(height, width, false);
    const Footprint fp = rasterize_footprint(polygon, transform, width, height);
    if (fp.window.rows > 0 && fp.window.cols > 0) {
        out.block(fp.window.row0, fp.window.col0, fp.window.rows, fp.window.cols) = fp.inside;
    }
    return out;
}

ChipExtraction extract_chips(const MultibandRaster& ortho, const CrownCollection& crowns, Index min_pixels,
                             const std::string& source_id) {
    if (!crs_compatible(ortho.crs(), crowns.crs)) {
        throw ValidationError("CRS mismatch: raster '" + ortho.crs() + "' vs crowns '" + crowns.crs + "'", "crs");
    }
    if (min_pixels < 1) throw ValidationError("min_pixels must be >= 1", "min_pixels");
    ChipExtraction out;
    for (const auto& crown : crowns.crowns) {
        const Footprint fp = rasterize_footprint(crown, ortho.transform(), ortho.width(), ortho.height());
        if (fp.window.rows == 0 || fp.window.cols == 0 || !fp.inside.any()) {
            out.skipped.push_back({crown.crown_id, "no coverage"});
            continue;
        }
        // Tighten to the inside pixels' bounding box.
        Index r0 = fp.window.rows, r1 = -1, c0 = fp.window.cols, c1 = -1;
        for (Index r = 0; r < fp.window.rows; ++r)
            for (Index c = 0; c < fp.window.cols; ++c)
                if (fp.inside(r, c)) {
                    r0 = std::min(r0, r);
                    r1 = std::max(r1, r);
                    c0 = std::min(c0, c);
                    c1 = std::max(c1, c);
                }
        const Index rows = r1 - r0 + 1, cols = c1 - c0 + 1;
        const MultibandRaster window = ortho.window(fp.window.row0 + r0, fp.window.col0 + c0, rows, cols);
        const Mask inside = fp.inside.block(r0, c0, rows, cols);
        const Mask valid = inside && window.valid_mask();
        const Index n_valid = valid.count();
        if (n_valid == 0) {
            out.skipped.push_back({crown.crown_id, "all nodata"});
            continue;
        }
        if (n_valid < min_pixels) {
            out.skipped.push_back({crown.crown_id, "below min_pixels (" + std::to_string(n_valid) + " < " +
                                                       std::to_string(min_pixels) + ")"});
            continue;
        }
        std::vector<Band> bands;
        for (const auto& b : window.bands()) {
            // Chips share a NaN marker so every band round-trips through one file.
            const float nan = std::numeric_limits<float>::quiet_NaN();
            const Mask keep = inside && b.valid_mask();
            bands.push_back({b.name, keep.select(b.values, Plane::Constant(rows, cols, nan)), nan});
        }
        out.chips.push_back({crown.crown_id, window.with_bands(std::move(bands)), valid, n_valid,
                             source_id, crown.species});
    }
    return out;
}

void write_chips(const std::vector<CrownChip>& chips, const fs::path& dir, const fs::path& manifest) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create chip directory '" + dir.string() + "': " + ec.message());
    const fs::path base = manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
    std::ofstream out(manifest);
    if (!out) throw IoError("cannot write manifest '" + manifest.string() + "'");
    write_csv_row(out, {"crown_id", "file", "valid_pixels", "species_label"});
    for (const auto& chip : chips) {
        const fs::path file = dir / (chip.crown_id + ".tif");
        MultibandRaster patch = chip.patch;
        patch.set_storage_type(SampleType::float32);
        if (!chip.source_id.empty()) patch.set_metadata("source", chip.source_id);
        save_raster(patch, file);
        write_csv_row(out, {chip.crown_id, fs::relative(file, base).generic_string(),
                            std::to_string(chip.valid_pixels), chip.species.value_or("")});
    }
    if (!out) throw IoError("failed writing manifest '" + manifest.string() + "'");
}

std::vector<CrownChip> read_chips(const fs::path& manifest) {
    const CsvTable t = read_csv(manifest);
    const std::size_t id_col = t.column("crown_id"), file_col = t.column("file");
    const auto species_col = t.find_column("species_label");
    const fs::path base = manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
    std::vector<CrownChip> out;
    for (const auto& row : t.rows) {
        CrownChip chip;
        chip.crown_id = row[id_col];
        chip.patch = load_raster(base / row[file_col]);
        chip.mask = chip.patch.valid_mask();
        chip.valid_pixels = chip.mask.count();
        auto it = chip.patch.metadata().find("source");
        if (it != chip.patch.metadata().end()) chip.source_id = it->second;
        if (species_col && !row[*species_col].empty()) chip.species = row[*species_col];
        out.push_back(std::move(chip));
    }
    return out;
}

}  // namespace canopy
