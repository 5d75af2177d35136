#include "canopy/itcd.hpp"

#include "canopy/error.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <queue>
#include <set>

namespace canopy {

const Band& chm_band(const MultibandRaster& chm) {
    if (const Band* b = chm.find_band("chm")) return *b;
    if (chm.band_count() == 1) return chm.bands().front();
    throw ValidationError("canopy height model needs a 'chm' band", "chm");
}

void validate_chm(const MultibandRaster& chm) {
    const Band& b = chm_band(chm);
    for (Index r = 0; r < chm.height(); ++r)
        for (Index c = 0; c < chm.width(); ++c)
            if (b.is_valid(r, c) && b.values(r, c) < 0.0f) {
                throw ValidationError("negative canopy height at row " + std::to_string(r) + ", col " +
                                          std::to_string(c),
                                      "chm");
            }
}

MultibandRaster chm_from_surfaces(const MultibandRaster& dsm, const MultibandRaster& dtm) {
    if (dsm.width() != dtm.width() || dsm.height() != dtm.height()) {
        throw ValidationError("DSM and DTM sizes differ", "dtm");
    }
    if (!crs_compatible(dsm.crs(), dtm.crs())) throw ValidationError("DSM and DTM CRS differ", "crs");
    const Band& s = dsm.bands().at(0);
    const Band& t = dtm.bands().at(0);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    Plane out(dsm.height(), dsm.width());
    for (Index r = 0; r < dsm.height(); ++r)
        for (Index c = 0; c < dsm.width(); ++c)
            out(r, c) = (s.is_valid(r, c) && t.is_valid(r, c)) ? std::max(0.0f, s.values(r, c) - t.values(r, c)) : nan;
    std::vector<Band> bands;
    bands.push_back({"chm", std::move(out), nan});
    return MultibandRaster(std::move(bands), dsm.transform(), dsm.crs());
}

MultibandRaster smooth_chm(const MultibandRaster& chm, double sigma) {
    if (!(sigma >= 0.0)) throw ValidationError("sigma must be >= 0", "sigma");
    const Band& b = chm_band(chm);
    std::vector<Band> out;
    out.push_back({b.name, gaussian_smooth_plane(b.values, b.valid_mask(), sigma), b.nodata});
    return chm.with_bands(std::move(out));
}

std::vector<Treetop> detect_local_maxima(const MultibandRaster& chm, Index window_radius, double min_height) {
    if (window_radius < 1) throw ValidationError("window_radius must be >= 1", "window_radius");
    const Band& b = chm_band(chm);
    const Index h = chm.height(), w = chm.width();
    std::vector<std::pair<Index, Index>> offsets;
    for (Index dr = -window_radius; dr <= window_radius; ++dr)
        for (Index dc = -window_radius; dc <= window_radius; ++dc)
            if ((dr != 0 || dc != 0) && dr * dr + dc * dc <= window_radius * window_radius)
                offsets.emplace_back(dr, dc);

    std::vector<Treetop> tops;
    for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
            if (!b.is_valid(r, c)) continue;
            const float v = b.values(r, c);
            if (v < min_height) continue;
            bool is_max = true;
            for (const auto& [dr, dc] : offsets) {
                const Index rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w || !b.is_valid(rr, cc)) continue;
                const float q = b.values(rr, cc);
                // (dr, dc) < (0, 0) lexicographically means q precedes p.
                if (q > v || (q == v && (dr < 0 || (dr == 0 && dc < 0)))) {
                    is_max = false;
                    break;
                }
            }
            if (!is_max) continue;
            const auto world = chm.transform().pixel_center(r, c);
            tops.push_back({r, c, world.x(), world.y(), static_cast<double>(v)});
        }
    }
    return tops;
}

LabelPlane watershed_labels(const MultibandRaster& chm, const std::vector<Treetop>& markers, double min_height) {
    if (markers.empty()) throw ValidationError("no markers", "markers");
    const Band& b = chm_band(chm);
    const Index h = chm.height(), w = chm.width();
    LabelPlane labels = LabelPlane::Zero(h, w);

    struct Entry {
        float height;
        std::int32_t marker;
        std::uint64_t seq;
        Index row, col;
    };
    const auto lower_priority = [](const Entry& a, const Entry& e) {
        if (a.height != e.height) return a.height < e.height;
        if (a.marker != e.marker) return a.marker > e.marker;
        return a.seq > e.seq;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(lower_priority)> queue(lower_priority);
    std::uint64_t seq = 0;

    const auto eligible = [&](Index r, Index c) {
        return r >= 0 && r < h && c >= 0 && c < w && b.is_valid(r, c) && b.values(r, c) >= min_height;
    };
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto& m = markers[i];
        if (m.row < 0 || m.row >= h || m.col < 0 || m.col >= w) {
            throw ValidationError("marker " + std::to_string(i) + " lies outside the CHM", "markers");
        }
        if (!eligible(m.row, m.col)) {
            throw ValidationError("marker " + std::to_string(i) + " is below min_height or nodata", "markers");
        }
        if (labels(m.row, m.col) != 0) {
            throw ValidationError("markers " + std::to_string(labels(m.row, m.col) - 1) + " and " +
                                      std::to_string(i) + " share a pixel",
                                  "markers");
        }
        labels(m.row, m.col) = static_cast<std::int32_t>(i + 1);
    }
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto& m = markers[i];
        queue.push({b.values(m.row, m.col), static_cast<std::int32_t>(i), seq++, m.row, m.col});
    }
    constexpr std::array<std::pair<int, int>, 4> kNeighbours = {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
    while (!queue.empty()) {
        const Entry e = queue.top();
        queue.pop();
        for (const auto& [dr, dc] : kNeighbours) {
            const Index rr = e.row + dr, cc = e.col + dc;
            if (!eligible(rr, cc) || labels(rr, cc) != 0) continue;
            labels(rr, cc) = e.marker + 1;
            queue.push({b.values(rr, cc), e.marker, seq++, rr, cc});
        }
    }
    return labels;
}

namespace {

// Background pixels not 4-connected to the border become foreground.
Mask fill_holes(const Mask& region) {
    const Index h = region.rows(), w = region.cols();
    Mask outside = Mask::Constant(h, w, false);
    std::vector<std::pair<Index, Index>> stack;
    const auto seed = [&](Index r, Index c) {
        if (!region(r, c) && !outside(r, c)) {
            outside(r, c) = true;
            stack.emplace_back(r, c);
        }
    };
    for (Index r = 0; r < h; ++r) {
        seed(r, 0);
        seed(r, w - 1);
    }
    for (Index c = 0; c < w; ++c) {
        seed(0, c);
        seed(h - 1, c);
    }
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        if (r > 0) seed(r - 1, c);
        if (r + 1 < h) seed(r + 1, c);
        if (c > 0) seed(r, c - 1);
        if (c + 1 < w) seed(r, c + 1);
    }
    return !outside;
}

using Corner = std::pair<Index, Index>;  // (row, col) of a pixel corner

}  // namespace

Ring trace_region(const Mask& region_in, const GeoTransform& transform) {
    if (!region_in.any()) throw ValidationError("cannot trace an empty region", "region");
    // Pad by one pixel so the fill sees an outside border.
    const Index h = region_in.rows() + 2, w = region_in.cols() + 2;
    Mask padded = Mask::Constant(h, w, false);
    padded.block(1, 1, region_in.rows(), region_in.cols()) = region_in;
    const Mask region = fill_holes(padded);

    // Directed boundary edges, clockwise on screen (interior to the right
    // when rows grow downwards).
    std::map<Corner, std::vector<Corner>> next;
    for (Index r = 1; r + 1 < h; ++r) {
        for (Index c = 1; c + 1 < w; ++c) {
            if (!region(r, c)) continue;
            if (!region(r - 1, c)) next[{r, c}].push_back({r, c + 1});
            if (!region(r, c + 1)) next[{r, c + 1}].push_back({r + 1, c + 1});
            if (!region(r + 1, c)) next[{r + 1, c + 1}].push_back({r + 1, c});
            if (!region(r, c - 1)) next[{r + 1, c}].push_back({r, c});
        }
    }

    // Follow the loop from the smallest corner. At a pinch vertex take the
    // rightmost turn, which keeps diagonal-only neighbours apart.
    std::vector<Corner> loop;
    Corner start = next.begin()->first;
    Corner prev = start, cur = start;
    std::set<std::pair<Corner, Corner>> used;
    while (true) {
        auto& outs = next[cur];
        Corner chosen = outs.front();
        if (outs.size() > 1 && cur != start) {
            const Index in_r = cur.first - prev.first, in_c = cur.second - prev.second;
            // Right turn in screen space: (dr, dc) -> (dc, -dr).
            for (const auto& o : outs) {
                if (o.first - cur.first == in_c && o.second - cur.second == -in_r &&
                    !used.count({cur, o})) {
                    chosen = o;
                    break;
                }
            }
        }
        if (used.count({cur, chosen})) {
            for (const auto& o : outs)
                if (!used.count({cur, o})) chosen = o;
        }
        if (!used.insert({cur, chosen}).second) break;
        loop.push_back(cur);
        prev = cur;
        cur = chosen;
        if (cur == start) break;
    }

    // Drop collinear vertices.
    std::vector<Corner> simplified;
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Corner& a = loop[(i + n - 1) % n];
        const Corner& p = loop[i];
        const Corner& q = loop[(i + 1) % n];
        const Index cross = (p.first - a.first) * (q.second - p.second) - (p.second - a.second) * (q.first - p.first);
        if (cross != 0) simplified.push_back(p);
    }

    Ring ring;
    ring.reserve(simplified.size() + 1);
    for (const auto& [r, c] : simplified) {
        // Undo the padding offset.
        ring.push_back(transform.pixel_to_world(static_cast<double>(c - 1), static_cast<double>(r - 1)));
    }
    ring.push_back(ring.front());
    if (signed_area(ring) < 0.0) std::reverse(ring.begin(), ring.end());
    return ring;
}

CrownCollection watershed_delineate(const MultibandRaster& chm, const std::vector<Treetop>& markers,
                                    double min_height) {
    const LabelPlane labels = watershed_labels(chm, markers, min_height);
    CrownCollection out;
    out.crs = chm.crs();
    std::vector<PixelWindow> boxes(markers.size(), PixelWindow{labels.rows(), labels.cols(), -1, -1});
    for (Index r = 0; r < labels.rows(); ++r) {
        for (Index c = 0; c < labels.cols(); ++c) {
            if (labels(r, c) == 0) continue;
            auto& bx = boxes[static_cast<std::size_t>(labels(r, c) - 1)];
            // rows/cols hold the max row/col until converted below.
            bx.row0 = std::min(bx.row0, r);
            bx.col0 = std::min(bx.col0, c);
            bx.rows = std::max(bx.rows, r);
            bx.cols = std::max(bx.cols, c);
        }
    }
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto& bx = boxes[i];
        const Index rows = bx.rows - bx.row0 + 1, cols = bx.cols - bx.col0 + 1;
        const Mask region = labels.block(bx.row0, bx.col0, rows, cols) == static_cast<std::int32_t>(i + 1);
        CrownPolygon crown;
        crown.crown_id = "crown_" + std::to_string(i + 1);
        crown.ring = trace_region(region, chm.transform().shifted(bx.row0, bx.col0));
        crown.height = markers[i].height;
        crown.source = CrownSource::watershed;
        out.crowns.push_back(std::move(crown));
    }
    return out;
}

}  // namespace canopy
