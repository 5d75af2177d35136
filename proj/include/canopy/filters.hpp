#pragma once

#include "canopy/error.hpp"
#include "canopy/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace canopy {

struct ClaheOptions {
    Index tile_rows = 8;
    Index tile_cols = 8;
    // Relative clip factor: a bin may hold at most clip_limit * pixels / bins
    // counts. +infinity disables clipping (plain adaptive equalization).
    double clip_limit = 2.0;
    int bins = 256;
    // Declared intensity range of the band; output stays within it.
    double range_min = 0.0;
    double range_max = 1.0;
};

// Mirror index without repeating the edge sample (d c b | a b c d | c b a).
inline Index reflect_index(Index i, Index n) {
    if (n == 1) return 0;
    const Index period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i >= n ? period - i : i;
}

namespace detail {

inline int clahe_bin(double v, const ClaheOptions& o) {
    const double t = (v - o.range_min) / (o.range_max - o.range_min);
    const int b = static_cast<int>(std::floor(t * o.bins));
    return std::clamp(b, 0, o.bins - 1);
}

// Region k along an axis of length n split into `parts` spans [k*n/parts, (k+1)*n/parts).
inline Index region_start(Index k, Index n, Index parts) { return (k * n) / parts; }

}  // namespace detail

// Clips a histogram at `limit` counts and returns the clipped excess. Exposed
// for testing the clip invariant.
inline double clip_histogram(std::vector<double>& hist, double limit) {
    double excess = 0.0;
    for (auto& h : hist) {
        if (h > limit) {
            excess += h - limit;
            h = limit;
        }
    }
    return excess;
}

// Mapping table of one contextual region: clipped histogram, uniform
// redistribution of the excess, cumulative distribution scaled to the range.
// Returns an empty table when the region has no valid pixels.
template <typename Scalar>
std::vector<double> clahe_region_lut(const PlaneT<Scalar>& plane, const Mask& valid, Index r0, Index r1, Index c0,
                                     Index c1, const ClaheOptions& o) {
    std::vector<double> hist(static_cast<std::size_t>(o.bins), 0.0);
    double n = 0.0;
    for (Index r = r0; r < r1; ++r) {
        for (Index c = c0; c < c1; ++c) {
            if (!valid(r, c)) continue;
            hist[static_cast<std::size_t>(detail::clahe_bin(plane(r, c), o))] += 1.0;
            n += 1.0;
        }
    }
    if (n == 0.0) return {};
    if (std::isfinite(o.clip_limit)) {
        const double limit = std::max(1.0, o.clip_limit * n / o.bins);
        const double excess = clip_histogram(hist, limit);
        const double share = excess / o.bins;
        for (auto& h : hist) h += share;
    }
    std::vector<double> lut(hist.size());
    double cdf = 0.0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        cdf += hist[b];
        lut[b] = o.range_min + (o.range_max - o.range_min) * std::min(1.0, cdf / n);
    }
    return lut;
}

// Contrast-limited adaptive histogram equalization of one plane. Invalid
// pixels keep their value and do not enter any histogram. Region mappings are
// bilinearly interpolated between region centers.
template <typename Scalar>
PlaneT<Scalar> clahe_plane(const PlaneT<Scalar>& plane, const Mask& valid, const ClaheOptions& o) {
    const Index h = plane.rows(), w = plane.cols();
    if (o.tile_rows < 1 || o.tile_cols < 1) throw ValidationError("CLAHE tile grid must be positive", "tile_grid");
    if (o.tile_rows > h || o.tile_cols > w) {
        throw ValidationError("CLAHE tile grid " + std::to_string(o.tile_rows) + "x" + std::to_string(o.tile_cols) +
                                  " is larger than the image " + std::to_string(h) + "x" + std::to_string(w),
                              "tile_grid");
    }
    if (!(o.clip_limit > 0.0)) throw ValidationError("clip_limit must be positive", "clip_limit");
    if (o.bins < 2) throw ValidationError("CLAHE needs at least 2 bins", "bins");
    if (!(o.range_max > o.range_min)) throw ValidationError("empty intensity range", "range");

    std::vector<std::vector<double>> luts(static_cast<std::size_t>(o.tile_rows * o.tile_cols));
    for (Index i = 0; i < o.tile_rows; ++i) {
        for (Index j = 0; j < o.tile_cols; ++j) {
            luts[static_cast<std::size_t>(i * o.tile_cols + j)] = clahe_region_lut(
                plane, valid, detail::region_start(i, h, o.tile_rows), detail::region_start(i + 1, h, o.tile_rows),
                detail::region_start(j, w, o.tile_cols), detail::region_start(j + 1, w, o.tile_cols), o);
        }
    }

    PlaneT<Scalar> out = plane;
    const double ry = static_cast<double>(o.tile_rows) / static_cast<double>(h);
    const double rx = static_cast<double>(o.tile_cols) / static_cast<double>(w);
    for (Index r = 0; r < h; ++r) {
        const double fy = (static_cast<double>(r) + 0.5) * ry - 0.5;
        const Index i0 = std::clamp<Index>(static_cast<Index>(std::floor(fy)), 0, o.tile_rows - 1);
        const Index i1 = std::min<Index>(i0 + 1, o.tile_rows - 1);
        const double wy = std::clamp(fy - static_cast<double>(i0), 0.0, 1.0);
        for (Index c = 0; c < w; ++c) {
            if (!valid(r, c)) continue;
            const double fx = (static_cast<double>(c) + 0.5) * rx - 0.5;
            const Index j0 = std::clamp<Index>(static_cast<Index>(std::floor(fx)), 0, o.tile_cols - 1);
            const Index j1 = std::min<Index>(j0 + 1, o.tile_cols - 1);
            const double wx = std::clamp(fx - static_cast<double>(j0), 0.0, 1.0);
            const auto b = static_cast<std::size_t>(detail::clahe_bin(plane(r, c), o));
            const Index ri[2] = {i0, i1};
            const Index ci[2] = {j0, j1};
            const double wr[2] = {1.0 - wy, wy};
            const double wc[2] = {1.0 - wx, wx};
            double acc = 0.0, wsum = 0.0;
            for (int a = 0; a < 2; ++a) {
                for (int d = 0; d < 2; ++d) {
                    const auto& lut = luts[static_cast<std::size_t>(ri[a] * o.tile_cols + ci[d])];
                    const double wt = wr[a] * wc[d];
                    if (lut.empty() || wt == 0.0) continue;
                    acc += wt * lut[b];
                    wsum += wt;
                }
            }
            if (wsum > 0.0) out(r, c) = static_cast<Scalar>(acc / wsum);
        }
    }
    return out;
}

// Median over the valid pixels of an odd square window with mirrored
// borders. Invalid pixels are left untouched; an even number of valid
// neighbours yields the mean of the two central order statistics.
template <typename Scalar>
PlaneT<Scalar> median_plane(const PlaneT<Scalar>& plane, const Mask& valid, Index window) {
    if (window < 3 || window % 2 == 0) {
        throw ValidationError("median window must be odd and >= 3, got " + std::to_string(window), "window");
    }
    const Index h = plane.rows(), w = plane.cols(), half = window / 2;
    PlaneT<Scalar> out = plane;
    std::vector<Scalar> buf;
    buf.reserve(static_cast<std::size_t>(window * window));
    for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
            if (!valid(r, c)) continue;
            buf.clear();
            for (Index dr = -half; dr <= half; ++dr) {
                const Index rr = reflect_index(r + dr, h);
                for (Index dc = -half; dc <= half; ++dc) {
                    const Index cc = reflect_index(c + dc, w);
                    if (valid(rr, cc)) buf.push_back(plane(rr, cc));
                }
            }
            const std::size_t mid = buf.size() / 2;
            std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid), buf.end());
            if (buf.size() % 2 == 1) {
                out(r, c) = buf[mid];
            } else {
                const Scalar upper = buf[mid];
                const Scalar lower = *std::max_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid));
                out(r, c) = static_cast<Scalar>((static_cast<double>(lower) + static_cast<double>(upper)) / 2.0);
            }
        }
    }
    return out;
}

// Per-band CLAHE. Geometry, nodata and metadata are preserved; the output is
// tagged with metadata "clahe" = "per-band".
MultibandRaster apply_clahe(const MultibandRaster& raster, const ClaheOptions& options = {});

// Per-band median filter.
MultibandRaster denoise(const MultibandRaster& raster, Index window = 3);

}  // namespace canopy
