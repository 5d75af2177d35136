#pragma once

#include "canopy/geometry.hpp"
#include "canopy/raster.hpp"

#include <cmath>
#include <vector>

namespace canopy {

inline constexpr double kDefaultMinHeight = 2.0;

// The canopy height band: "chm" when present, otherwise the only band.
const Band& chm_band(const MultibandRaster& chm);

// Throws ValidationError when a valid height is negative.
void validate_chm(const MultibandRaster& chm);

// DSM - DTM, negative differences clamped to 0, nodata where either input is
// invalid.
MultibandRaster chm_from_surfaces(const MultibandRaster& dsm, const MultibandRaster& dtm);

// Normalized Gaussian convolution. Pixels outside the plane or invalid get
// zero weight and the kernel is renormalized over the remaining ones; invalid
// pixels keep their value. Radius is ceil(3 sigma).
template <typename Scalar>
PlaneT<Scalar> gaussian_smooth_plane(const PlaneT<Scalar>& plane, const Mask& valid, double sigma) {
    if (sigma == 0.0) return plane;
    const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (Index i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    }
    const Index h = plane.rows(), w = plane.cols();
    PlaneT<Scalar> out = plane;
    for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
            if (!valid(r, c)) continue;
            double acc = 0.0, wsum = 0.0;
            for (Index dr = -radius; dr <= radius; ++dr) {
                const Index rr = r + dr;
                if (rr < 0 || rr >= h) continue;
                const double kr = k[static_cast<std::size_t>(dr + radius)];
                for (Index dc = -radius; dc <= radius; ++dc) {
                    const Index cc = c + dc;
                    if (cc < 0 || cc >= w || !valid(rr, cc)) continue;
                    const double wt = kr * k[static_cast<std::size_t>(dc + radius)];
                    acc += wt * static_cast<double>(plane(rr, cc));
                    wsum += wt;
                }
            }
            out(r, c) = static_cast<Scalar>(acc / wsum);
        }
    }
    return out;
}

MultibandRaster smooth_chm(const MultibandRaster& chm, double sigma);

struct Treetop {
    Index row = 0;
    Index col = 0;
    double x = 0.0;  // pixel centre, world units
    double y = 0.0;
    double height = 0.0;
};

// A valid pixel p with height >= min_height is a treetop when every other
// valid pixel q with |q - p| <= window_radius is lower, or equally high and
// lexicographically after p in (row, col). Results are in row-major order.
std::vector<Treetop> detect_local_maxima(const MultibandRaster& chm, Index window_radius,
                                         double min_height = kDefaultMinHeight);

// Marker-controlled watershed by priority flood on the inverted height
// surface. Label 0 is unassigned, label i + 1 belongs to markers[i]. Growth is
// 4-connected over valid pixels >= min_height; the queue pops the highest
// pixel first, ties to the lower marker index, then first-in.
LabelPlane watershed_labels(const MultibandRaster& chm, const std::vector<Treetop>& markers,
                            double min_height = kDefaultMinHeight);

// Outer boundary of a 4-connected pixel set as a counter-clockwise world
// ring through pixel corners. Holes are filled first; collinear vertices are
// dropped.
Ring trace_region(const Mask& region, const GeoTransform& transform);

// One crown per marker ("crown_<i+1>", source watershed, height = marker
// height), vectorized from watershed_labels.
CrownCollection watershed_delineate(const MultibandRaster& chm, const std::vector<Treetop>& markers,
                                    double min_height = kDefaultMinHeight);

}  // namespace canopy
