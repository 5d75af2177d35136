#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace canopy {

using Point = Eigen::Vector2d;
// Closed ring: the last vertex repeats the first.
using Ring = std::vector<Point>;

// Shoelace area, positive for counter-clockwise rings.
double signed_area(const Ring& ring);
Point ring_centroid(const Ring& ring);
// Even-odd rule; points on the boundary may fall either way but the
// decision is deterministic.
bool point_in_ring(const Ring& ring, double x, double y);
// No two non-adjacent edges touch and adjacent edges share only their
// common vertex.
bool is_simple(const Ring& ring);

enum class CrownSource { watershed, imported };

struct CrownPolygon {
    std::string crown_id;
    Ring ring;
    std::optional<std::string> species;
    std::optional<int> vitality;
    std::optional<double> score;
    std::optional<double> height;
    CrownSource source = CrownSource::imported;
};

struct CrownCollection {
    std::string crs;
    std::vector<CrownPolygon> crowns;
};

// Throws ValidationError when the ring is open, too short, zero-area or
// self-intersecting.
void validate(const CrownPolygon& crown);
// Validates every crown and id uniqueness.
void validate(const CrownCollection& crowns);

// Two CRS identifiers are compatible when equal or when either is unset.
bool crs_compatible(const std::string& a, const std::string& b);

nlohmann::json to_geojson(const CrownCollection& crowns);
CrownCollection crowns_from_geojson(const nlohmann::json& doc);
CrownCollection read_crowns(const std::filesystem::path& path);
void write_crowns(const CrownCollection& crowns, const std::filesystem::path& path);

}  // namespace canopy
