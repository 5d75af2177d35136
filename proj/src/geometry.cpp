#include "canopy/geometry.hpp"

#include "canopy/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace canopy {

using nlohmann::json;

double signed_area(const Ring& ring) {
    double a = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        a += ring[i].x() * ring[i + 1].y() - ring[i + 1].x() * ring[i].y();
    }
    return 0.5 * a;
}

Point ring_centroid(const Ring& ring) {
    const double a = signed_area(ring);
    if (a == 0.0) {
        Point s = Point::Zero();
        const std::size_t n = ring.size() > 1 ? ring.size() - 1 : ring.size();
        for (std::size_t i = 0; i < n; ++i) s += ring[i];
        return n ? Point(s / static_cast<double>(n)) : s;
    }
    // Shift to the first vertex for numerical stability with large world coordinates.
    const Point o = ring.front();
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const Point p = ring[i] - o, q = ring[i + 1] - o;
        const double cross = p.x() * q.y() - q.x() * p.y();
        cx += (p.x() + q.x()) * cross;
        cy += (p.y() + q.y()) * cross;
    }
    return o + Point(cx / (6.0 * a), cy / (6.0 * a));
}

bool point_in_ring(const Ring& ring, double x, double y) {
    bool inside = false;
    const std::size_t n = ring.size();
    if (n < 2) return false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = ring[i].x(), yi = ring[i].y();
        const double xj = ring[j].x(), yj = ring[j].y();
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

namespace {

int orientation(const Point& a, const Point& b, const Point& c) {
    const double v = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    return (v > 0) - (v < 0);
}

bool on_segment(const Point& a, const Point& b, const Point& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
           p.y() <= std::max(a.y(), b.y());
}

bool segments_touch(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
    const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

std::string_view source_name(CrownSource s) { return s == CrownSource::watershed ? "watershed" : "imported"; }

}  // namespace

bool is_simple(const Ring& ring) {
    const std::size_t n = ring.size() - 1;  // edge count
    if (ring.size() < 4) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            const Point &a = ring[i], &b = ring[i + 1], &c = ring[j], &d = ring[j + 1];
            if (adjacent) {
                // Adjacent edges may only share their common vertex: reject
                // folding back onto each other.
                const Point& shared = (j == i + 1) ? b : a;
                const Point& other_i = (j == i + 1) ? a : b;
                const Point& other_j = (j == i + 1) ? d : c;
                if (orientation(shared, other_i, other_j) == 0 &&
                    (other_j - shared).dot(other_i - shared) > 0.0) {
                    return false;
                }
                continue;
            }
            if (segments_touch(a, b, c, d)) return false;
        }
    }
    return true;
}

void validate(const CrownPolygon& crown) {
    const std::string who = "crown '" + crown.crown_id + "'";
    if (crown.ring.size() < 4) throw ValidationError(who + " ring needs at least 4 vertices", "ring");
    if (crown.ring.front() != crown.ring.back()) throw ValidationError(who + " ring is not closed", "ring");
    for (const auto& p : crown.ring) {
        if (!p.allFinite()) throw ValidationError(who + " has non-finite coordinates", "ring");
    }
    if (!(std::abs(signed_area(crown.ring)) > 0.0)) {
        throw ValidationError(who + " is degenerate (zero area)", "ring");
    }
    if (!is_simple(crown.ring)) throw ValidationError(who + " ring self-intersects", "ring");
    if (crown.score && (*crown.score < 0.0 || *crown.score > 1.0)) {
        throw ValidationError(who + " score outside [0, 1]", "score");
    }
}

void validate(const CrownCollection& crowns) {
    std::set<std::string> ids;
    for (const auto& c : crowns.crowns) {
        validate(c);
        if (!ids.insert(c.crown_id).second) {
            throw ValidationError("duplicate crown_id '" + c.crown_id + "'", "crown_id");
        }
    }
}

bool crs_compatible(const std::string& a, const std::string& b) { return a.empty() || b.empty() || a == b; }

json to_geojson(const CrownCollection& crowns) {
    json fc;
    fc["type"] = "FeatureCollection";
    if (!crowns.crs.empty()) fc["crs"] = {{"type", "name"}, {"properties", {{"name", crowns.crs}}}};
    json features = json::array();
    for (const auto& c : crowns.crowns) {
        json ring = json::array();
        for (const auto& p : c.ring) ring.push_back({p.x(), p.y()});
        json props;
        props["crown_id"] = c.crown_id;
        props["height"] = c.height ? json(*c.height) : json(nullptr);
        props["score"] = c.score ? json(*c.score) : json(nullptr);
        props["source"] = source_name(c.source);
        if (c.species) props["species"] = *c.species;
        if (c.vitality) props["vitality"] = *c.vitality;
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}},
                            {"properties", props}});
    }
    fc["features"] = features;
    return fc;
}

CrownCollection crowns_from_geojson(const json& doc) {
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
        throw ValidationError("crowns must be a GeoJSON FeatureCollection", "type");
    }
    CrownCollection out;
    if (doc.contains("crs")) out.crs = doc["crs"].value("properties", json::object()).value("name", "");
    std::size_t index = 0;
    for (const auto& f : doc["features"]) {
        ++index;
        const auto& geom = f.at("geometry");
        const std::string type = geom.value("type", "");
        if (type != "Polygon") {
            throw UnsupportedError("feature " + std::to_string(index) + ": geometry type '" + type +
                                       "' is not supported (Polygon expected)",
                                   "geometry");
        }
        CrownPolygon c;
        const json props = f.value("properties", json::object());
        if (props.contains("crown_id") && !props["crown_id"].is_null()) {
            c.crown_id = props["crown_id"].is_string() ? props["crown_id"].get<std::string>()
                                                        : props["crown_id"].dump();
        } else if (f.contains("id")) {
            c.crown_id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
        } else {
            c.crown_id = "crown_" + std::to_string(index);
        }
        const auto& rings = geom.at("coordinates");
        if (rings.empty()) throw ValidationError("crown '" + c.crown_id + "' has no rings", "geometry");
        for (const auto& p : rings[0]) c.ring.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        if (!c.ring.empty() && c.ring.front() != c.ring.back()) c.ring.push_back(c.ring.front());
        if (props.contains("species") && props["species"].is_string()) c.species = props["species"];
        if (props.contains("vitality") && props["vitality"].is_number_integer()) c.vitality = props["vitality"];
        if (props.contains("score") && props["score"].is_number()) c.score = props["score"];
        if (props.contains("height") && props["height"].is_number()) c.height = props["height"];
        c.source = props.value("source", "imported") == "watershed" ? CrownSource::watershed : CrownSource::imported;
        out.crowns.push_back(std::move(c));
    }
    validate(out);
    return out;
}

CrownCollection read_crowns(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open crowns file '" + path.string() + "'");
    try {
        return crowns_from_geojson(json::parse(in));
    } catch (const json::exception& e) {
        throw ValidationError("malformed GeoJSON in '" + path.string() + "': " + e.what(), "geojson");
    }
}

void write_crowns(const CrownCollection& crowns, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write crowns file '" + path.string() + "'");
    out << to_geojson(crowns).dump(1) << '\n';
    if (!out) throw IoError("failed writing crowns file '" + path.string() + "'");
}

}  // namespace canopy
