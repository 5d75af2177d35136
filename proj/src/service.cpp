#include "canopy/service.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace canopy {

using ojson = nlohmann::ordered_json;

void validate(const TreeQuery& q) {
    if (q.vitality.min && q.vitality.max && *q.vitality.min > *q.vitality.max) {
        throw ValidationError("vitality_min exceeds vitality_max", "vitality");
    }
    auto check = [](const Range<double>& r, const char* name) {
        for (auto v : {r.min, r.max})
            if (v && !std::isfinite(*v)) throw ValidationError(std::string(name) + " bound is not finite", name);
        if (r.min && r.max && *r.min > *r.max) throw ValidationError(std::string(name) + " range is inverted", name);
    };
    check(q.ndvi_mean, "ndvi_mean");
    check(q.ndre_mean, "ndre_mean");
    if (q.bbox) {
        const BBox& b = *q.bbox;
        if (!std::isfinite(b.min_x) || !std::isfinite(b.min_y) || !std::isfinite(b.max_x) || !std::isfinite(b.max_y)) {
            throw ValidationError("bbox has non-finite coordinates", "bbox");
        }
        if (b.min_x > b.max_x || b.min_y > b.max_y) throw ValidationError("bbox minimum exceeds maximum", "bbox");
    }
    if (q.limit > kMaxQueryLimit) {
        throw ValidationError("limit must be <= " + std::to_string(kMaxQueryLimit), "limit");
    }
}

namespace {

double param_number(const std::string& text, const std::string& key) {
    double v;
    try {
        v = parse_number(text, key);
    } catch (const ValidationError&) {
        throw ValidationError("parameter '" + key + "' is not a number: '" + text + "'", key);
    }
    if (!std::isfinite(v)) throw ValidationError("parameter '" + key + "' must be finite", key);
    return v;
}

long long param_integer(const std::string& text, const std::string& key) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size()) {
        throw ValidationError("parameter '" + key + "' is not an integer: '" + text + "'", key);
    }
    return v;
}

}  // namespace

TreeQuery parse_tree_query(const QueryParams& params, const std::set<std::string>& extra) {
    TreeQuery q;
    std::set<std::string> seen;
    for (const auto& [key, value] : params) {
        if (extra.count(key)) continue;
        if (key != "species" && !seen.insert(key).second) {
            throw ValidationError("parameter '" + key + "' given more than once", key);
        }
        if (key == "species") {
            std::stringstream ss(value);
            for (std::string s; std::getline(ss, s, ',');)
                if (!s.empty()) q.species.insert(s);
        } else if (key == "vitality_min") {
            q.vitality.min = static_cast<int>(param_integer(value, key));
        } else if (key == "vitality_max") {
            q.vitality.max = static_cast<int>(param_integer(value, key));
        } else if (key == "bbox") {
            std::vector<double> v;
            std::stringstream ss(value);
            for (std::string s; std::getline(ss, s, ',');) v.push_back(param_number(s, key));
            if (v.size() != 4) throw ValidationError("bbox needs min_x,min_y,max_x,max_y", "bbox");
            q.bbox = BBox{v[0], v[1], v[2], v[3]};
        } else if (key == "ndvi_min") {
            q.ndvi_mean.min = param_number(value, key);
        } else if (key == "ndvi_max") {
            q.ndvi_mean.max = param_number(value, key);
        } else if (key == "ndre_min") {
            q.ndre_mean.min = param_number(value, key);
        } else if (key == "ndre_max") {
            q.ndre_mean.max = param_number(value, key);
        } else if (key == "snapshot") {
            q.snapshot = parse_snapshot_id(value);
        } else if (key == "offset") {
            const long long v = param_integer(value, key);
            if (v < 0) throw ValidationError("offset must be >= 0", key);
            q.offset = static_cast<std::size_t>(v);
        } else if (key == "limit") {
            const long long v = param_integer(value, key);
            if (v < 0) throw ValidationError("limit must be >= 0", key);
            q.limit = static_cast<std::size_t>(v);
        } else {
            throw ValidationError("unknown query parameter '" + key + "'", key);
        }
    }
    validate(q);
    return q;
}

std::optional<double> TreeView::stat_mean(AnnotationKind kind) const {
    const auto it = annotations.find(kind);
    if (it == annotations.end()) return std::nullopt;
    const auto& p = it->second.payload;
    if (!p.contains("mean") || !p["mean"].is_number()) return std::nullopt;
    return p["mean"].get<double>();
}

bool matches(const TreeQuery& q, const TreeView& t) {
    const TreeRecord& r = *t.record;
    if (!q.species.empty() && !q.species.count(r.species)) return false;
    if (q.vitality.active() && (!r.vitality || !q.vitality.contains(*r.vitality))) return false;
    if (q.bbox && !q.bbox->contains(r.x, r.y)) return false;
    if (q.ndvi_mean.active()) {
        const auto v = t.stat_mean(AnnotationKind::ndvi_stats);
        if (!v || !q.ndvi_mean.contains(*v)) return false;
    }
    if (q.ndre_mean.active()) {
        const auto v = t.stat_mean(AnnotationKind::ndre_stats);
        if (!v || !q.ndre_mean.contains(*v)) return false;
    }
    return true;
}

namespace {

std::shared_ptr<const CadastreSnapshot> resolve(const InventoryStore& store, const TreeQuery& q) {
    if (q.snapshot) return store.snapshot(*q.snapshot);
    const auto latest = store.latest_snapshot();
    if (!latest) throw NotFoundError("the store holds no snapshots");
    return store.snapshot(*latest);
}

std::vector<TreeView> filtered(const InventoryStore& store, const TreeQuery& q,
                               const std::shared_ptr<const CadastreSnapshot>& snap) {
    std::unordered_map<std::string, std::map<AnnotationKind, TreeAnnotation>> latest;
    for (auto& a : store.annotations()) {
        auto& slot = latest[a.target_id];
        const auto it = slot.find(a.kind);
        if (it == slot.end() || a.produced_at >= it->second.produced_at) slot[a.kind] = std::move(a);
    }
    std::vector<TreeView> out;
    for (const auto& r : snap->records) {
        TreeView v{&r, {}};
        if (const auto it = latest.find(r.tree_id); it != latest.end()) v.annotations = it->second;
        if (matches(q, v)) out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

TreePage query_trees(const InventoryStore& store, const TreeQuery& q) {
    validate(q);
    TreePage page;
    page.snapshot = resolve(store, q);
    page.snapshot_id = page.snapshot->snapshot_id;
    std::vector<TreeView> all = filtered(store, q, page.snapshot);
    page.total_count = all.size();
    page.offset = q.offset;
    page.limit = q.limit;
    const std::size_t start = std::min(q.offset, all.size());
    const std::size_t end = std::min(all.size(), start + q.limit);
    page.items.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(start)),
                      std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(end)));
    return page;
}

TreePage query_all(const InventoryStore& store, const TreeQuery& q) {
    TreeQuery unpaged = q;
    unpaged.offset = 0;
    unpaged.limit = 0;
    validate(unpaged);
    TreePage page;
    page.snapshot = resolve(store, unpaged);
    page.snapshot_id = page.snapshot->snapshot_id;
    page.items = filtered(store, unpaged, page.snapshot);
    page.total_count = page.items.size();
    page.limit = page.items.size();
    return page;
}

HistogramField parse_histogram_field(std::string_view text) {
    if (text == "species") return HistogramField::species;
    if (text == "vitality") return HistogramField::vitality;
    if (text == "ndvi_mean") return HistogramField::ndvi_mean;
    if (text == "ndre_mean") return HistogramField::ndre_mean;
    throw ValidationError("unsupported histogram field '" + std::string(text) + "'", "field");
}

std::string to_string(HistogramField f) {
    switch (f) {
        case HistogramField::species: return "species";
        case HistogramField::vitality: return "vitality";
        case HistogramField::ndvi_mean: return "ndvi_mean";
        case HistogramField::ndre_mean: return "ndre_mean";
    }
    return "species";
}

std::vector<double> histogram_edges(double lo, double hi, int bins) {
    std::vector<double> e(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    return e;
}

Histogram stats_histogram(const InventoryStore& store, const TreeQuery& q, HistogramField field, int bins) {
    const TreePage all = query_all(store, q);
    Histogram h;
    h.field = field;
    h.total = all.items.size();
    if (field == HistogramField::species || field == HistogramField::vitality) {
        std::map<std::string, std::size_t> counts;
        std::map<int, std::size_t> vit;
        std::size_t unknown = 0;
        for (const auto& t : all.items) {
            if (field == HistogramField::species) {
                ++counts[t.record->species];
            } else if (t.record->vitality) {
                ++vit[*t.record->vitality];
            } else {
                ++unknown;
            }
        }
        for (const auto& [k, n] : vit) h.buckets.push_back({std::to_string(k), std::nullopt, std::nullopt, n});
        for (const auto& [k, n] : counts) h.buckets.push_back({k, std::nullopt, std::nullopt, n});
        if (unknown) h.buckets.push_back({"unknown", std::nullopt, std::nullopt, unknown});
        return h;
    }
    if (bins < 1 || bins > 1000) throw ValidationError("bins must be in 1..1000", "bins");
    const auto kind = field == HistogramField::ndvi_mean ? AnnotationKind::ndvi_stats : AnnotationKind::ndre_stats;
    const std::vector<double> edges = histogram_edges(-1.0, 1.0, bins);
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    std::size_t unknown = 0;
    for (const auto& t : all.items) {
        const auto v = t.stat_mean(kind);
        if (!v || *v < edges.front() || *v > edges.back()) {
            ++unknown;
            continue;
        }
        const auto it = std::upper_bound(edges.begin(), edges.end(), *v);
        const auto b = std::min<std::size_t>(static_cast<std::size_t>(it - edges.begin()) - 1, counts.size() - 1);
        ++counts[b];
    }
    for (int i = 0; i < bins; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        std::ostringstream key;
        key << '[' << format_number(edges[ui]) << ',' << format_number(edges[ui + 1]) << (i + 1 == bins ? ']' : ')');
        h.buckets.push_back({key.str(), edges[ui], edges[ui + 1], counts[ui]});
    }
    if (unknown) h.buckets.push_back({"unknown", std::nullopt, std::nullopt, unknown});
    return h;
}

ojson to_json(const TreeView& t) {
    ojson props = to_json(*t.record);
    ojson ann = ojson::object();
    for (const auto& [kind, a] : t.annotations) {
        ojson j = to_json(a);
        j.erase("kind");
        j.erase("target_id");
        ann[to_string(kind)] = j;
    }
    props["annotations"] = ann;
    ojson f = ojson::object();
    f["type"] = "Feature";
    f["id"] = t.record->tree_id;
    f["geometry"] = {{"type", "Point"}, {"coordinates", {t.record->x, t.record->y}}};
    f["properties"] = props;
    return f;
}

ojson to_geojson(const TreePage& page) {
    ojson j = ojson::object();
    j["type"] = "FeatureCollection";
    j["snapshot_id"] = page.snapshot_id;
    j["total_count"] = page.total_count;
    j["offset"] = page.offset;
    j["limit"] = page.limit;
    ojson features = ojson::array();
    for (const auto& t : page.items) features.push_back(to_json(t));
    j["features"] = features;
    return j;
}

ojson to_json(const Histogram& h) {
    ojson j = ojson::object();
    j["field"] = to_string(h.field);
    j["total"] = h.total;
    ojson b = ojson::array();
    for (const auto& bucket : h.buckets) {
        ojson e = ojson::object();
        e["key"] = bucket.key;
        if (bucket.lower) e["lower"] = *bucket.lower;
        if (bucket.upper) e["upper"] = *bucket.upper;
        e["count"] = bucket.count;
        b.push_back(e);
    }
    j["buckets"] = b;
    return j;
}

}  // namespace canopy
