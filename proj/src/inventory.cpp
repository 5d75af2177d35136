#include "canopy/inventory.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <functional>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace canopy {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

SnapshotId parse_snapshot_id(std::string_view text) {
    std::string_view digits = text;
    if (!digits.empty() && (digits.front() == 'S' || digits.front() == 's')) digits.remove_prefix(1);
    SnapshotId id = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size() || id < 1) {
        throw ValidationError("invalid snapshot id '" + std::string(text) + "'", "snapshot");
    }
    return id;
}

const std::vector<std::string>& tree_fields() {
    static const std::vector<std::string> f{"tree_id",   "x",         "y",         "crs",
                                            "species",   "height_est", "crown_diameter_est",
                                            "vitality",  "site_info", "last_inspected"};
    return f;
}

namespace {

template <typename T>
ojson opt(const std::optional<T>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

std::optional<double> opt_number(const json& v, const std::string& field) {
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw ValidationError("field '" + field + "' must be a number or null", field);
    return v.get<double>();
}

}  // namespace

ojson field_value(const TreeRecord& r, const std::string& field) {
    if (field == "tree_id") return r.tree_id;
    if (field == "x") return r.x;
    if (field == "y") return r.y;
    if (field == "crs") return r.crs;
    if (field == "species") return r.species;
    if (field == "height_est") return opt(r.height_est);
    if (field == "crown_diameter_est") return opt(r.crown_diameter_est);
    if (field == "vitality") return opt(r.vitality);
    if (field == "site_info") return r.site_info;
    if (field == "last_inspected") return opt(r.last_inspected);
    throw ValidationError("unknown tree field '" + field + "'", field);
}

void set_field(TreeRecord& r, const std::string& field, const json& v) {
    auto str = [&](std::string& out) {
        if (!v.is_string()) throw ValidationError("field '" + field + "' must be a string", field);
        out = v.get<std::string>();
    };
    if (field == "tree_id") {
        str(r.tree_id);
    } else if (field == "x" || field == "y") {
        if (!v.is_number()) throw ValidationError("field '" + field + "' must be a number", field);
        (field == "x" ? r.x : r.y) = v.get<double>();
    } else if (field == "crs") {
        str(r.crs);
    } else if (field == "species") {
        str(r.species);
    } else if (field == "height_est") {
        r.height_est = opt_number(v, field);
    } else if (field == "crown_diameter_est") {
        r.crown_diameter_est = opt_number(v, field);
    } else if (field == "vitality") {
        if (v.is_null()) {
            r.vitality.reset();
        } else if (v.is_number_integer()) {
            r.vitality = v.get<int>();
        } else {
            throw ValidationError("field 'vitality' must be an integer or null", field);
        }
    } else if (field == "site_info") {
        str(r.site_info);
    } else if (field == "last_inspected") {
        if (v.is_null()) {
            r.last_inspected.reset();
        } else {
            std::string s;
            str(s);
            r.last_inspected = parse_date(s, field);
        }
    } else {
        throw ValidationError("unknown tree field '" + field + "'", field);
    }
}

ojson to_json(const TreeRecord& r) {
    ojson j = ojson::object();
    for (const auto& f : tree_fields()) j[f] = field_value(r, f);
    return j;
}

TreeRecord tree_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("tree record must be an object", "record");
    TreeRecord r;
    for (const auto& f : tree_fields()) {
        if (!j.contains(f)) throw ValidationError("tree record lacks field '" + f + "'", f);
        set_field(r, f, j.at(f));
    }
    return r;
}

const TreeRecord* CadastreSnapshot::find(const std::string& tree_id) const {
    const auto it = std::lower_bound(records.begin(), records.end(), tree_id,
                                     [](const TreeRecord& r, const std::string& id) { return r.tree_id < id; });
    return it != records.end() && it->tree_id == tree_id ? &*it : nullptr;
}

namespace {

void sort_records(std::vector<TreeRecord>& records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.tree_id < b.tree_id; });
}

void check_unique(const std::vector<TreeRecord>& sorted) {
    std::set<std::string> dups;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].tree_id == sorted[i - 1].tree_id) dups.insert(sorted[i].tree_id);
    if (!dups.empty()) {
        std::string list;
        for (const auto& d : dups) list += (list.empty() ? "" : ", ") + d;
        throw ValidationError("duplicate tree_id: " + list, "tree_id");
    }
}

ojson records_json(const std::vector<TreeRecord>& records) {
    std::vector<const TreeRecord*> order;
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->tree_id < b->tree_id; });
    ojson arr = ojson::array();
    for (const auto* r : order) arr.push_back(to_json(*r));
    return arr;
}

}  // namespace

std::string canonical_json(const std::vector<TreeRecord>& records) { return records_json(records).dump(); }

std::string canonical_json(const CadastreSnapshot& s) {
    ojson j = ojson::object();
    j["snapshot_id"] = s.snapshot_id;
    j["captured_at"] = format_timestamp(s.captured_at);
    j["records"] = records_json(s.records);
    return j.dump();
}

CadastreSnapshot snapshot_from_json(const json& j) {
    CadastreSnapshot s;
    try {
        s.snapshot_id = j.at("snapshot_id").get<SnapshotId>();
        s.captured_at = parse_timestamp(j.at("captured_at").get<std::string>(), "captured_at");
        for (const auto& r : j.at("records")) s.records.push_back(tree_from_json(r));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed snapshot: ") + e.what(), "snapshot");
    }
    sort_records(s.records);
    check_unique(s.records);
    return s;
}

namespace {

void fill_optional_fields(TreeRecord& r, const std::function<std::optional<std::string>(const std::string&)>& get,
                          const CadastreOptions& o, const std::string& where) {
    auto text = [&](const std::string& k) -> std::optional<std::string> {
        auto v = get(k);
        if (v && v->empty()) v.reset();
        return v;
    };
    r.crs = text("crs").value_or(o.default_crs);
    r.species = text("species").value_or("unknown");
    if (auto v = text("height_est")) r.height_est = parse_number(*v, "height_est");
    if (auto v = text("crown_diameter_est")) r.crown_diameter_est = parse_number(*v, "crown_diameter_est");
    if (auto v = text("vitality"); v && *v != "unknown") {
        int val = 0;
        const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), val);
        if (ec != std::errc{} || p != v->data() + v->size()) {
            throw ValidationError(where + ": vitality '" + *v + "' is not an integer", "vitality");
        }
        if (val < o.vitality.min || val > o.vitality.max) {
            throw ValidationError(where + ": vitality " + *v + " outside " + std::to_string(o.vitality.min) + ".." +
                                      std::to_string(o.vitality.max),
                                  "vitality");
        }
        r.vitality = val;
    }
    r.site_info = get("site_info").value_or("");
    if (auto v = text("last_inspected")) r.last_inspected = parse_date(*v, "last_inspected");
    for (auto* d : {&r.height_est, &r.crown_diameter_est})
        if (*d && !std::isfinite(**d)) throw ValidationError(where + ": non-finite dimension", "height_est");
}

std::vector<TreeRecord> cadastre_from_csv(const fs::path& path, const CadastreOptions& o) {
    const CsvTable t = read_csv(path);
    for (const char* col : {"tree_id", "x", "y"}) {
        if (!t.find_column(col)) throw ValidationError("cadastre lacks mandatory column '" + std::string(col) + "'", col);
    }
    const std::size_t id = t.column("tree_id"), cx = t.column("x"), cy = t.column("y");
    std::vector<TreeRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = "row " + std::to_string(i + 1);
        TreeRecord r;
        r.tree_id = row[id];
        if (r.tree_id.empty()) throw ValidationError(where + ": empty tree_id", "tree_id");
        r.x = parse_number(row[cx], "x");
        r.y = parse_number(row[cy], "y");
        if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ValidationError(where + ": non-finite location", "x");
        fill_optional_fields(
            r,
            [&](const std::string& k) -> std::optional<std::string> {
                const auto c = t.find_column(k);
                return c ? std::optional<std::string>(row[*c]) : std::nullopt;
            },
            o, where);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TreeRecord> cadastre_from_geojson(const fs::path& path, const CadastreOptions& o) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read cadastre '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("invalid GeoJSON in '" + path.string() + "': " + e.what(), "geojson");
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
        throw ValidationError("cadastre GeoJSON must be a FeatureCollection", "type");
    }
    CadastreOptions opts = o;
    if (doc.contains("crs") && doc["crs"].is_object()) {
        const auto& props = doc["crs"].value("properties", json::object());
        if (props.contains("name") && props["name"].is_string()) opts.default_crs = props["name"].get<std::string>();
    }
    std::vector<TreeRecord> out;
    std::size_t n = 0;
    for (const auto& f : doc["features"]) {
        ++n;
        const std::string where = "feature " + std::to_string(n);
        const json& g = f.value("geometry", json());
        if (!g.is_object() || g.value("type", "") != "Point") throw ValidationError(where + ": geometry must be a Point", "geometry");
        const auto& c = g.at("coordinates");
        if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
            throw ValidationError(where + ": bad coordinates", "geometry");
        }
        const json props = f.value("properties", json::object());
        TreeRecord r;
        if (props.contains("tree_id") && !props["tree_id"].is_null()) {
            r.tree_id = props["tree_id"].is_string() ? props["tree_id"].get<std::string>() : props["tree_id"].dump();
        } else if (f.contains("id")) {
            r.tree_id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
        }
        if (r.tree_id.empty()) throw ValidationError(where + ": missing tree_id", "tree_id");
        r.x = c[0].get<double>();
        r.y = c[1].get<double>();
        fill_optional_fields(
            r,
            [&](const std::string& k) -> std::optional<std::string> {
                if (!props.contains(k) || props[k].is_null()) return std::nullopt;
                const auto& v = props[k];
                if (v.is_string()) return v.get<std::string>();
                if (v.is_number_integer()) return std::to_string(v.get<long long>());
                if (v.is_number()) return format_number(v.get<double>());
                return v.dump();
            },
            opts, where);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::vector<TreeRecord> read_cadastre(const fs::path& path, const CadastreOptions& options) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    std::vector<TreeRecord> records = (ext == ".geojson" || ext == ".json") ? cadastre_from_geojson(path, options)
                                                                             : cadastre_from_csv(path, options);
    sort_records(records);
    check_unique(records);
    return records;
}

std::string to_string(Depth d) {
    switch (d) {
        case Depth::d1: return "d1";
        case Depth::d2: return "d2";
        case Depth::d3: return "d3";
    }
    return "d1";
}

Depth parse_depth(std::string_view text) {
    if (text == "d1") return Depth::d1;
    if (text == "d2") return Depth::d2;
    if (text == "d3") return Depth::d3;
    throw ValidationError("unknown depth label '" + std::string(text) + "' (expected d1, d2 or d3)", "depth");
}

std::string to_string(AnnotationKind k) {
    switch (k) {
        case AnnotationKind::species_prediction: return "species_prediction";
        case AnnotationKind::ndvi_stats: return "ndvi_stats";
        case AnnotationKind::ndre_stats: return "ndre_stats";
        case AnnotationKind::vitality_prediction: return "vitality_prediction";
    }
    return "species_prediction";
}

AnnotationKind parse_annotation_kind(std::string_view text) {
    for (auto k : {AnnotationKind::species_prediction, AnnotationKind::ndvi_stats, AnnotationKind::ndre_stats,
                   AnnotationKind::vitality_prediction})
        if (to_string(k) == text) return k;
    throw ValidationError("unknown annotation kind '" + std::string(text) + "'", "kind");
}

void validate(const TreeAnnotation& a, const VitalityRange& vitality) {
    if (a.target_id.empty()) throw ValidationError("annotation without target id", "target_id");
    if (a.producer.empty()) throw ValidationError("annotation without producer", "producer");
    const json& p = a.payload;
    if (!p.is_object()) throw ValidationError("annotation payload must be an object", "payload");
    auto only = [&](std::initializer_list<const char*> keys) {
        for (const auto& [k, v] : p.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; })) {
                throw ValidationError("unexpected payload key '" + k + "' for " + to_string(a.kind), "payload." + k);
            }
        }
    };
    auto need_number = [&](const char* key) {
        if (!p.contains(key) || !p[key].is_number()) {
            throw ValidationError(to_string(a.kind) + " payload needs numeric '" + key + "'", std::string("payload.") + key);
        }
    };
    switch (a.kind) {
        case AnnotationKind::species_prediction:
            only({"species", "cluster", "confidence"});
            if (!p.contains("species") || !p["species"].is_string()) {
                throw ValidationError("species_prediction payload needs string 'species'", "payload.species");
            }
            if (p.contains("cluster") && !p["cluster"].is_number_integer()) {
                throw ValidationError("'cluster' must be an integer", "payload.cluster");
            }
            if (p.contains("confidence")) {
                need_number("confidence");
                const double c = p["confidence"].get<double>();
                if (c < 0.0 || c > 1.0) throw ValidationError("'confidence' must be in [0, 1]", "payload.confidence");
            }
            break;
        case AnnotationKind::ndvi_stats:
        case AnnotationKind::ndre_stats:
            only({"count", "mean", "median", "std", "min", "max", "p10", "p90"});
            if (!p.contains("count") || !p["count"].is_number_integer() || p["count"].get<long long>() < 0) {
                throw ValidationError("stats payload needs a non-negative integer 'count'", "payload.count");
            }
            for (const char* k : {"mean", "median", "std", "min", "max", "p10", "p90"}) need_number(k);
            break;
        case AnnotationKind::vitality_prediction: {
            only({"vitality"});
            if (!p.contains("vitality") || !p["vitality"].is_number_integer()) {
                throw ValidationError("vitality_prediction payload needs integer 'vitality'", "payload.vitality");
            }
            const int v = p["vitality"].get<int>();
            if (v < vitality.min || v > vitality.max) {
                throw ValidationError("vitality " + std::to_string(v) + " out of range", "payload.vitality");
            }
            break;
        }
    }
}

ojson to_json(const TreeAnnotation& a) {
    ojson j = ojson::object();
    j["target_id"] = a.target_id;
    j["kind"] = to_string(a.kind);
    j["payload"] = ojson::parse(a.payload.dump());
    j["produced_at"] = format_timestamp(a.produced_at);
    j["producer"] = a.producer;
    return j;
}

TreeAnnotation annotation_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("annotation must be an object", "annotation");
    TreeAnnotation a;
    try {
        a.target_id = j.contains("tree_id") ? j.at("tree_id").get<std::string>()
                      : j.contains("crown_id") ? j.at("crown_id").get<std::string>()
                                               : j.at("target_id").get<std::string>();
        a.kind = parse_annotation_kind(j.at("kind").get<std::string>());
        a.payload = j.at("payload");
        a.produced_at = parse_timestamp(j.at("produced_at").get<std::string>(), "produced_at");
        a.producer = j.at("producer").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed annotation: ") + e.what(), "annotation");
    }
    return a;
}

// ---------------------------------------------------------------- FileStore

class FileStore::WriterLock {
public:
    explicit WriterLock(const FileStore& s) : guard_(s.mutex_) {
        const fs::path p = s.root_ / ".lock";
        fd_ = ::open(p.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) throw IoError("cannot open store lock '" + p.string() + "'");
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw IoError("cannot lock store '" + s.root_.string() + "'");
        }
    }
    ~WriterLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    WriterLock(const WriterLock&) = delete;
    WriterLock& operator=(const WriterLock&) = delete;

private:
    std::unique_lock<std::shared_mutex> guard_;
    int fd_ = -1;
};

namespace {

void write_atomic(const fs::path& target, const std::string& content) {
    const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp");
    {
        const int fd = ::open(tmp.c_str(), O_CREAT | O_TRUNC | O_WRONLY | O_CLOEXEC, 0644);
        if (fd < 0) throw IoError("cannot write '" + tmp.string() + "'");
        std::size_t done = 0;
        while (done < content.size()) {
            const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
            if (n <= 0) {
                ::close(fd);
                throw IoError("failed writing '" + tmp.string() + "'");
            }
            done += static_cast<std::size_t>(n);
        }
        ::fsync(fd);
        ::close(fd);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot commit '" + target.string() + "': " + ec.message());
}

void append_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to '" + path.string() + "'");
    out << text;
    out.flush();
    if (!out) throw IoError("failed appending to '" + path.string() + "'");
}

// Complete lines only; a torn trailing line from a concurrent writer is ignored.
std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path, std::ios::binary);
    if (!in) return lines;
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string all = ss.str();
    std::size_t start = 0;
    for (std::size_t nl; (nl = all.find('\n', start)) != std::string::npos; start = nl + 1) {
        if (nl > start) lines.push_back(all.substr(start, nl - start));
    }
    return lines;
}

const char* kReadingsHeader = "sensor_id,timestamp,depth,vwc";

void validate_reading(const SoilMoistureReading& r, const std::string& where) {
    if (r.sensor_id.empty()) throw ValidationError(where + ": empty sensor_id", "sensor_id");
    if (!(r.vwc >= 0.0 && r.vwc <= 100.0)) {
        throw ValidationError(where + ": vwc " + format_number(r.vwc) + " outside [0, 100]", "vwc");
    }
}

}  // namespace

FileStore::FileStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "snapshots", ec);
    if (ec) throw IoError("cannot create store '" + root_.string() + "': " + ec.message());
}

std::vector<SnapshotInfo> FileStore::snapshots() const {
    std::vector<SnapshotId> ids;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root_ / "snapshots", ec)) {
        const std::string name = e.path().filename().string();
        if (e.path().extension() != ".json" || name.front() == '.') continue;
        const std::string stem = e.path().stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
        ids.push_back(std::stoll(stem));
    }
    if (ec) throw IoError("cannot list snapshots in '" + root_.string() + "'");
    std::sort(ids.begin(), ids.end());
    std::vector<SnapshotInfo> out;
    for (SnapshotId id : ids) {
        const auto s = snapshot(id);
        out.push_back({id, s->captured_at, s->records.size()});
    }
    return out;
}

std::shared_ptr<const CadastreSnapshot> FileStore::snapshot(SnapshotId id) const {
    {
        std::lock_guard lock(cache_mutex_);
        const auto it = cache_.find(id);
        if (it != cache_.end()) return it->second;
    }
    const fs::path p = root_ / "snapshots" / (std::to_string(id) + ".json");
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFoundError("unknown snapshot S" + std::to_string(id));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("corrupt snapshot file '" + p.string() + "': " + e.what());
    }
    auto s = std::make_shared<const CadastreSnapshot>(snapshot_from_json(j));
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(id, std::move(s)).first->second;
}

std::optional<SnapshotId> FileStore::latest_snapshot() const {
    const auto all = snapshots();
    if (all.empty()) return std::nullopt;
    return all.back().id;
}

CadastreSnapshot FileStore::commit_snapshot(Timestamp captured_at, std::vector<TreeRecord> records) {
    sort_records(records);
    check_unique(records);
    WriterLock lock(*this);
    const auto all = snapshots();
    if (!all.empty() && captured_at <= all.back().captured_at) {
        throw ValidationError("captured_at " + format_timestamp(captured_at) + " is not later than snapshot S" +
                                  std::to_string(all.back().id) + " (" + format_timestamp(all.back().captured_at) + ")",
                              "captured_at");
    }
    CadastreSnapshot s;
    s.snapshot_id = all.empty() ? 1 : all.back().id + 1;
    s.captured_at = captured_at;
    s.records = std::move(records);
    const fs::path target = root_ / "snapshots" / (std::to_string(s.snapshot_id) + ".json");
    if (fs::exists(target)) throw IoError("snapshot file '" + target.string() + "' already exists");
    write_atomic(target, canonical_json(s) + "\n");
    return s;
}

void FileStore::append_annotations(const std::vector<TreeAnnotation>& annotations) {
    std::string text;
    for (const auto& a : annotations) {
        validate(a);
        text += to_json(a).dump() + "\n";
    }
    WriterLock lock(*this);
    append_text(root_ / "annotations.jsonl", text);
}

std::vector<TreeAnnotation> FileStore::annotations() const {
    std::shared_lock lock(mutex_);
    std::vector<TreeAnnotation> out;
    for (const auto& line : read_lines(root_ / "annotations.jsonl")) {
        try {
            out.push_back(annotation_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw IoError("corrupt annotation log: " + std::string(e.what()));
        }
    }
    return out;
}

std::vector<SoilMoistureReading> FileStore::load_readings() const {
    std::vector<SoilMoistureReading> out;
    const auto lines = read_lines(root_ / "readings.csv");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == 0 && lines[i] == kReadingsHeader) continue;
        const CsvTable t = parse_csv(std::string(kReadingsHeader) + "\n" + lines[i] + "\n");
        const auto& row = t.rows.at(0);
        out.push_back({row[0], parse_timestamp(row[1]), parse_depth(row[2]), parse_number(row[3], "vwc")});
    }
    return out;
}

IngestCount FileStore::add_readings(const std::vector<SoilMoistureReading>& readings) {
    for (std::size_t i = 0; i < readings.size(); ++i) validate_reading(readings[i], "reading " + std::to_string(i + 1));
    WriterLock lock(*this);
    std::set<std::tuple<std::string, Timestamp, Depth>> keys;
    for (const auto& r : load_readings()) keys.emplace(r.sensor_id, r.timestamp, r.depth);
    IngestCount count;
    std::ostringstream text;
    if (!fs::exists(root_ / "readings.csv")) text << kReadingsHeader << '\n';
    for (const auto& r : readings) {
        if (!keys.emplace(r.sensor_id, r.timestamp, r.depth).second) {
            ++count.rejected;
            continue;
        }
        write_csv_row(text, {r.sensor_id, format_timestamp(r.timestamp), to_string(r.depth), format_number(r.vwc)});
        ++count.ingested;
    }
    append_text(root_ / "readings.csv", text.str());
    return count;
}

std::vector<SoilMoistureReading> FileStore::series(const SeriesQuery& q) const {
    std::vector<SoilMoistureReading> all;
    {
        std::shared_lock lock(mutex_);
        all = load_readings();
    }
    std::vector<SoilMoistureReading> out;
    for (auto& r : all) {
        if (r.sensor_id != q.sensor_id) continue;
        if (q.from && r.timestamp < *q.from) continue;
        if (q.to && r.timestamp > *q.to) continue;
        if (q.depth && r.depth != *q.depth) continue;
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.timestamp, a.depth) < std::tie(b.timestamp, b.depth);
    });
    return out;
}

CadastreSnapshot ingest_cadastre(InventoryStore& store, const fs::path& path, Timestamp captured_at,
                                 const CadastreOptions& options) {
    return store.commit_snapshot(captured_at, read_cadastre(path, options));
}

std::vector<SoilMoistureReading> read_sensor_csv(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t s = t.column("sensor_id"), ts = t.column("timestamp"), d = t.column("depth"), v = t.column("vwc");
    std::vector<SoilMoistureReading> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = "row " + std::to_string(i + 1);
        SoilMoistureReading r;
        r.sensor_id = row[s];
        try {
            r.timestamp = parse_timestamp(row[ts]);
            r.depth = parse_depth(row[d]);
            r.vwc = parse_number(row[v], "vwc");
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what(), e.field());
        }
        validate_reading(r, where);
        out.push_back(std::move(r));
    }
    return out;
}

IngestCount ingest_sensor_series(InventoryStore& store, const fs::path& path) {
    return store.add_readings(read_sensor_csv(path));
}

// ---------------------------------------------------------------- diffs

ChangeSet diff_records(const std::vector<TreeRecord>& a_in, const std::vector<TreeRecord>& b_in) {
    std::vector<TreeRecord> a = a_in, b = b_in;
    sort_records(a);
    sort_records(b);
    check_unique(a);
    check_unique(b);
    ChangeSet d;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].tree_id < b[j].tree_id)) {
            d.removed.push_back(a[i++]);
        } else if (i == a.size() || b[j].tree_id < a[i].tree_id) {
            d.added.push_back(b[j++]);
        } else {
            ModifiedTree m{a[i].tree_id, {}};
            for (const auto& f : tree_fields()) {
                if (f == "tree_id") continue;
                ojson old_v = field_value(a[i], f), new_v = field_value(b[j], f);
                if (old_v != new_v) m.changes.push_back({f, std::move(old_v), std::move(new_v)});
            }
            if (!m.changes.empty()) d.modified.push_back(std::move(m));
            ++i;
            ++j;
        }
    }
    for (const auto& r : d.removed)
        for (const auto& ad : d.added)
            if (r.x == ad.x && r.y == ad.y) d.possible_id_churn.emplace_back(r.tree_id, ad.tree_id);
    return d;
}

ChangeSet snapshot_diff(const InventoryStore& store, SnapshotId a, SnapshotId b) {
    const auto sa = store.snapshot(a);
    const auto sb = store.snapshot(b);
    if (sa->captured_at > sb->captured_at) {
        throw ValidationError("snapshot S" + std::to_string(a) + " is later than S" + std::to_string(b), "from");
    }
    ChangeSet d = diff_records(sa->records, sb->records);
    d.from = a;
    d.to = b;
    return d;
}

std::vector<TreeRecord> apply_diff(const std::vector<TreeRecord>& a, const ChangeSet& diff) {
    std::map<std::string, TreeRecord> m;
    for (const auto& r : a)
        if (!m.emplace(r.tree_id, r).second) throw ValidationError("duplicate tree_id '" + r.tree_id + "'", "tree_id");
    for (const auto& r : diff.removed) {
        const auto it = m.find(r.tree_id);
        if (it == m.end() || !(it->second == r)) {
            throw ValidationError("diff removes '" + r.tree_id + "' which does not match the base", "removed");
        }
        m.erase(it);
    }
    for (const auto& mod : diff.modified) {
        const auto it = m.find(mod.tree_id);
        if (it == m.end()) throw ValidationError("diff modifies unknown tree '" + mod.tree_id + "'", "modified");
        for (const auto& c : mod.changes) {
            if (field_value(it->second, c.field) != c.old_value) {
                throw ValidationError("diff expects a different old " + c.field + " for '" + mod.tree_id + "'", c.field);
            }
            set_field(it->second, c.field, json::parse(c.new_value.dump()));
        }
    }
    for (const auto& r : diff.added)
        if (!m.emplace(r.tree_id, r).second) throw ValidationError("diff adds existing tree '" + r.tree_id + "'", "added");
    std::vector<TreeRecord> out;
    out.reserve(m.size());
    for (auto& [id, r] : m) out.push_back(std::move(r));
    return out;
}

ojson to_json(const ChangeSet& d) {
    ojson j = ojson::object();
    j["from"] = d.from ? ojson(*d.from) : ojson(nullptr);
    j["to"] = d.to ? ojson(*d.to) : ojson(nullptr);
    j["added"] = records_json(d.added);
    j["removed"] = records_json(d.removed);
    ojson mods = ojson::array();
    for (const auto& m : d.modified) {
        ojson changes = ojson::array();
        for (const auto& c : m.changes) changes.push_back({{"field", c.field}, {"old", c.old_value}, {"new", c.new_value}});
        mods.push_back({{"tree_id", m.tree_id}, {"changes", changes}});
    }
    j["modified"] = mods;
    ojson churn = ojson::array();
    for (const auto& [r, a] : d.possible_id_churn) churn.push_back({{"removed", r}, {"added", a}});
    j["possible_id_churn"] = churn;
    return j;
}

ChangeSet changeset_from_json(const json& j) {
    ChangeSet d;
    try {
        if (!j.at("from").is_null()) d.from = j.at("from").get<SnapshotId>();
        if (!j.at("to").is_null()) d.to = j.at("to").get<SnapshotId>();
        for (const auto& r : j.at("added")) d.added.push_back(tree_from_json(r));
        for (const auto& r : j.at("removed")) d.removed.push_back(tree_from_json(r));
        for (const auto& m : j.at("modified")) {
            ModifiedTree mt{m.at("tree_id").get<std::string>(), {}};
            for (const auto& c : m.at("changes")) {
                mt.changes.push_back({c.at("field").get<std::string>(), ojson::parse(c.at("old").dump()),
                                      ojson::parse(c.at("new").dump())});
            }
            d.modified.push_back(std::move(mt));
        }
        if (j.contains("possible_id_churn"))
            for (const auto& c : j.at("possible_id_churn"))
                d.possible_id_churn.emplace_back(c.at("removed").get<std::string>(), c.at("added").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed change set: ") + e.what(), "diff");
    }
    return d;
}

std::vector<TreeHistoryEntry> tree_history(const InventoryStore& store, const std::string& tree_id) {
    const auto infos = store.snapshots();
    std::vector<TreeHistoryEntry> out;
    bool seen = false;
    std::shared_ptr<const CadastreSnapshot> prev;
    for (const auto& info : infos) {
        const auto cur = store.snapshot(info.id);
        const TreeRecord* now = cur->find(tree_id);
        seen |= now != nullptr;
        if (prev) {
            const TreeRecord* before = prev->find(tree_id);
            TreeHistoryEntry e{prev->snapshot_id, cur->snapshot_id, cur->captured_at, {}, {}};
            if (before && !now) {
                e.change = "removed";
            } else if (!before && now) {
                e.change = "added";
            } else if (before && now) {
                const ChangeSet d = diff_records({*before}, {*now});
                if (d.modified.empty()) {
                    prev = cur;
                    continue;
                }
                e.change = "modified";
                e.fields = d.modified.front().changes;
            }
            if (!e.change.empty()) out.push_back(std::move(e));
        }
        prev = cur;
    }
    if (!seen) throw NotFoundError("unknown tree '" + tree_id + "'");
    return out;
}

// ---------------------------------------------------------------- join

namespace {

struct Grid {
    double cell;
    std::unordered_map<long long, std::vector<std::size_t>> cells;

    static long long key(long long ix, long long iy) { return (ix << 32) ^ (iy & 0xffffffffLL); }
    long long ix(double v) const { return static_cast<long long>(std::floor(v / cell)); }

    void insert(std::size_t i, const Point& p) { cells[key(ix(p.x()), ix(p.y()))].push_back(i); }

    template <typename F>
    void near(const Point& p, F&& f) const {
        const long long cx = ix(p.x()), cy = ix(p.y());
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy) {
                const auto it = cells.find(key(cx + dx, cy + dy));
                if (it == cells.end()) continue;
                for (std::size_t i : it->second) f(i);
            }
    }
};

}  // namespace

JoinResult join_predictions(const std::vector<TreeRecord>& trees, const CrownCollection& crowns, double max_dist) {
    if (!(max_dist > 0.0) || !std::isfinite(max_dist)) throw ValidationError("max_dist must be a positive distance", "max_dist");
    for (const auto& t : trees) {
        if (!crs_compatible(t.crs, crowns.crs)) {
            throw ValidationError("CRS mismatch: tree '" + t.tree_id + "' is in " + t.crs + ", crowns in " + crowns.crs,
                                  "crs");
        }
    }
    std::vector<Point> tp, cp;
    for (const auto& t : trees) tp.emplace_back(t.x, t.y);
    for (const auto& c : crowns.crowns) cp.push_back(ring_centroid(c.ring));

    Grid tgrid{max_dist, {}}, cgrid{max_dist, {}};
    for (std::size_t i = 0; i < tp.size(); ++i) tgrid.insert(i, tp[i]);
    for (std::size_t i = 0; i < cp.size(); ++i) cgrid.insert(i, cp[i]);

    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> tree_match(tp.size(), none), crown_match(cp.size(), none);
    auto nearest = [&](const Point& p, const Grid& grid, const std::vector<Point>& pts,
                       const std::vector<std::size_t>& taken) {
        std::size_t best = none;
        double bd = max_dist;
        grid.near(p, [&](std::size_t i) {
            if (taken[i] != none) return;
            const double d = (pts[i] - p).norm();
            if (d < bd || (d == bd && (best == none || i < best))) {
                if (d <= max_dist) {
                    bd = d;
                    best = i;
                }
            }
        });
        return best;
    };

    for (bool progress = true; progress;) {
        progress = false;
        std::vector<std::size_t> t_best(tp.size(), none);
        for (std::size_t t = 0; t < tp.size(); ++t)
            if (tree_match[t] == none) t_best[t] = nearest(tp[t], cgrid, cp, crown_match);
        for (std::size_t t = 0; t < tp.size(); ++t) {
            const std::size_t c = t_best[t];
            if (c == none || crown_match[c] != none) continue;
            if (nearest(cp[c], tgrid, tp, tree_match) == t) {
                tree_match[t] = c;
                crown_match[c] = t;
                progress = true;
            }
        }
    }

    JoinResult r;
    for (std::size_t t = 0; t < tp.size(); ++t) {
        if (tree_match[t] == none) {
            r.unmatched_trees.push_back(trees[t].tree_id);
        } else {
            r.matches.push_back({trees[t].tree_id, crowns.crowns[tree_match[t]].crown_id, (tp[t] - cp[tree_match[t]]).norm()});
        }
    }
    for (std::size_t c = 0; c < cp.size(); ++c)
        if (crown_match[c] == none) r.unmatched_crowns.push_back(crowns.crowns[c].crown_id);
    std::sort(r.matches.begin(), r.matches.end(), [](const auto& a, const auto& b) { return a.tree_id < b.tree_id; });
    std::sort(r.unmatched_trees.begin(), r.unmatched_trees.end());
    std::sort(r.unmatched_crowns.begin(), r.unmatched_crowns.end());
    return r;
}

JoinResult join_predictions(const InventoryStore& store, SnapshotId snapshot, const CrownCollection& crowns,
                            double max_dist) {
    return join_predictions(store.snapshot(snapshot)->records, crowns, max_dist);
}

}  // namespace canopy
