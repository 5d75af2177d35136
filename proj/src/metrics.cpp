#include "canopy/metrics.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace canopy {

namespace {

// Minimum-cost assignment of every row, rows <= cols. Returns column per row.
std::vector<Index> assign_rows(const Eigen::MatrixXd& cost) {
    const Index n = cost.rows(), m = cost.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
    std::vector<Index> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> out(static_cast<std::size_t>(n), -1);
    for (Index j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] > 0) out[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return out;
}

}  // namespace

std::vector<Index> hungarian_max(const Eigen::MatrixXd& profit) {
    const Index r = profit.rows(), c = profit.cols();
    if (r == 0 || c == 0) return std::vector<Index>(static_cast<std::size_t>(r), -1);
    const double top = profit.maxCoeff();
    if (r <= c) return assign_rows((top - profit.array()).matrix());
    const std::vector<Index> cols = assign_rows((top - profit.transpose().array()).matrix());
    std::vector<Index> out(static_cast<std::size_t>(r), -1);
    for (Index j = 0; j < c; ++j) out[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])] = j;
    return out;
}

long long ConfusionCounts::total_tp() const {
    long long s = 0;
    for (const auto& c : counts) s += c.tp;
    return s;
}

ClusterMapping map_clusters_to_classes(std::span<const int> labels, std::span<const std::string> truth) {
    if (labels.empty() || truth.empty()) throw ValidationError("cannot map clusters: empty input", "labels");
    if (labels.size() != truth.size()) {
        throw ValidationError("labels (" + std::to_string(labels.size()) + ") and truth (" +
                                  std::to_string(truth.size()) + ") differ in length",
                              "labels");
    }
    const std::set<std::string> class_set(truth.begin(), truth.end());
    std::set<int> cluster_set;
    for (int l : labels) {
        if (l < -1) throw ValidationError("cluster label below -1", "labels");
        if (l >= 0) cluster_set.insert(l);
    }

    ClusterMapping out;
    out.counts.classes.assign(class_set.begin(), class_set.end());
    out.clusters.assign(cluster_set.begin(), cluster_set.end());
    const auto n_classes = static_cast<Index>(out.counts.classes.size());
    const auto n_clusters = static_cast<Index>(out.clusters.size());
    auto class_index = [&](const std::string& name) {
        return static_cast<Index>(std::lower_bound(out.counts.classes.begin(), out.counts.classes.end(), name) -
                                  out.counts.classes.begin());
    };
    auto cluster_index = [&](int l) {
        return static_cast<Index>(std::lower_bound(out.clusters.begin(), out.clusters.end(), l) - out.clusters.begin());
    };

    out.contingency = Eigen::MatrixXd::Zero(n_clusters, n_classes);
    out.counts.supports.assign(static_cast<std::size_t>(n_classes), 0);
    std::vector<long long> cluster_size(static_cast<std::size_t>(n_clusters), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Index k = class_index(truth[i]);
        ++out.counts.supports[static_cast<std::size_t>(k)];
        if (labels[i] < 0) continue;
        const Index c = cluster_index(labels[i]);
        out.contingency(c, k) += 1.0;
        ++cluster_size[static_cast<std::size_t>(c)];
    }

    out.counts.counts.assign(static_cast<std::size_t>(n_classes), ClassCounts{});
    const std::vector<Index> match = hungarian_max(out.contingency);
    for (Index c = 0; c < n_clusters; ++c) {
        const Index k = match[static_cast<std::size_t>(c)];
        if (k < 0) continue;
        out.cluster_to_class[out.clusters[static_cast<std::size_t>(c)]] = out.counts.classes[static_cast<std::size_t>(k)];
        auto& cc = out.counts.counts[static_cast<std::size_t>(k)];
        cc.tp = static_cast<long long>(out.contingency(c, k));
        cc.fp = cluster_size[static_cast<std::size_t>(c)] - cc.tp;
    }
    for (Index k = 0; k < n_classes; ++k) {
        auto& cc = out.counts.counts[static_cast<std::size_t>(k)];
        cc.fn = out.counts.supports[static_cast<std::size_t>(k)] - cc.tp;
    }
    return out;
}

ClusterMapping map_clusters_to_classes(const ClusterAssignment& assignment,
                                       const std::unordered_map<std::string, std::string>& truth) {
    if (assignment.labels.size() != assignment.crown_ids.size()) {
        throw ValidationError("cluster assignment has mismatched ids and labels", "labels");
    }
    std::vector<std::string> classes;
    classes.reserve(assignment.crown_ids.size());
    for (const auto& id : assignment.crown_ids) {
        const auto it = truth.find(id);
        if (it == truth.end()) throw ValidationError("no ground-truth class for crown '" + id + "'", "crown_id");
        classes.push_back(it->second);
    }
    return map_clusters_to_classes(assignment.labels, classes);
}

double f1_score(const ClassCounts& c) {
    const long long denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

F1Report f1_scores(const ConfusionCounts& counts) {
    std::map<std::string, long long> supports;
    for (std::size_t i = 0; i < counts.classes.size(); ++i)
        supports[counts.classes[i]] = counts.counts[i].tp + counts.counts[i].fn;
    return f1_scores(counts, supports);
}

F1Report f1_scores(const ConfusionCounts& counts, const std::map<std::string, long long>& supports) {
    if (counts.classes.size() != counts.counts.size()) throw ValidationError("confusion table is malformed", "counts");
    F1Report r;
    r.classes = counts.classes;
    long long tp = 0, fp = 0, fn = 0, total_support = 0;
    double weighted = 0.0;
    for (std::size_t i = 0; i < counts.classes.size(); ++i) {
        const auto& c = counts.counts[i];
        if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw ValidationError("negative count for '" + counts.classes[i] + "'", "counts");
        const auto it = supports.find(counts.classes[i]);
        if (it == supports.end()) throw ValidationError("no support for class '" + counts.classes[i] + "'", "supports");
        const double f = f1_score(c);
        r.f1.push_back(f);
        r.macro += f;
        weighted += f * static_cast<double>(it->second);
        total_support += it->second;
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    if (!r.f1.empty()) r.macro /= static_cast<double>(r.f1.size());
    r.weighted = total_support > 0 ? weighted / static_cast<double>(total_support) : 0.0;
    r.micro = f1_score({tp, fp, fn});
    return r;
}

void write_f1_report(std::ostream& out, const ConfusionCounts& counts, const F1Report& report) {
    write_csv_row(out, {"class", "tp", "fp", "fn", "f1"});
    for (std::size_t i = 0; i < counts.classes.size(); ++i) {
        const auto& c = counts.counts[i];
        write_csv_row(out, {counts.classes[i], std::to_string(c.tp), std::to_string(c.fp), std::to_string(c.fn),
                            format_number(report.f1[i])});
    }
    write_csv_row(out, {"macro_f1", "", "", "", format_number(report.macro)});
    write_csv_row(out, {"weighted_f1", "", "", "", format_number(report.weighted)});
    write_csv_row(out, {"micro_f1", "", "", "", format_number(report.micro)});
}

void validate(const SegmentationMap& map) {
    for (Index r = 0; r < map.ids.rows(); ++r)
        for (Index c = 0; c < map.ids.cols(); ++c) {
            const std::int32_t v = map.ids(r, c);
            if (v != map.nodata && !map.classes.count(v)) {
                throw ValidationError("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") has class id " +
                                          std::to_string(v) + " missing from the class table",
                                      "classes");
            }
        }
}

ClassShareTable::ClassShareTable(std::vector<std::pair<std::string, double>> raw) {
    std::set<std::string> seen;
    for (const auto& [name, s] : raw) {
        if (!seen.insert(name).second) throw ValidationError("duplicate class '" + name + "' in share table", "shares");
        if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("share of '" + name + "' must be >= 0", "shares");
        raw_sum_ += s;
    }
    if (!(raw_sum_ > 0.0)) throw ValidationError("class shares sum to zero", "shares");
    for (auto& e : raw) e.second /= raw_sum_;
    entries_ = std::move(raw);
}

std::optional<double> ClassShareTable::share(const std::string& name) const {
    for (const auto& [n, s] : entries_)
        if (n == name) return s;
    return std::nullopt;
}

ClassShareTable read_shares_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t c = t.column("class"), s = t.column("share");
    std::vector<std::pair<std::string, double>> raw;
    for (const auto& row : t.rows) raw.emplace_back(row[c], parse_number(row[s], "share"));
    return ClassShareTable(std::move(raw));
}

ClassShareTable shares_from_map(const SegmentationMap& truth) {
    std::map<std::int32_t, double> count;
    for (Index r = 0; r < truth.ids.rows(); ++r)
        for (Index c = 0; c < truth.ids.cols(); ++c)
            if (truth.ids(r, c) != truth.nodata) count[truth.ids(r, c)] += 1.0;
    std::vector<std::pair<std::string, double>> raw;
    for (const auto& [id, name] : truth.classes) raw.emplace_back(name, count.count(id) ? count[id] : 0.0);
    return ClassShareTable(std::move(raw));
}

double weighted_iou(std::span<const ClassIou> classes) {
    double num = 0.0, den = 0.0;
    for (const auto& c : classes) {
        if (!c.iou) continue;
        num += c.share * *c.iou;
        den += c.share;
    }
    if (!(den > 0.0)) throw ValidationError("no class with a defined IoU and positive share", "shares");
    return num / den;
}

IouReport iou_scores(const SegmentationMap& pred, const SegmentationMap& truth, const ClassShareTable& shares) {
    if (pred.ids.rows() != truth.ids.rows() || pred.ids.cols() != truth.ids.cols()) {
        throw ValidationError("prediction and truth maps differ in size", "size");
    }
    if (pred.classes != truth.classes) throw ValidationError("prediction and truth class tables differ", "classes");
    validate(pred);
    validate(truth);

    std::map<std::int32_t, long long> inter, uni;
    for (Index r = 0; r < pred.ids.rows(); ++r)
        for (Index c = 0; c < pred.ids.cols(); ++c) {
            const std::int32_t p = pred.ids(r, c), t = truth.ids(r, c);
            if (p == pred.nodata || t == truth.nodata) continue;
            if (p == t) {
                ++inter[p];
                ++uni[p];
            } else {
                ++uni[p];
                ++uni[t];
            }
        }

    IouReport rep;
    for (const auto& [id, name] : truth.classes) {
        const auto s = shares.share(name);
        if (!s) throw ValidationError("no share for class '" + name + "'", "shares");
        ClassIou ci{name, *s, std::nullopt};
        if (uni.count(id)) ci.iou = static_cast<double>(inter[id]) / static_cast<double>(uni[id]);
        rep.classes.push_back(ci);
    }
    rep.weighted = weighted_iou(rep.classes);
    return rep;
}

void write_iou_report(std::ostream& out, const IouReport& report) {
    write_csv_row(out, {"class", "share", "iou"});
    for (const auto& c : report.classes)
        write_csv_row(out, {c.name, format_number(c.share), c.iou ? format_number(*c.iou) : std::string("absent")});
    write_csv_row(out, {"weighted_iou", "", format_number(report.weighted)});
}

ClassMerge merge_minor_classes(const ClassShareTable& shares, const MergeRule& rule) {
    const auto& entries = shares.entries();
    if (entries.empty()) throw ValidationError("share table is empty", "shares");
    std::vector<char> minor(entries.size(), 0);
    if (const auto* top = std::get_if<KeepTop>(&rule)) {
        std::vector<std::size_t> order(entries.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return entries[a].second > entries[b].second; });
        for (std::size_t i = top->count; i < order.size(); ++i) minor[order[i]] = 1;
    } else {
        const double t = std::get<ShareThreshold>(rule).threshold;
        if (!(t >= 0.0)) throw ValidationError("share threshold must be >= 0", "threshold");
        for (std::size_t i = 0; i < entries.size(); ++i) minor[i] = entries[i].second < t;
    }
    if (std::all_of(minor.begin(), minor.end(), [](char m) { return m != 0; })) {
        throw ValidationError("merge cutoff leaves zero classes", "keep");
    }

    ClassMerge out;
    std::vector<std::pair<std::string, double>> merged;
    double other = 0.0;
    bool any_other = false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, s] = entries[i];
        if (minor[i] || name == kOtherClass) {
            out.remap[name] = kOtherClass;
            other += s;
            any_other = true;
        } else {
            out.remap[name] = name;
            merged.emplace_back(name, s);
        }
    }
    if (any_other) merged.emplace_back(kOtherClass, other);
    out.shares = ClassShareTable(std::move(merged));
    return out;
}

std::vector<std::string> apply_merge(const ClassMerge& merge, std::span<const std::string> labels) {
    std::vector<std::string> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        const auto it = merge.remap.find(l);
        if (it == merge.remap.end()) throw ValidationError("class '" + l + "' is not in the merge table", "labels");
        out.push_back(it->second);
    }
    return out;
}

SegmentationMap apply_merge(const ClassMerge& merge, const SegmentationMap& map) {
    validate(map);
    std::map<std::int32_t, std::int32_t> id_map;
    SegmentationMap out;
    out.nodata = map.nodata;
    std::optional<std::int32_t> other_id;
    for (const auto& [id, name] : map.classes)
        if (name == kOtherClass) other_id = id;
    if (!other_id) {
        for (const auto& [id, name] : map.classes) {
            const auto it = merge.remap.find(name);
            if (it != merge.remap.end() && it->second == kOtherClass) {
                other_id = id;
                break;
            }
        }
    }
    for (const auto& [id, name] : map.classes) {
        const auto it = merge.remap.find(name);
        if (it == merge.remap.end()) throw ValidationError("class '" + name + "' is not in the merge table", "classes");
        const std::int32_t target = it->second == kOtherClass ? *other_id : id;
        id_map[id] = target;
        out.classes[target] = it->second;
    }
    out.ids = map.ids.unaryExpr([&](std::int32_t v) { return v == map.nodata ? v : id_map.at(v); });
    return out;
}

std::vector<std::pair<std::string, double>> class_weights(const ClassShareTable& shares) {
    const auto k = static_cast<double>(shares.size());
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [name, s] : shares.entries()) {
        if (!(s > 0.0)) throw ValidationError("class '" + name + "' has zero share", "shares");
        out.emplace_back(name, 1.0 / (k * s));
    }
    return out;
}

namespace {

std::int32_t vote(const std::map<std::int32_t, int>& tally, std::int32_t original) {
    int best = -1;
    for (const auto& [id, n] : tally) best = std::max(best, n);
    const auto it = tally.find(original);
    if (it != tally.end() && it->second == best) return original;
    for (const auto& [id, n] : tally)
        if (n == best) return id;
    return original;
}

void check_window(Index window) {
    if (window < 1 || window % 2 == 0) throw ValidationError("window must be a positive odd number", "window");
}

}  // namespace

SegmentationMap majority_vote_smooth(const SegmentationMap& map, Index window) {
    check_window(window);
    validate(map);
    SegmentationMap out = map;
    const Index h = window / 2;
    std::map<std::int32_t, int> tally;
    for (Index r = 0; r < map.ids.rows(); ++r)
        for (Index c = 0; c < map.ids.cols(); ++c) {
            const std::int32_t original = map.ids(r, c);
            if (original == map.nodata) continue;
            tally.clear();
            for (Index rr = std::max<Index>(0, r - h); rr <= std::min(map.ids.rows() - 1, r + h); ++rr)
                for (Index cc = std::max<Index>(0, c - h); cc <= std::min(map.ids.cols() - 1, c + h); ++cc)
                    if (map.ids(rr, cc) != map.nodata) ++tally[map.ids(rr, cc)];
            out.ids(r, c) = vote(tally, original);
        }
    return out;
}

SegmentationMap majority_vote_smooth(std::span<const SegmentationMap> maps, Index window) {
    check_window(window);
    if (maps.empty()) throw ValidationError("no maps to vote over", "maps");
    if (maps.size() == 1) return majority_vote_smooth(maps.front(), window);
    const SegmentationMap& ref = maps.front();
    for (const auto& m : maps) {
        if (m.ids.rows() != ref.ids.rows() || m.ids.cols() != ref.ids.cols()) {
            throw ValidationError("maps differ in size", "maps");
        }
        if (m.classes != ref.classes || m.nodata != ref.nodata) throw ValidationError("maps differ in class table", "maps");
        validate(m);
    }
    SegmentationMap out = ref;
    std::map<std::int32_t, int> tally;
    for (Index r = 0; r < ref.ids.rows(); ++r)
        for (Index c = 0; c < ref.ids.cols(); ++c) {
            tally.clear();
            for (const auto& m : maps)
                if (m.ids(r, c) != m.nodata) ++tally[m.ids(r, c)];
            out.ids(r, c) = tally.empty() ? ref.nodata : vote(tally, ref.ids(r, c));
        }
    return out;
}

}  // namespace canopy
