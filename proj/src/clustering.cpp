#include "canopy/clustering.hpp"

#include "canopy/error.hpp"
#include "canopy/indices.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace canopy {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Eigen::MatrixXd& x, Index i, const Eigen::MatrixXd& c, Index j) {
    return (x.row(i) - c.row(j)).squaredNorm();
}

// Nearest center by squared distance; ties go to the lower index.
int nearest(const Eigen::MatrixXd& x, Index i, const Eigen::MatrixXd& centers, double* best_out = nullptr) {
    int best = 0;
    double bd = kInf;
    for (Index j = 0; j < centers.rows(); ++j) {
        const double d = sq_dist(x, i, centers, j);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(j);
        }
    }
    if (best_out) *best_out = bd;
    return best;
}

void check_k(const Eigen::MatrixXd& x, int k) {
    if (k < 1) throw ValidationError("k must be >= 1", "k");
    if (k > x.rows()) {
        throw ValidationError("k=" + std::to_string(k) + " exceeds the number of crowns (" +
                                  std::to_string(x.rows()) + ")",
                              "k");
    }
}

Index sample_weighted(const std::vector<double>& cumulative, double u) {
    const double target = u * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    return std::min<Index>(static_cast<Index>(it - cumulative.begin()), static_cast<Index>(cumulative.size()) - 1);
}

double total_inertia(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, const std::vector<int>& labels) {
    double s = 0.0;
    for (Index i = 0; i < x.rows(); ++i) s += sq_dist(x, i, centers, labels[static_cast<std::size_t>(i)]);
    return s;
}

Eigen::MatrixXd cluster_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, const Eigen::MatrixXd& previous,
                              std::vector<Index>* counts_out = nullptr) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(previous.rows(), previous.cols());
    std::vector<Index> counts(static_cast<std::size_t>(previous.rows()), 0);
    for (Index i = 0; i < x.rows(); ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (Index j = 0; j < previous.rows(); ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0) {
            sums.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
        } else {
            sums.row(j) = previous.row(j);
        }
    }
    if (counts_out) *counts_out = std::move(counts);
    return sums;
}

}  // namespace

std::string to_string(ClusterAlgorithm a) {
    switch (a) {
        case ClusterAlgorithm::kmeans_pp: return "kmeans_pp";
        case ClusterAlgorithm::mean_shift: return "mean_shift";
        case ClusterAlgorithm::fuzzy_cmeans: return "fuzzy_cmeans";
        case ClusterAlgorithm::agglomerative: return "agglomerative";
        case ClusterAlgorithm::optics: return "optics";
    }
    return "unknown";
}

ClusterAlgorithm parse_cluster_algorithm(const std::string& name) {
    for (auto a : kAllClusterAlgorithms)
        if (to_string(a) == name) return a;
    throw ValidationError("unknown clustering algorithm '" + name + "'", "clusterer");
}

int ClusterAssignment::n_clusters() const {
    std::set<int> s;
    for (int l : labels)
        if (l >= 0) s.insert(l);
    return static_cast<int>(s.size());
}

Eigen::MatrixXd kmeans_pp_seeds(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
    check_k(x, k);
    const Index n = x.rows();
    const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
    Eigen::MatrixXd centers(k, x.cols());
    centers.row(0) = x.row(uniform_index(rng, n));

    std::vector<double> closest(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) closest[static_cast<std::size_t>(i)] = sq_dist(x, i, centers, 0);
    std::vector<double> cumulative(static_cast<std::size_t>(n));

    for (int c = 1; c < k; ++c) {
        std::partial_sum(closest.begin(), closest.end(), cumulative.begin());
        Index best_candidate = -1;
        double best_potential = kInf;
        std::vector<double> best_closest;
        for (int t = 0; t < trials; ++t) {
            const Index cand = cumulative.back() > 0.0 ? sample_weighted(cumulative, uniform01(rng))
                                                       : uniform_index(rng, n);
            std::vector<double> trial(closest);
            double potential = 0.0;
            for (Index i = 0; i < n; ++i) {
                const double d = (x.row(i) - x.row(cand)).squaredNorm();
                auto& v = trial[static_cast<std::size_t>(i)];
                v = std::min(v, d);
                potential += v;
            }
            if (potential < best_potential) {
                best_potential = potential;
                best_candidate = cand;
                best_closest = std::move(trial);
            }
        }
        centers.row(c) = x.row(best_candidate);
        closest = std::move(best_closest);
    }
    return centers;
}

namespace {

KMeansResult kmeans_single(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng, int max_iter, double tol) {
    KMeansResult r;
    r.centers = kmeans_pp_seeds(x, k, rng);
    const Index n = x.rows();
    r.labels.assign(static_cast<std::size_t>(n), 0);

    for (int it = 0; it < max_iter; ++it) {
        for (Index i = 0; i < n; ++i) r.labels[static_cast<std::size_t>(i)] = nearest(x, i, r.centers);
        r.inertia_history.push_back(total_inertia(x, r.centers, r.labels));
        const Eigen::MatrixXd next = cluster_means(x, r.labels, r.centers);
        const double shift = (next - r.centers).rowwise().norm().maxCoeff();
        r.centers = next;
        r.iterations = it + 1;
        if (shift < tol) break;
    }
    for (Index i = 0; i < n; ++i) r.labels[static_cast<std::size_t>(i)] = nearest(x, i, r.centers);
    std::vector<Index> counts;
    r.centers = cluster_means(x, r.labels, r.centers, &counts);
    r.inertia_history.push_back(total_inertia(x, r.centers, r.labels));

    // Single-point moves until no reassignment lowers the objective.
    const double eps = 1e-12 * std::max(1.0, r.inertia_history.back());
    bool moved = true;
    for (int pass = 0; moved && pass < 1000; ++pass) {
        moved = false;
        for (Index i = 0; i < n; ++i) {
            const int a = r.labels[static_cast<std::size_t>(i)];
            const auto na = static_cast<double>(counts[static_cast<std::size_t>(a)]);
            if (na <= 1.0) continue;
            const double remove_gain = na / (na - 1.0) * sq_dist(x, i, r.centers, a);
            int best = a;
            double best_delta = -eps;
            for (int b = 0; b < k; ++b) {
                if (b == a) continue;
                const auto nb = static_cast<double>(counts[static_cast<std::size_t>(b)]);
                const double delta = nb / (nb + 1.0) * sq_dist(x, i, r.centers, b) - remove_gain;
                if (delta < best_delta) {
                    best_delta = delta;
                    best = b;
                }
            }
            if (best == a) continue;
            const auto nb = static_cast<double>(counts[static_cast<std::size_t>(best)]);
            r.centers.row(a) = (r.centers.row(a) * na - x.row(i)) / (na - 1.0);
            r.centers.row(best) = (r.centers.row(best) * nb + x.row(i)) / (nb + 1.0);
            --counts[static_cast<std::size_t>(a)];
            ++counts[static_cast<std::size_t>(best)];
            r.labels[static_cast<std::size_t>(i)] = best;
            moved = true;
        }
        if (moved) {
            r.centers = cluster_means(x, r.labels, r.centers, &counts);
            r.inertia_history.push_back(total_inertia(x, r.centers, r.labels));
        }
    }
    return r;
}

}  // namespace

KMeansResult kmeans_pp(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iter, double tol, int n_init) {
    check_k(x, k);
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1", "max_iter");
    if (n_init < 1) throw ValidationError("n_init must be >= 1", "n_init");
    std::mt19937_64 rng(seed);
    KMeansResult best = kmeans_single(x, k, rng, max_iter, tol);
    for (int run = 1; run < n_init; ++run) {
        KMeansResult r = kmeans_single(x, k, rng, max_iter, tol);
        if (r.inertia() < best.inertia()) best = std::move(r);
    }
    return best;
}

Eigen::MatrixXd fuzzy_memberships(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, double m) {
    const Index n = x.rows(), k = centers.rows();
    const double p = 1.0 / (m - 1.0);
    Eigen::MatrixXd u(n, k);
    Eigen::VectorXd d(k);
    for (Index i = 0; i < n; ++i) {
        Index zeros = 0;
        for (Index j = 0; j < k; ++j) {
            d(j) = sq_dist(x, i, centers, j);
            if (d(j) == 0.0) ++zeros;
        }
        if (zeros > 0) {
            for (Index j = 0; j < k; ++j) u(i, j) = d(j) == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
            continue;
        }
        for (Index j = 0; j < k; ++j) {
            double s = 0.0;
            for (Index l = 0; l < k; ++l) s += std::pow(d(j) / d(l), p);
            u(i, j) = 1.0 / s;
        }
        u.row(i) /= u.row(i).sum();
    }
    return u;
}

FuzzyResult fuzzy_cmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, double m, double tol, int max_iter) {
    check_k(x, k);
    if (!(m > 1.0)) throw ValidationError("fuzzifier must be > 1", "fuzzifier");
    std::mt19937_64 rng(seed);
    FuzzyResult r;
    r.centers = kmeans_pp_seeds(x, k, rng);
    r.memberships = fuzzy_memberships(x, r.centers, m);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::MatrixXd w = r.memberships.array().pow(m).matrix();
        const Eigen::VectorXd wsum = w.colwise().sum().transpose();
        Eigen::MatrixXd next = w.transpose() * x;
        for (Index j = 0; j < k; ++j) {
            if (wsum(j) > 0.0) {
                next.row(j) /= wsum(j);
            } else {
                next.row(j) = r.centers.row(j);
            }
        }
        r.centers = next;
        const Eigen::MatrixXd u = fuzzy_memberships(x, r.centers, m);
        const double change = (u - r.memberships).cwiseAbs().maxCoeff();
        r.memberships = u;
        r.iterations = it + 1;
        if (change < tol) break;
    }
    r.labels.resize(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
        Index arg = 0;
        r.memberships.row(i).maxCoeff(&arg);
        r.labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return r;
}

std::vector<WardMerge> ward_linkage(const Eigen::MatrixXd& x) {
    const Index n = x.rows();
    std::vector<WardMerge> merges;
    if (n < 2) return merges;
    Eigen::MatrixXd d(n, n);
    for (Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
    }
    std::vector<Index> size(static_cast<std::size_t>(n), 1), id(static_cast<std::size_t>(n));
    std::iota(id.begin(), id.end(), Index{0});
    std::vector<char> active(static_cast<std::size_t>(n), 1);
    std::vector<Index> chain;
    merges.reserve(static_cast<std::size_t>(n - 1));

    while (static_cast<Index>(merges.size()) < n - 1) {
        if (chain.empty()) {
            for (Index i = 0; i < n; ++i)
                if (active[static_cast<std::size_t>(i)]) {
                    chain.push_back(i);
                    break;
                }
        }
        const Index a = chain.back();
        const Index prev = chain.size() >= 2 ? chain[chain.size() - 2] : -1;
        Index b = prev;
        double bd = prev >= 0 ? d(a, prev) : kInf;
        for (Index j = 0; j < n; ++j) {
            if (j == a || !active[static_cast<std::size_t>(j)]) continue;
            if (d(a, j) < bd) {
                bd = d(a, j);
                b = j;
            }
        }
        if (b != prev) {
            chain.push_back(b);
            continue;
        }
        chain.pop_back();
        chain.pop_back();
        const Index lo = std::min(a, b), hi = std::max(a, b);
        const auto na = static_cast<double>(size[static_cast<std::size_t>(lo)]);
        const auto nb = static_cast<double>(size[static_cast<std::size_t>(hi)]);
        for (Index j = 0; j < n; ++j) {
            if (!active[static_cast<std::size_t>(j)] || j == lo || j == hi) continue;
            const auto nk = static_cast<double>(size[static_cast<std::size_t>(j)]);
            const double v = ((na + nk) * d(lo, j) + (nb + nk) * d(hi, j) - nk * bd) / (na + nb + nk);
            d(lo, j) = d(j, lo) = v;
        }
        merges.push_back({std::min(id[static_cast<std::size_t>(lo)], id[static_cast<std::size_t>(hi)]),
                          std::max(id[static_cast<std::size_t>(lo)], id[static_cast<std::size_t>(hi)]), bd,
                          static_cast<Index>(na + nb)});
        active[static_cast<std::size_t>(hi)] = 0;
        size[static_cast<std::size_t>(lo)] += size[static_cast<std::size_t>(hi)];
        id[static_cast<std::size_t>(lo)] = n + static_cast<Index>(merges.size()) - 1;
    }
    return merges;
}

std::vector<int> cut_linkage(const std::vector<WardMerge>& merges, Index n, int k) {
    if (k < 1 || k > n) throw ValidationError("cut count out of range", "k");
    std::vector<Index> rep(static_cast<std::size_t>(n) + merges.size());
    std::iota(rep.begin(), rep.begin() + n, Index{0});
    for (std::size_t i = 0; i < merges.size(); ++i) rep[static_cast<std::size_t>(n) + i] = rep[static_cast<std::size_t>(merges[i].a)];

    std::vector<std::size_t> order(merges.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return merges[a].height < merges[b].height; });

    std::vector<Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };
    const std::size_t todo = static_cast<std::size_t>(n - k);
    for (std::size_t t = 0; t < todo && t < order.size(); ++t) {
        const WardMerge& m = merges[order[t]];
        const Index ra = find(rep[static_cast<std::size_t>(m.a)]), rb = find(rep[static_cast<std::size_t>(m.b)]);
        parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    }
    std::vector<int> labels(static_cast<std::size_t>(n), -1), label_of_root(static_cast<std::size_t>(n), -1);
    int next = 0;
    for (Index i = 0; i < n; ++i) {
        const Index r = find(i);
        if (label_of_root[static_cast<std::size_t>(r)] < 0) label_of_root[static_cast<std::size_t>(r)] = next++;
        labels[static_cast<std::size_t>(i)] = label_of_root[static_cast<std::size_t>(r)];
    }
    return labels;
}

std::vector<int> ward_agglomerative(const Eigen::MatrixXd& x, int k) {
    check_k(x, k);
    return cut_linkage(ward_linkage(x), x.rows(), k);
}

double auto_bandwidth(const Eigen::MatrixXd& x, std::uint64_t seed) {
    const Index n = x.rows();
    const Index m = std::min<Index>(n, 256);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (m < n) {
        std::mt19937_64 rng(seed);
        for (Index i = 0; i < m; ++i) {
            const Index j = i + uniform_index(rng, n - i);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(m));
        std::sort(idx.begin(), idx.end());
    }
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Index i = 0; i < m; ++i)
        for (Index j = i + 1; j < m; ++j)
            dists.push_back((x.row(idx[static_cast<std::size_t>(i)]) - x.row(idx[static_cast<std::size_t>(j)])).norm());
    if (dists.empty()) throw ValidationError("automatic bandwidth needs at least 2 points", "bandwidth");
    std::sort(dists.begin(), dists.end());
    const double bw = 0.5 * percentile_sorted(dists, 0.5);
    if (!(bw > 0.0)) throw ValidationError("automatic bandwidth is zero (all points identical)", "bandwidth");
    return bw;
}

MeanShiftResult mean_shift(const Eigen::MatrixXd& x, double bandwidth, int max_iter) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ValidationError("bandwidth must be > 0", "bandwidth");
    const Index n = x.rows(), dim = x.cols();
    const double r2 = bandwidth * bandwidth;
    const double stop = 1e-3 * bandwidth;

    struct Mode {
        Eigen::RowVectorXd at;
        Index support = 0;
        Index seed = 0;
    };
    std::vector<Mode> modes;
    modes.reserve(static_cast<std::size_t>(n));
    for (Index s = 0; s < n; ++s) {
        Eigen::RowVectorXd c = x.row(s);
        Index support = 0;
        for (int it = 0; it < max_iter; ++it) {
            Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
            Index cnt = 0;
            for (Index i = 0; i < n; ++i)
                if ((x.row(i) - c).squaredNorm() <= r2) {
                    sum += x.row(i);
                    ++cnt;
                }
            if (cnt == 0) break;
            const Eigen::RowVectorXd next = sum / static_cast<double>(cnt);
            const double shift = (next - c).norm();
            c = next;
            support = cnt;
            if (shift < stop) break;
        }
        modes.push_back({c, support, s});
    }
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) { return a.support > b.support; });

    std::vector<Eigen::RowVectorXd> kept;
    const double merge2 = 0.25 * r2;
    for (const Mode& m : modes) {
        bool near = false;
        for (const auto& k : kept)
            if ((k - m.at).squaredNorm() < merge2) {
                near = true;
                break;
            }
        if (!near) kept.push_back(m.at);
    }

    MeanShiftResult r;
    r.bandwidth = bandwidth;
    r.modes.resize(static_cast<Index>(kept.size()), dim);
    for (std::size_t i = 0; i < kept.size(); ++i) r.modes.row(static_cast<Index>(i)) = kept[i];
    r.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) r.labels[static_cast<std::size_t>(i)] = nearest(x, i, r.modes);
    return r;
}

namespace {

struct SteepArea {
    Index start = 0, end = 0;
    double mib = 0.0;
};

Index extend_region(const std::vector<char>& steep, const std::vector<char>& xward, Index start, int min_samples) {
    const Index n = static_cast<Index>(steep.size());
    int non_xward = 0;
    Index end = start;
    for (Index i = start; i < n; ++i) {
        if (steep[static_cast<std::size_t>(i)]) {
            non_xward = 0;
            end = i;
        } else if (!xward[static_cast<std::size_t>(i)]) {
            if (++non_xward > min_samples) break;
        } else {
            return end;
        }
    }
    return end;
}

void update_filter(std::vector<SteepArea>& sdas, double mib, double xi_complement, const std::vector<double>& plot) {
    if (std::isinf(mib)) {
        sdas.clear();
        return;
    }
    std::vector<SteepArea> kept;
    for (auto s : sdas)
        if (mib <= plot[static_cast<std::size_t>(s.start)] * xi_complement) {
            s.mib = std::max(s.mib, mib);
            kept.push_back(s);
        }
    sdas = std::move(kept);
}

bool correct_predecessor(const std::vector<double>& plot, const std::vector<Index>& pred_plot,
                         const std::vector<Index>& ordering, Index& s, Index& e) {
    while (s < e) {
        if (plot[static_cast<std::size_t>(s)] > plot[static_cast<std::size_t>(e)]) return true;
        const Index pe = pred_plot[static_cast<std::size_t>(e)];
        for (Index i = s; i < e; ++i)
            if (ordering[static_cast<std::size_t>(i)] == pe) return true;
        --e;
    }
    return false;
}

std::vector<std::pair<Index, Index>> xi_clusters(std::vector<double> plot, const std::vector<Index>& pred_plot,
                                                 const std::vector<Index>& ordering, double xi, int min_samples,
                                                 Index min_cluster_size) {
    plot.push_back(kInf);
    const double xc = 1.0 - xi;
    const Index n = static_cast<Index>(plot.size()) - 1;
    std::vector<char> up(static_cast<std::size_t>(n)), down(static_cast<std::size_t>(n)),
        steep_up(static_cast<std::size_t>(n)), steep_down(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const double ratio = plot[static_cast<std::size_t>(i)] / plot[static_cast<std::size_t>(i + 1)];
        steep_up[static_cast<std::size_t>(i)] = ratio <= xc;
        steep_down[static_cast<std::size_t>(i)] = ratio >= 1.0 / xc;
        down[static_cast<std::size_t>(i)] = ratio > 1.0;
        up[static_cast<std::size_t>(i)] = ratio < 1.0;
    }
    auto r = [&](Index i) { return plot[static_cast<std::size_t>(i)]; };

    std::vector<SteepArea> sdas;
    std::vector<std::pair<Index, Index>> clusters;
    Index index = 0;
    double mib = 0.0;
    for (Index si = 0; si < n; ++si) {
        if (!steep_up[static_cast<std::size_t>(si)] && !steep_down[static_cast<std::size_t>(si)]) continue;
        if (si < index) continue;
        for (Index i = index; i <= si; ++i) mib = std::max(mib, r(i));

        if (steep_down[static_cast<std::size_t>(si)]) {
            update_filter(sdas, mib, xc, plot);
            const Index d_end = extend_region(steep_down, up, si, min_samples);
            sdas.push_back({si, d_end, 0.0});
            index = d_end + 1;
            mib = r(index);
            continue;
        }

        update_filter(sdas, mib, xc, plot);
        const Index u_start = si;
        const Index u_end = extend_region(steep_up, down, u_start, min_samples);
        index = u_end + 1;
        mib = r(index);

        std::vector<std::pair<Index, Index>> found;
        for (const auto& d : sdas) {
            Index c_start = d.start, c_end = u_end;
            if (r(c_end + 1) * xc < d.mib) continue;
            const double d_max = r(d.start);
            if (d_max * xc >= r(c_end + 1)) {
                while (r(c_start + 1) > r(c_end + 1) && c_start < d.end) ++c_start;
            } else if (r(c_end + 1) * xc >= d_max) {
                while (r(c_end - 1) > d_max && c_end > u_start) --c_end;
            }
            if (!correct_predecessor(plot, pred_plot, ordering, c_start, c_end)) continue;
            if (c_end - c_start + 1 < min_cluster_size) continue;
            if (c_start > d.end) continue;
            if (c_end < u_start) continue;
            found.emplace_back(c_start, c_end);
        }
        clusters.insert(clusters.end(), found.rbegin(), found.rend());
    }
    return clusters;
}

}  // namespace

OpticsResult optics(const Eigen::MatrixXd& x, int min_samples, double xi, int min_cluster_size) {
    const Index n = x.rows();
    if (min_samples < 2) throw ValidationError("min_samples must be >= 2", "min_samples");
    if (min_samples > n) {
        throw ValidationError("min_samples=" + std::to_string(min_samples) + " exceeds the number of crowns (" +
                                  std::to_string(n) + ")",
                              "min_samples");
    }
    if (!(xi > 0.0 && xi < 1.0)) throw ValidationError("xi must be in (0, 1)", "xi");
    const Index mcs = min_cluster_size > 0 ? min_cluster_size : min_samples;

    Eigen::MatrixXd dist(n, n);
    for (Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Index j = i + 1; j < n; ++j) dist(i, j) = dist(j, i) = (x.row(i) - x.row(j)).norm();
    }

    OpticsResult r;
    r.core_distance.resize(n);
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dist(i, j);
        std::nth_element(row.begin(), row.begin() + (min_samples - 1), row.end());
        r.core_distance(i) = row[static_cast<std::size_t>(min_samples - 1)];
    }

    r.reachability = Eigen::VectorXd::Constant(n, kInf);
    r.predecessor.assign(static_cast<std::size_t>(n), -1);
    std::vector<char> processed(static_cast<std::size_t>(n), 0);
    r.ordering.reserve(static_cast<std::size_t>(n));
    for (Index step = 0; step < n; ++step) {
        Index p = -1;
        for (Index i = 0; i < n; ++i) {
            if (processed[static_cast<std::size_t>(i)]) continue;
            if (p < 0 || r.reachability(i) < r.reachability(p)) p = i;
        }
        processed[static_cast<std::size_t>(p)] = 1;
        r.ordering.push_back(p);
        const double core = r.core_distance(p);
        for (Index i = 0; i < n; ++i) {
            if (processed[static_cast<std::size_t>(i)]) continue;
            const double rd = std::max(dist(p, i), core);
            if (rd < r.reachability(i)) {
                r.reachability(i) = rd;
                r.predecessor[static_cast<std::size_t>(i)] = p;
            }
        }
    }

    std::vector<double> plot(static_cast<std::size_t>(n));
    std::vector<Index> pred_plot(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        plot[static_cast<std::size_t>(i)] = r.reachability(r.ordering[static_cast<std::size_t>(i)]);
        pred_plot[static_cast<std::size_t>(i)] = r.predecessor[static_cast<std::size_t>(r.ordering[static_cast<std::size_t>(i)])];
    }
    const auto clusters = xi_clusters(plot, pred_plot, r.ordering, xi, min_samples, mcs);

    std::vector<int> ordered(static_cast<std::size_t>(n), -1);
    int label = 0;
    for (const auto& [s, e] : clusters) {
        bool free = true;
        for (Index i = s; i <= e; ++i)
            if (ordered[static_cast<std::size_t>(i)] != -1) {
                free = false;
                break;
            }
        if (!free) continue;
        for (Index i = s; i <= e; ++i) ordered[static_cast<std::size_t>(i)] = label;
        ++label;
    }
    r.labels.assign(static_cast<std::size_t>(n), -1);
    for (Index i = 0; i < n; ++i) r.labels[static_cast<std::size_t>(r.ordering[static_cast<std::size_t>(i)])] = ordered[static_cast<std::size_t>(i)];
    return r;
}

ClusterAssignment cluster(const FeatureMatrix& features, ClusterAlgorithm algorithm, const ClusterParams& params,
                          std::uint64_t seed) {
    validate(features);
    const Eigen::MatrixXd& x = features.values;
    ClusterAssignment out;
    out.crown_ids = features.crown_ids;
    out.algorithm = algorithm;
    out.params = params;
    switch (algorithm) {
        case ClusterAlgorithm::kmeans_pp:
            out.labels = kmeans_pp(x, params.k, seed, params.max_iter, params.tol, params.n_init).labels;
            break;
        case ClusterAlgorithm::fuzzy_cmeans: {
            FuzzyResult f = fuzzy_cmeans(x, params.k, seed, params.fuzzifier, params.membership_tol,
                                         params.fuzzy_max_iter);
            out.labels = std::move(f.labels);
            out.memberships = std::move(f.memberships);
            break;
        }
        case ClusterAlgorithm::agglomerative:
            out.labels = ward_agglomerative(x, params.k);
            break;
        case ClusterAlgorithm::mean_shift: {
            const double bw = params.bandwidth ? *params.bandwidth : auto_bandwidth(x, seed);
            out.params.bandwidth = bw;
            out.labels = mean_shift(x, bw, params.max_iter).labels;
            break;
        }
        case ClusterAlgorithm::optics:
            out.labels = optics(x, params.min_samples, params.xi).labels;
            break;
    }
    return out;
}

}  // namespace canopy
