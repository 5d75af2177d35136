#include "canopy/experiment.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"
#include "canopy/metrics.hpp"
#include "canopy/pca.hpp"

#include <toml.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace canopy {

std::string to_string(Preprocess p) { return p == Preprocess::clahe ? "clahe" : "clahe+denoising"; }

Preprocess parse_preprocess(const std::string& name) {
    if (name == "clahe") return Preprocess::clahe;
    if (name == "clahe+denoising") return Preprocess::clahe_denoising;
    throw ValidationError("unknown preprocess variant '" + name + "' (expected clahe or clahe+denoising)", "preprocess");
}

std::string to_string(Reduction r) { return r == Reduction::pca ? "pca" : "imported"; }

Reduction parse_reduction(const std::string& name) {
    if (name == "pca") return Reduction::pca;
    if (name == "imported") return Reduction::imported;
    throw ValidationError("unknown reduction '" + name + "' (expected pca or imported)", "reductions");
}

namespace {

void check_keys(const toml::table& t, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& [key, value] : t) {
        if (std::find(allowed.begin(), allowed.end(), key.str()) == allowed.end()) {
            throw ValidationError("unknown key '" + std::string(key.str()) + "' in " + where, std::string(key.str()));
        }
    }
}

std::vector<std::string> string_list(const toml::table& t, std::string_view key) {
    std::vector<std::string> out;
    const auto* arr = t[key].as_array();
    if (!arr) throw ValidationError("'" + std::string(key) + "' must be an array of strings", std::string(key));
    for (const auto& v : *arr) {
        const auto s = v.value<std::string>();
        if (!s) throw ValidationError("'" + std::string(key) + "' must contain strings", std::string(key));
        out.push_back(*s);
    }
    return out;
}

template <typename T>
T number(const toml::node_view<const toml::node>& node, T fallback, const std::string& key) {
    if (!node) return fallback;
    if constexpr (std::is_integral_v<T>) {
        const auto v = node.value<std::int64_t>();
        if (!v || !node.is_integer()) throw ValidationError("'" + key + "' must be an integer", key);
        return static_cast<T>(*v);
    } else {
        const auto v = node.value<double>();
        if (!v) throw ValidationError("'" + key + "' must be a number", key);
        return static_cast<T>(*v);
    }
}

std::map<Preprocess, std::filesystem::path> path_map(const toml::node_view<const toml::node>& node,
                                                     const std::filesystem::path& base, const std::string& key) {
    std::map<Preprocess, std::filesystem::path> out;
    if (!node) return out;
    const auto* t = node.as_table();
    if (!t) throw ValidationError("'" + key + "' must map preprocess variants to files", key);
    for (const auto& [k, v] : *t) {
        const auto s = v.value<std::string>();
        if (!s) throw ValidationError("'" + key + "." + std::string(k.str()) + "' must be a path", key);
        std::filesystem::path p(*s);
        if (p.is_relative() && !base.empty()) p = base / p;
        out[parse_preprocess(std::string(k.str()))] = p;
    }
    return out;
}

}  // namespace

GridConfig parse_grid_config(std::string_view text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "invalid grid config: " << e.description() << " (line " << e.source().begin.line << ")";
        throw ValidationError(msg.str(), "grid");
    }
    check_keys(root,
               {"preprocess", "reductions", "clusterers", "k", "pca_variance", "threads", "clahe", "denoise",
                "builtin", "cluster", "features"},
               "grid config");
    const toml::node_view<const toml::node> r{static_cast<const toml::node&>(root)};

    GridConfig g;
    g.feature_options.min_pixels = 1;
    if (root.contains("preprocess")) {
        g.preprocess.clear();
        for (const auto& s : string_list(root, "preprocess")) g.preprocess.push_back(parse_preprocess(s));
    }
    if (root.contains("reductions")) {
        g.reductions.clear();
        for (const auto& s : string_list(root, "reductions")) g.reductions.push_back(parse_reduction(s));
    }
    if (root.contains("clusterers")) {
        g.clusterers.clear();
        for (const auto& s : string_list(root, "clusterers")) g.clusterers.push_back(parse_cluster_algorithm(s));
    }
    g.k = number<int>(r["k"], 0, "k");
    if (g.k < 0) throw ValidationError("k must be >= 0", "k");
    g.pca_variance = number<double>(r["pca_variance"], 0.95, "pca_variance");
    if (!(g.pca_variance > 0.0 && g.pca_variance <= 1.0)) {
        throw ValidationError("pca_variance must be in (0, 1]", "pca_variance");
    }
    const int threads = number<int>(r["threads"], 0, "threads");
    if (threads < 0) throw ValidationError("threads must be >= 0", "threads");
    g.threads = static_cast<unsigned>(threads);

    if (const auto* t = root["clahe"].as_table()) {
        check_keys(*t, {"tile_rows", "tile_cols", "clip_limit"}, "[clahe]");
        g.clahe.tile_rows = number<Index>(r["clahe"]["tile_rows"], g.clahe.tile_rows, "clahe.tile_rows");
        g.clahe.tile_cols = number<Index>(r["clahe"]["tile_cols"], g.clahe.tile_cols, "clahe.tile_cols");
        g.clahe.clip_limit = number<double>(r["clahe"]["clip_limit"], g.clahe.clip_limit, "clahe.clip_limit");
    }
    if (const auto* t = root["denoise"].as_table()) {
        check_keys(*t, {"window"}, "[denoise]");
        g.denoise_window = number<Index>(r["denoise"]["window"], g.denoise_window, "denoise.window");
    }
    if (const auto* t = root["builtin"].as_table()) {
        check_keys(*t, {"side", "background", "min_pixels"}, "[builtin]");
        g.feature_options.side = number<Index>(r["builtin"]["side"], g.feature_options.side, "builtin.side");
        g.feature_options.min_pixels =
            number<Index>(r["builtin"]["min_pixels"], g.feature_options.min_pixels, "builtin.min_pixels");
        if (const auto bg = r["builtin"]["background"].value<std::string>()) {
            if (*bg == "band_mean") {
                g.feature_options.background = BackgroundFill::band_mean;
            } else if (*bg == "zero") {
                g.feature_options.background = BackgroundFill::zero;
            } else {
                throw ValidationError("builtin.background must be band_mean or zero", "builtin.background");
            }
        }
    }
    if (const auto* t = root["cluster"].as_table()) {
        check_keys(*t, {"min_samples", "xi", "bandwidth", "max_iter", "n_init"}, "[cluster]");
        auto& p = g.cluster_params;
        p.min_samples = number<int>(r["cluster"]["min_samples"], p.min_samples, "cluster.min_samples");
        p.xi = number<double>(r["cluster"]["xi"], p.xi, "cluster.xi");
        p.max_iter = number<int>(r["cluster"]["max_iter"], p.max_iter, "cluster.max_iter");
        p.n_init = number<int>(r["cluster"]["n_init"], p.n_init, "cluster.n_init");
        if (p.n_init < 1) throw ValidationError("cluster.n_init must be >= 1", "cluster.n_init");
        const auto bw = r["cluster"]["bandwidth"];
        if (bw) {
            if (const auto s = bw.value<std::string>(); s && *s == "auto") {
                p.bandwidth.reset();
            } else if (const auto d = bw.value<double>()) {
                if (!(*d > 0.0)) throw ValidationError("cluster.bandwidth must be > 0", "cluster.bandwidth");
                p.bandwidth = *d;
            } else {
                throw ValidationError("cluster.bandwidth must be a number or \"auto\"", "cluster.bandwidth");
            }
        }
    }

    if (const auto* arr = root["features"].as_array()) {
        std::set<std::string> names;
        for (const auto& node : *arr) {
            const auto* t = node.as_table();
            if (!t) throw ValidationError("[[features]] entries must be tables", "features");
            check_keys(*t, {"name", "kind", "files", "reduced"}, "[[features]]");
            const toml::node_view<const toml::node> f{static_cast<const toml::node&>(*t)};
            FeatureSourceConfig fs;
            const auto kind = f["kind"].value_or(std::string("embedding"));
            if (kind == "builtin") {
                fs.kind = FeatureSource::Kind::builtin_descriptor;
            } else if (kind == "embedding") {
                fs.kind = FeatureSource::Kind::imported_embedding;
            } else {
                throw ValidationError("feature kind must be builtin or embedding", "features.kind");
            }
            fs.name = f["name"].value_or(kind == "builtin" ? std::string("builtin") : std::string());
            if (fs.name.empty()) throw ValidationError("embedding feature sources need a name", "features.name");
            if (!names.insert(fs.name).second) {
                throw ValidationError("duplicate feature source '" + fs.name + "'", "features.name");
            }
            fs.files = path_map(f["files"], base_dir, "features.files");
            fs.reduced = path_map(f["reduced"], base_dir, "features.reduced");
            g.features.push_back(std::move(fs));
        }
    } else if (root.contains("features")) {
        throw ValidationError("'features' must be an array of tables", "features");
    } else {
        g.features.push_back({"builtin", FeatureSource::Kind::builtin_descriptor, {}, {}});
    }
    return g;
}

GridConfig read_grid_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read grid config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_grid_config(ss.str(), path.parent_path());
}

std::vector<Combination> enumerate_combinations(const GridConfig& c) {
    std::vector<Combination> out;
    for (auto p : c.preprocess)
        for (const auto& f : c.features)
            for (auto r : c.reductions)
                for (auto a : c.clusterers) out.push_back({p, f.name, r, a});
    if (out.empty()) throw ValidationError("experiment grid is empty", "grid");
    return out;
}

std::unordered_map<std::string, std::string> read_labels_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t id = t.column("crown_id");
    const std::size_t sp = t.find_column("species") ? *t.find_column("species") : t.column("species_label");
    std::unordered_map<std::string, std::string> out;
    for (const auto& row : t.rows) {
        if (row[sp].empty()) continue;
        if (!out.emplace(row[id], row[sp]).second) {
            throw ValidationError("duplicate crown_id '" + row[id] + "' in labels", "crown_id");
        }
    }
    return out;
}

namespace {

CrownChip preprocess_chip(const CrownChip& chip, Preprocess p, const GridConfig& g) {
    ClaheOptions o = g.clahe;
    o.tile_rows = std::min(o.tile_rows, chip.patch.height());
    o.tile_cols = std::min(o.tile_cols, chip.patch.width());
    CrownChip out = chip;
    out.patch = apply_clahe(chip.patch, o);
    if (p == Preprocess::clahe_denoising && chip.patch.height() > 0) out.patch = denoise(out.patch, g.denoise_window);
    return out;
}

bool seed_independent(ClusterAlgorithm a, const ClusterParams& p, Index n) {
    switch (a) {
        case ClusterAlgorithm::agglomerative:
        case ClusterAlgorithm::optics: return true;
        case ClusterAlgorithm::mean_shift: return p.bandwidth.has_value() || n <= 256;
        default: return false;
    }
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<ClusterExperimentResult> run_experiment_grid(const std::vector<CrownChip>& chips_in,
                                                         const std::unordered_map<std::string, std::string>& labels,
                                                         const GridConfig& config, int n_repeats,
                                                         std::uint64_t base_seed) {
    if (n_repeats < 1) throw ValidationError("n_repeats must be >= 1", "repeats");
    const std::vector<Combination> combos = enumerate_combinations(config);
    if (chips_in.empty()) throw ValidationError("no chips for the experiment", "chips");

    // Canonical order makes the results independent of the input order.
    std::vector<const CrownChip*> chips;
    for (const auto& c : chips_in) chips.push_back(&c);
    std::sort(chips.begin(), chips.end(), [](const CrownChip* a, const CrownChip* b) { return a->crown_id < b->crown_id; });
    std::vector<std::string> ids, truth;
    for (const auto* c : chips) {
        const auto it = labels.find(c->crown_id);
        if (it == labels.end()) throw ValidationError("no species label for crown '" + c->crown_id + "'", "labels");
        if (!ids.empty() && ids.back() == c->crown_id) {
            throw ValidationError("duplicate chip for crown '" + c->crown_id + "'", "chips");
        }
        ids.push_back(c->crown_id);
        truth.push_back(it->second);
    }
    const int k = config.k > 0 ? config.k : static_cast<int>(std::set<std::string>(truth.begin(), truth.end()).size());

    for (const auto& fs : config.features) {
        for (auto p : config.preprocess) {
            if (fs.kind == FeatureSource::Kind::imported_embedding && !fs.files.count(p)) {
                throw ValidationError("feature source '" + fs.name + "' has no embedding file for " + to_string(p),
                                      "features.files");
            }
            if (std::count(config.reductions.begin(), config.reductions.end(), Reduction::imported) &&
                !fs.reduced.count(p)) {
                throw ValidationError("feature source '" + fs.name + "' has no reduced vectors for " + to_string(p),
                                      "features.reduced");
            }
        }
    }

    // Reduced feature matrices per (preprocess, source, reduction).
    std::map<std::tuple<Preprocess, std::string, Reduction>, FeatureMatrix> inputs;
    for (auto p : config.preprocess) {
        std::vector<CrownChip> prepared;
        bool need_builtin = false;
        for (const auto& fs : config.features) need_builtin |= fs.kind == FeatureSource::Kind::builtin_descriptor;
        if (need_builtin) {
            prepared.reserve(chips.size());
            for (const auto* c : chips) prepared.push_back(preprocess_chip(*c, p, config));
        }
        for (const auto& fs : config.features) {
            for (auto red : config.reductions) {
                FeatureMatrix m;
                if (red == Reduction::imported) {
                    m = import_embeddings(ids, fs.reduced.at(p));
                } else {
                    const FeatureMatrix raw = fs.kind == FeatureSource::Kind::builtin_descriptor
                                                  ? builtin_feature_matrix(prepared, config.feature_options)
                                                  : import_embeddings(ids, fs.files.at(p));
                    m = pca_fit_transform(raw, config.pca_variance).reduced;
                }
                inputs[{p, fs.name, red}] = std::move(m);
            }
        }
    }

    struct Outcome {
        double f1 = 0.0, weighted = 0.0;
        int assigned = 0;
    };
    const std::size_t n_tasks = combos.size() * static_cast<std::size_t>(n_repeats);
    std::vector<Outcome> outcomes(n_tasks);
    ClusterParams params = config.cluster_params;
    params.k = k;

    auto run_task = [&](std::size_t task) {
        const Combination& c = combos[task / static_cast<std::size_t>(n_repeats)];
        const auto repeat = static_cast<std::uint64_t>(task % static_cast<std::size_t>(n_repeats));
        const FeatureMatrix& x = inputs.at({c.preprocess, c.features, c.reduction});
        if (repeat > 0 && seed_independent(c.clusterer, params, x.rows())) return;
        const ClusterAssignment a = cluster(x, c.clusterer, params, base_seed + repeat);
        const ClusterMapping mapping = map_clusters_to_classes(a.labels, truth);
        const F1Report f1 = f1_scores(mapping.counts);
        outcomes[task] = {f1.micro, f1.weighted, static_cast<int>(mapping.cluster_to_class.size())};
    };

    unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_tasks));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) {
            try {
                run_task(t);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n_tasks;
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<ClusterExperimentResult> results;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        ClusterExperimentResult r;
        r.combination = combos[ci];
        r.k = k;
        r.n_repeats = n_repeats;
        const FeatureMatrix& x = inputs.at({combos[ci].preprocess, combos[ci].features, combos[ci].reduction});
        const bool fixed = seed_independent(combos[ci].clusterer, params, x.rows());
        for (int rep = 0; rep < n_repeats; ++rep) {
            const Outcome& o = outcomes[ci * static_cast<std::size_t>(n_repeats) + (fixed ? 0 : static_cast<std::size_t>(rep))];
            r.f1.push_back(o.f1);
            r.weighted_f1.push_back(o.weighted);
            r.assigned_clusters.push_back(o.assigned);
        }
        r.mean_f1 = mean(r.f1);
        r.mean_weighted_f1 = mean(r.weighted_f1);
        results.push_back(std::move(r));
    }
    std::stable_sort(results.begin(), results.end(),
                     [](const auto& a, const auto& b) { return a.mean_f1 > b.mean_f1; });
    return results;
}

void write_grid_report(std::ostream& out, const std::vector<ClusterExperimentResult>& results) {
    out << kGridReportHeader << '\n';
    for (const auto& r : results) {
        write_csv_row(out, {to_string(r.combination.preprocess), r.combination.features,
                            to_string(r.combination.reduction), to_string(r.combination.clusterer), std::to_string(r.k),
                            format_number(r.mean_f1), format_number(r.mean_weighted_f1), std::to_string(r.n_repeats)});
    }
}

}  // namespace canopy
