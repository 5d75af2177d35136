#include "canopy/app.hpp"
#include "canopy/chips.hpp"
#include "canopy/csv.hpp"
#include "canopy/error.hpp"
#include "canopy/experiment.hpp"
#include "canopy/indices.hpp"
#include "canopy/inventory.hpp"
#include "canopy/itcd.hpp"
#include "canopy/metrics.hpp"
#include "canopy/raster_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

using namespace canopy;
namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

SegmentationMap read_segmentation(const fs::path& path, std::optional<int> nodata) {
    const MultibandRaster r = load_raster(path);
    if (r.band_count() != 1) throw ValidationError("segmentation map '" + path.string() + "' must have one band", "bands");
    const Band& b = r.bands().front();
    SegmentationMap m;
    m.nodata = nodata.value_or(b.nodata && std::isfinite(*b.nodata) ? static_cast<std::int32_t>(*b.nodata) : -1);
    m.ids.resize(r.height(), r.width());
    for (Index i = 0; i < r.height(); ++i)
        for (Index j = 0; j < r.width(); ++j) {
            const float v = b.values(i, j);
            if (!b.is_valid(i, j)) {
                m.ids(i, j) = m.nodata;
            } else if (v != std::floor(v)) {
                throw ValidationError("segmentation map '" + path.string() + "' holds non-integer class ids", "ids");
            } else {
                m.ids(i, j) = static_cast<std::int32_t>(v);
            }
        }
    return m;
}

void run_evaluate_f1(const fs::path& pred_path, const fs::path& truth_path, const fs::path& out_path) {
    const CsvTable pred = read_csv(pred_path);
    const std::size_t pid = pred.column("crown_id");
    const std::size_t plabel = pred.find_column("cluster") ? *pred.find_column("cluster") : pred.column("label");
    std::unordered_map<std::string, int> labels;
    for (const auto& row : pred.rows) {
        const double v = parse_number(row[plabel], "cluster");
        if (v != std::floor(v) || v < -1) throw ValidationError("cluster label '" + row[plabel] + "' is not an integer >= -1", "cluster");
        if (!labels.emplace(row[pid], static_cast<int>(v)).second) {
            throw ValidationError("duplicate crown_id '" + row[pid] + "' in predictions", "crown_id");
        }
    }
    const auto truth = read_labels_csv(truth_path);
    std::vector<std::string> ids;
    for (const auto& [id, sp] : truth) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (const auto& [id, l] : labels)
        if (!truth.count(id)) throw ValidationError("predicted crown '" + id + "' has no ground truth", "crown_id");
    std::vector<int> l;
    std::vector<std::string> t;
    for (const auto& id : ids) {
        const auto it = labels.find(id);
        l.push_back(it == labels.end() ? -1 : it->second);
        t.push_back(truth.at(id));
    }
    const ClusterMapping m = map_clusters_to_classes(l, t);
    auto out = open_out(out_path);
    write_f1_report(out, m.counts, f1_scores(m.counts));
}

void run_evaluate_iou(const fs::path& pred_path, const fs::path& truth_path, const std::optional<fs::path>& shares_path,
                      const std::optional<fs::path>& classes_path, std::optional<int> nodata, Index smooth,
                      std::optional<std::size_t> keep_top, const fs::path& out_path) {
    SegmentationMap pred = read_segmentation(pred_path, nodata);
    SegmentationMap truth = read_segmentation(truth_path, nodata);
    std::map<std::int32_t, std::string> classes;
    if (classes_path) {
        const CsvTable t = read_csv(*classes_path);
        const std::size_t id = t.column("id"), name = t.column("name");
        for (const auto& row : t.rows) {
            const double v = parse_number(row[id], "id");
            classes[static_cast<std::int32_t>(v)] = row[name];
        }
    } else {
        for (const auto* m : {&pred, &truth})
            for (Index i = 0; i < m->ids.size(); ++i) {
                const auto v = m->ids.data()[i];
                if (v != m->nodata) classes[v] = std::to_string(v);
            }
    }
    pred.classes = truth.classes = classes;
    if (smooth > 1) pred = majority_vote_smooth(pred, smooth);
    ClassShareTable shares = shares_path ? read_shares_csv(*shares_path) : shares_from_map(truth);
    if (keep_top) {
        const ClassMerge merge = merge_minor_classes(shares, KeepTop{*keep_top});
        pred = apply_merge(merge, pred);
        truth = apply_merge(merge, truth);
        shares = merge.shares;
    }
    auto out = open_out(out_path);
    write_iou_report(out, iou_scores(pred, truth, shares));
}

std::vector<TreeAnnotation> annotations_from_stats(const fs::path& stats_path, AnnotationKind kind,
                                                   const std::string& producer) {
    std::vector<TreeAnnotation> out;
    const Timestamp at = now_utc();
    for (const auto& s : read_stats_csv(stats_path)) {
        nlohmann::json p = {{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"std", s.std},
                            {"min", s.min},     {"max", s.max},   {"p10", s.p10},       {"p90", s.p90}};
        out.push_back({s.crown_id, kind, p, at, producer});
    }
    return out;
}

std::vector<TreeAnnotation> annotations_from_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read annotations '" + path.string() + "'");
    std::vector<TreeAnnotation> out;
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(annotation_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("line " + std::to_string(n) + ": " + e.what(), "annotation");
        }
    }
    return out;
}

std::vector<TreeAnnotation> annotations_from_clusters(const fs::path& path, const std::string& producer) {
    const CsvTable t = read_csv(path);
    const std::size_t id = t.column("crown_id"), sp = t.column("species");
    const auto cl = t.find_column("cluster");
    std::vector<TreeAnnotation> out;
    const Timestamp at = now_utc();
    for (const auto& row : t.rows) {
        nlohmann::json p = {{"species", row[sp]}};
        if (cl) p["cluster"] = static_cast<int>(parse_number(row[*cl], "cluster"));
        out.push_back({row[id], AnnotationKind::species_prediction, p, at, producer});
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree inventory and vitality analytics"};
    app.require_subcommand(1);

    // indices
    auto* indices = app.add_subcommand("indices", "Compute NDVI or NDRE, optionally with per-crown statistics");
    fs::path idx_in, idx_out;
    std::string idx_name = "ndvi";
    std::optional<fs::path> idx_crowns, idx_stats;
    indices->add_option("--in", idx_in, "Multiband orthomosaic")->required();
    indices->add_option("--index", idx_name, "ndvi or ndre");
    indices->add_option("--out", idx_out, "Output index raster")->required();
    indices->add_option("--crowns", idx_crowns, "Crown polygons (GeoJSON)");
    indices->add_option("--stats", idx_stats, "Per-crown statistics CSV");

    // itcd
    auto* itcd = app.add_subcommand("itcd", "Treetop detection and watershed crown delineation");
    fs::path chm_path, itcd_out;
    double min_height = kDefaultMinHeight, sigma = 0.0;
    Index window = 5;
    std::optional<fs::path> treetops_out;
    itcd->add_option("--chm", chm_path, "Canopy height model")->required();
    itcd->add_option("--min-height", min_height, "Minimum crown height (m)");
    itcd->add_option("--window", window, "Local maxima window radius (pixels)");
    itcd->add_option("--sigma", sigma, "Gaussian smoothing before detection (pixels)");
    itcd->add_option("--out", itcd_out, "Output crowns (GeoJSON)")->required();
    itcd->add_option("--treetops", treetops_out, "Treetop CSV");

    // chips
    auto* chips = app.add_subcommand("chips", "Cut per-crown image chips");
    fs::path ortho_path, crowns_path, chips_dir, manifest_path;
    Index min_pixels = kDefaultMinChipPixels;
    chips->add_option("--ortho", ortho_path)->required();
    chips->add_option("--crowns", crowns_path)->required();
    chips->add_option("--out", chips_dir, "Chip directory")->required();
    chips->add_option("--manifest", manifest_path)->required();
    chips->add_option("--min-pixels", min_pixels);

    // cluster-experiment
    auto* exp = app.add_subcommand("cluster-experiment", "Run the clustering method grid");
    fs::path exp_chips, exp_grid, exp_out;
    std::optional<fs::path> exp_labels;
    int repeats = 30;
    std::uint64_t seed = 42;
    exp->add_option("--chips", exp_chips, "Chip manifest")->required();
    exp->add_option("--labels", exp_labels, "crown_id,species CSV (default: manifest species_label)");
    exp->add_option("--grid", exp_grid, "Grid config (TOML)")->required();
    exp->add_option("--repeats", repeats);
    exp->add_option("--seed", seed);
    exp->add_option("--out", exp_out)->required();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "F1 or IoU evaluation");
    fs::path ev_pred, ev_truth, ev_out;
    std::string ev_mode = "f1";
    std::optional<fs::path> ev_shares, ev_classes;
    std::optional<int> ev_nodata;
    Index ev_smooth = 1;
    std::optional<std::size_t> ev_keep_top;
    eval->add_option("--pred", ev_pred)->required();
    eval->add_option("--truth", ev_truth)->required();
    eval->add_option("--mode", ev_mode, "f1 or iou")->check(CLI::IsMember({"f1", "iou"}));
    eval->add_option("--shares", ev_shares, "class,share CSV (iou)");
    eval->add_option("--classes", ev_classes, "id,name CSV (iou)");
    eval->add_option("--nodata", ev_nodata, "Nodata class id (iou)");
    eval->add_option("--smooth", ev_smooth, "Majority-vote window applied to the prediction (iou)");
    eval->add_option("--merge-keep-top", ev_keep_top, "Merge all but the largest N classes into 'other' (iou)");
    eval->add_option("--out", ev_out)->required();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load data into the inventory store");
    ingest->require_subcommand(1);
    fs::path store_path;
    auto* ing_cad = ingest->add_subcommand("cadastre", "Commit a cadastre snapshot");
    fs::path cad_file;
    std::string captured_at, default_crs;
    ing_cad->add_option("--store", store_path)->required();
    ing_cad->add_option("--file", cad_file, "CSV or GeoJSON")->required();
    ing_cad->add_option("--captured-at", captured_at, "ISO-8601 UTC (default: now)");
    ing_cad->add_option("--crs", default_crs, "CRS for rows without one");
    auto* ing_sens = ingest->add_subcommand("sensors", "Append soil-moisture readings");
    fs::path sens_file;
    ing_sens->add_option("--store", store_path)->required();
    ing_sens->add_option("--file", sens_file)->required();
    auto* ing_ann = ingest->add_subcommand("annotations", "Append tree annotations");
    std::optional<fs::path> ann_jsonl, ann_stats, ann_clusters, ann_crowns;
    std::string ann_kind = "ndvi_stats", producer = "canopy";
    double max_dist = 3.0;
    ing_ann->add_option("--store", store_path)->required();
    ing_ann->add_option("--file", ann_jsonl, "JSON lines annotations");
    ing_ann->add_option("--stats", ann_stats, "Per-crown statistics CSV");
    ing_ann->add_option("--kind", ann_kind, "ndvi_stats or ndre_stats for --stats");
    ing_ann->add_option("--species", ann_clusters, "crown_id,species[,cluster] CSV");
    ing_ann->add_option("--producer", producer);
    ing_ann->add_option("--crowns", ann_crowns, "Crowns used to map crown ids to trees of the latest snapshot");
    ing_ann->add_option("--max-dist", max_dist, "Join distance (m) with --crowns");

    // join
    auto* join = app.add_subcommand("join", "Match crowns to cadastre trees");
    fs::path join_crowns, join_out;
    std::string join_snapshot;
    join->add_option("--store", store_path)->required();
    join->add_option("--crowns", join_crowns)->required();
    join->add_option("--snapshot", join_snapshot, "Snapshot id (default: latest)");
    join->add_option("--max-dist", max_dist);
    join->add_option("--out", join_out)->required();

    // diff
    auto* diff = app.add_subcommand("diff", "Change set between two snapshots");
    std::string diff_from, diff_to;
    fs::path diff_out;
    diff->add_option("--store", store_path)->required();
    diff->add_option("--from", diff_from)->required();
    diff->add_option("--to", diff_to)->required();
    diff->add_option("--out", diff_out)->required();

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "HTTP API and tile server");
    fs::path config_path;
    std::optional<std::string> host;
    std::optional<int> port;
    serve_cmd->add_option("--config", config_path)->required();
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*indices) {
            const MultibandRaster index = compute_index(load_raster(idx_in), parse_vegetation_index(idx_name));
            save_raster(index, idx_out);
            if (idx_stats && !idx_crowns) throw ValidationError("--stats needs --crowns", "crowns");
            if (idx_crowns) {
                const ZonalResult z = zonal_stats(index, read_crowns(*idx_crowns));
                if (idx_stats) write_stats_csv(z.stats, *idx_stats);
                for (const auto& s : z.skipped) std::cerr << "skipped " << s.crown_id << ": " << s.reason << '\n';
            }
        } else if (*itcd) {
            MultibandRaster chm = load_raster(chm_path);
            if (sigma > 0.0) chm = smooth_chm(chm, sigma);
            const auto tops = detect_local_maxima(chm, window, min_height);
            const CrownCollection crowns = watershed_delineate(chm, tops, min_height);
            write_crowns(crowns, itcd_out);
            if (treetops_out) {
                auto out = open_out(*treetops_out);
                write_csv_row(out, {"crown_id", "row", "col", "x", "y", "height"});
                for (std::size_t i = 0; i < tops.size(); ++i) {
                    const auto& t = tops[i];
                    write_csv_row(out, {"crown_" + std::to_string(i + 1), std::to_string(t.row), std::to_string(t.col),
                                        format_number(t.x), format_number(t.y), format_number(t.height)});
                }
            }
            std::cout << tops.size() << " treetops, " << crowns.crowns.size() << " crowns\n";
        } else if (*chips) {
            const ChipExtraction ex = extract_chips(load_raster(ortho_path), read_crowns(crowns_path), min_pixels,
                                                    ortho_path.filename().string());
            write_chips(ex.chips, chips_dir, manifest_path);
            for (const auto& s : ex.skipped) std::cerr << "skipped " << s.crown_id << ": " << s.reason << '\n';
            std::cout << ex.chips.size() << " chips, " << ex.skipped.size() << " skipped\n";
        } else if (*exp) {
            const std::vector<CrownChip> c = read_chips(exp_chips);
            std::unordered_map<std::string, std::string> labels;
            if (exp_labels) {
                labels = read_labels_csv(*exp_labels);
            } else {
                for (const auto& chip : c)
                    if (chip.species) labels[chip.crown_id] = *chip.species;
            }
            const auto results = run_experiment_grid(c, labels, read_grid_config(exp_grid), repeats, seed);
            auto out = open_out(exp_out);
            write_grid_report(out, results);
        } else if (*eval) {
            if (ev_mode == "f1") {
                run_evaluate_f1(ev_pred, ev_truth, ev_out);
            } else {
                run_evaluate_iou(ev_pred, ev_truth, ev_shares, ev_classes, ev_nodata, ev_smooth, ev_keep_top, ev_out);
            }
        } else if (*ingest) {
            FileStore store(store_path);
            if (*ing_cad) {
                const Timestamp at = captured_at.empty() ? now_utc() : parse_timestamp(captured_at, "captured-at");
                const auto s = ingest_cadastre(store, cad_file, at, {default_crs, {}});
                std::cout << "S" << s.snapshot_id << ": " << s.records.size() << " trees\n";
            } else if (*ing_sens) {
                const IngestCount n = ingest_sensor_series(store, sens_file);
                std::cout << n.ingested << " ingested, " << n.rejected << " rejected\n";
            } else {
                std::vector<TreeAnnotation> ann;
                if (ann_jsonl) ann = annotations_from_jsonl(*ann_jsonl);
                if (ann_stats) {
                    const AnnotationKind k = parse_annotation_kind(ann_kind);
                    if (k != AnnotationKind::ndvi_stats && k != AnnotationKind::ndre_stats) {
                        throw ValidationError("--stats needs --kind ndvi_stats or ndre_stats", "kind");
                    }
                    auto more = annotations_from_stats(*ann_stats, k, producer);
                    ann.insert(ann.end(), more.begin(), more.end());
                }
                if (ann_clusters) {
                    auto more = annotations_from_clusters(*ann_clusters, producer);
                    ann.insert(ann.end(), more.begin(), more.end());
                }
                if (ann.empty()) throw ValidationError("nothing to ingest: give --file, --stats or --species", "file");
                if (ann_crowns) {
                    const auto latest = store.latest_snapshot();
                    if (!latest) throw ValidationError("mapping crowns to trees needs a cadastre snapshot", "crowns");
                    const JoinResult j = join_predictions(store, *latest, read_crowns(*ann_crowns), max_dist);
                    std::unordered_map<std::string, std::string> tree_of;
                    for (const auto& m : j.matches) tree_of[m.crown_id] = m.tree_id;
                    std::vector<TreeAnnotation> mapped;
                    for (auto& a : ann) {
                        const auto it = tree_of.find(a.target_id);
                        if (it == tree_of.end()) continue;
                        a.target_id = it->second;
                        mapped.push_back(std::move(a));
                    }
                    std::cerr << (ann.size() - mapped.size()) << " annotations without a matched tree dropped\n";
                    ann = std::move(mapped);
                }
                store.append_annotations(ann);
                std::cout << ann.size() << " annotations ingested\n";
            }
        } else if (*join) {
            FileStore store(store_path);
            SnapshotId id;
            if (join_snapshot.empty()) {
                const auto latest = store.latest_snapshot();
                if (!latest) throw NotFoundError("the store holds no snapshots");
                id = *latest;
            } else {
                id = parse_snapshot_id(join_snapshot);
            }
            const JoinResult j = join_predictions(store, id, read_crowns(join_crowns), max_dist);
            auto out = open_out(join_out);
            write_csv_row(out, {"tree_id", "crown_id", "distance"});
            for (const auto& m : j.matches) write_csv_row(out, {m.tree_id, m.crown_id, format_number(m.distance)});
            for (const auto& t : j.unmatched_trees) write_csv_row(out, {t, "", ""});
            for (const auto& c : j.unmatched_crowns) write_csv_row(out, {"", c, ""});
            std::cout << j.matches.size() << " matched, " << j.unmatched_trees.size() << " trees and "
                      << j.unmatched_crowns.size() << " crowns unmatched\n";
        } else if (*diff) {
            FileStore store(store_path);
            const ChangeSet d = snapshot_diff(store, parse_snapshot_id(diff_from), parse_snapshot_id(diff_to));
            auto out = open_out(diff_out);
            out << to_json(d).dump(2) << '\n';
        } else if (*serve_cmd) {
            AppConfig cfg = read_app_config(config_path);
            if (host) cfg.host = *host;
            if (port) cfg.port = *port;
            const App a = App::from_config(cfg);
            serve(a, cfg.host, cfg.port);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
