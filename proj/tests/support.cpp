#include "support.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace canopy::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("canopy_test_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream(path) << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

MultibandRaster make_raster(std::vector<Band> bands, const std::string& crs, GeoTransform transform) {
    return MultibandRaster(std::move(bands), transform, crs);
}

Plane random_plane(Index rows, Index cols, std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> u(lo, hi);
    Plane p(rows, cols);
    for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    return p;
}

Ring rect_ring(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

BlobChm blob_chm(Index rows, Index cols, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(2, 6);
    std::uniform_real_distribution<double> r(0.0, static_cast<double>(rows - 1)), c(0.0, static_cast<double>(cols - 1)),
        h(8.0, 25.0), s(2.0, 5.0);
    const int n = count(rng);
    BlobChm out;
    Plane p = Plane::Zero(rows, cols);
    for (int b = 0; b < n; ++b) {
        const double cr = r(rng), cc = c(rng), height = h(rng), sigma = s(rng);
        out.centres.emplace_back(cr, cc);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
                const double d2 = (i - cr) * (i - cr) + (j - cc) * (j - cc);
                p(i, j) += static_cast<float>(height * std::exp(-d2 / (2 * sigma * sigma)));
            }
    }
    out.chm = make_raster({{"chm", std::move(p), std::nullopt}});
    return out;
}

Clumps synthetic_clumps(int per, int dim, double separation, double spread, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, spread);
    const char* names[] = {"alpha", "beta", "gamma", "delta"};
    Clumps out;
    out.x.resize(4 * per, dim);
    for (int k = 0; k < 4; ++k) {
        // Corners of a regular simplex-like layout: axis k offset by `separation`.
        Eigen::VectorXd centre = Eigen::VectorXd::Zero(dim);
        centre(k % dim) = separation * (k < dim ? 1.0 : -1.0);
        for (int i = 0; i < per; ++i) {
            const int row = k * per + i;
            for (int d = 0; d < dim; ++d) out.x(row, d) = centre(d) + noise(rng);
            out.truth.push_back(names[k]);
        }
    }
    return out;
}

std::vector<CrownChip> synthetic_chips(int per_species, Index side, std::mt19937_64& rng) {
    const char* species[] = {"picea", "fagus", "abies", "pinus"};
    const float means[4][3] = {{0.15f, 0.35f, 0.20f}, {0.45f, 0.60f, 0.30f}, {0.25f, 0.20f, 0.55f}, {0.70f, 0.40f, 0.65f}};
    std::normal_distribution<float> noise(0.0f, 0.03f);
    std::vector<CrownChip> chips;
    int id = 0;
    for (int s = 0; s < 4; ++s)
        for (int i = 0; i < per_species; ++i) {
            std::vector<Band> bands;
            const char* names[] = {"red", "green", "blue"};
            Mask mask(side, side);
            const double rc = (side - 1) / 2.0;
            for (Index r = 0; r < side; ++r)
                for (Index c = 0; c < side; ++c) mask(r, c) = (r - rc) * (r - rc) + (c - rc) * (c - rc) <= rc * rc + 1;
            for (int b = 0; b < 3; ++b) {
                Plane p(side, side);
                for (Index r = 0; r < side; ++r)
                    for (Index c = 0; c < side; ++c)
                        p(r, c) = mask(r, c) ? std::clamp(means[s][b] + noise(rng), 0.0f, 1.0f)
                                             : std::numeric_limits<float>::quiet_NaN();
                bands.push_back({names[b], std::move(p), std::numeric_limits<float>::quiet_NaN()});
            }
            CrownChip chip;
            chip.crown_id = "crown_" + std::to_string(++id);
            chip.patch = make_raster(std::move(bands));
            chip.mask = mask;
            chip.valid_pixels = mask.count();
            chip.species = species[s];
            chips.push_back(std::move(chip));
        }
    return chips;
}

std::vector<TreeRecord> random_records(std::size_t n, std::mt19937_64& rng, const std::string& prefix) {
    const char* species[] = {"Picea abies", "Fagus sylvatica", "Abies alba", "Pinus sylvestris", "unknown"};
    std::uniform_real_distribution<double> pos(0.0, 1000.0), height(3.0, 35.0);
    std::uniform_int_distribution<int> sp(0, 4), vit(-1, 4), coin(0, 3);
    std::vector<TreeRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        TreeRecord r;
        r.tree_id = prefix + std::to_string(1000 + i);
        r.x = std::round(pos(rng) * 100.0) / 100.0;
        r.y = std::round(pos(rng) * 100.0) / 100.0;
        r.crs = "EPSG:32632";
        r.species = species[sp(rng)];
        if (coin(rng)) r.height_est = std::round(height(rng) * 10.0) / 10.0;
        if (coin(rng)) r.crown_diameter_est = std::round(height(rng) * 3.0) / 10.0;
        if (const int v = vit(rng); v >= 0) r.vitality = v;
        r.site_info = coin(rng) == 0 ? "park" : "";
        if (coin(rng) == 1) r.last_inspected = "2023-0" + std::to_string(1 + coin(rng)) + "-15";
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TreeRecord> mutate_records(const std::vector<TreeRecord>& a, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pct(0, 99), vit(0, 4);
    std::uniform_real_distribution<double> nudge(-0.5, 0.5);
    std::vector<TreeRecord> out;
    for (const auto& r : a) {
        const int p = pct(rng);
        if (p < 10) continue;  // removed
        TreeRecord m = r;
        if (p < 20) m.vitality = vit(rng);
        if (p >= 20 && p < 25) m.vitality.reset();
        if (p >= 25 && p < 30) m.x += std::round(nudge(rng) * 100.0) / 100.0;
        if (p >= 30 && p < 33) m.species = "Quercus robur";
        if (p >= 33 && p < 36) m.height_est = m.height_est ? std::nullopt : std::optional<double>(12.5);
        if (p >= 36 && p < 38) m.site_info = "street, \"north\" side";
        if (p >= 38 && p < 40) m.last_inspected = "2024-05-01";
        out.push_back(std::move(m));
    }
    auto extra = random_records(1 + static_cast<std::size_t>(pct(rng) % 15), rng, "N" + std::to_string(pct(rng)) + "_");
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

Timestamp ts(const std::string& iso) { return parse_timestamp(iso); }

}  // namespace canopy::testing
