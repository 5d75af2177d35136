#include "support.hpp"

#include "canopy/error.hpp"
#include "canopy/indices.hpp"

#include <doctest.h>

using namespace canopy;
using namespace canopy::testing;

TEST_CASE("index range invariant on random reflectance") {
    std::mt19937_64 rng(21);
    Plane red = random_plane(40, 40, rng), nir = random_plane(40, 40, rng), re = random_plane(40, 40, rng);
    red(0, 0) = nir(0, 0) = 0.0f;
    const auto r = make_raster({{"red", red, std::nullopt}, {"nir", nir, std::nullopt}, {"rededge", re, std::nullopt}});
    for (auto idx : {VegetationIndex::ndvi, VegetationIndex::ndre}) {
        const auto out = compute_index(r, idx);
        const Band& b = out.bands()[0];
        for (Index i = 0; i < b.values.size(); ++i) {
            const float v = b.values.data()[i];
            if (std::isfinite(v)) {
                CHECK(v >= -1.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
    CHECK_FALSE(compute_ndvi(r).bands()[0].is_valid(0, 0));
}

TEST_CASE("NDVI point values") {
    const auto r = make_raster({{"red", Plane::Constant(1, 1, 0.2f), std::nullopt}, {"nir", Plane::Constant(1, 1, 0.8f), std::nullopt}});
    CHECK(compute_ndvi(r).bands()[0].values(0, 0) == 0.6f);
    CHECK_THROWS_AS(compute_ndre(r), ValidationError);
}

TEST_CASE("nodata propagates") {
    Plane red = Plane::Constant(2, 2, 0.1f);
    red(1, 1) = 0.0f;
    const auto r = make_raster({{"red", red, 0.0f}, {"nir", Plane::Constant(2, 2, 0.5f), std::nullopt}});
    const auto out = compute_ndvi(r);
    const Band& b = out.bands()[0];
    CHECK(b.is_valid(0, 0));
    CHECK_FALSE(b.is_valid(1, 1));
}

TEST_CASE("percentiles and summary") {
    const std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(percentile_sorted(s, 0.0) == 1.0);
    CHECK(percentile_sorted(s, 1.0) == 5.0);
    CHECK(percentile_sorted(s, 0.1) == doctest::Approx(1.4));
    CHECK(percentile_sorted(s, 0.5) == 3.0);
    const auto z = summarize("c", {4, 1, 3, 2});
    CHECK(z.count == 4);
    CHECK(z.mean == 2.5);
    CHECK(z.median == 2.5);
    CHECK(z.std == doctest::Approx(std::sqrt(1.25)));
    CHECK(z.min == 1);
    CHECK(z.max == 4);
}

TEST_CASE("zonal statistics ordering invariant") {
    std::mt19937_64 rng(6);
    const auto idx = make_raster({{"ndvi", random_plane(50, 50, rng, -1.0f, 1.0f), std::nullopt}});
    CrownCollection crowns{"EPSG:32632", {}};
    for (int i = 0; i < 10; ++i) {
        const double x = static_cast<double>(rng() % 40), y = 60.0 + static_cast<double>(rng() % 35);
        crowns.crowns.push_back({"c" + std::to_string(i), rect_ring(x, y, x + 1 + rng() % 9, y + 1 + rng() % 5)});
    }
    crowns.crowns.push_back({"away", rect_ring(500, 500, 510, 510)});
    const auto z = zonal_stats(idx, crowns);
    CHECK(z.stats.size() == 10);
    REQUIRE(z.skipped.size() == 1);
    CHECK(z.skipped[0].reason == "no coverage");
    for (const auto& s : z.stats) {
        CHECK(s.count >= 1);
        CHECK(s.min <= s.p10);
        CHECK(s.p10 <= s.median);
        CHECK(s.median <= s.p90);
        CHECK(s.p90 <= s.max);
    }
    TempDir dir;
    write_stats_csv(z.stats, dir / "s.csv");
    const auto back = read_stats_csv(dir / "s.csv");
    REQUIRE(back.size() == z.stats.size());
    CHECK(back[3].crown_id == z.stats[3].crown_id);
    CHECK(back[3].mean == doctest::Approx(z.stats[3].mean));
}
