#include "oracles.hpp"
#include "support.hpp"

#include "canopy/chips.hpp"
#include "canopy/error.hpp"
#include "canopy/geometry.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace canopy;
using namespace canopy::testing;

TEST_CASE("rasterize_polygon equals per-pixel point-in-polygon") {
    const GeoTransform t{0.0, 100.0, 1.0, -1.0};
    for (const auto& poly : fixture_polygons()) {
        const Mask m = rasterize_polygon(poly, t, 30, 30);
        for (Index r = 0; r < 30; ++r)
            for (Index c = 0; c < 30; ++c) {
                const auto p = t.pixel_center(r, c);
                CHECK_MESSAGE(m(r, c) == crossing_inside(poly.ring, p.x(), p.y()), poly.crown_id << " " << r << "," << c);
            }
    }
}

TEST_CASE("ring helpers") {
    const Ring sq = rect_ring(0, 0, 2, 2);
    CHECK(signed_area(sq) == doctest::Approx(4.0));
    Ring cw(sq.rbegin(), sq.rend());
    CHECK(signed_area(cw) == doctest::Approx(-4.0));
    CHECK(ring_centroid(sq).isApprox(Point(1, 1)));
    CHECK(point_in_ring(sq, 1, 1));
    CHECK_FALSE(point_in_ring(sq, 3, 1));
    CHECK(is_simple(sq));
    const Ring bow{{0, 0}, {2, 2}, {2, 0}, {0, 2}, {0, 0}};
    CHECK_FALSE(is_simple(bow));
}

TEST_CASE("crown validation") {
    CrownCollection c;
    c.crowns.push_back({"a", rect_ring(0, 0, 1, 1)});
    CHECK_NOTHROW(validate(c));
    c.crowns.push_back({"a", rect_ring(2, 2, 3, 3)});
    CHECK_THROWS_AS(validate(c), ValidationError);
    CHECK_THROWS_AS(validate(CrownPolygon{"open", {{0, 0}, {1, 0}, {1, 1}}}), ValidationError);
    CHECK_THROWS_AS(validate(CrownPolygon{"flat", {{0, 0}, {1, 0}, {2, 0}, {0, 0}}}), ValidationError);
    CHECK_THROWS_AS(validate(CrownPolygon{"bow", {{0, 0}, {2, 2}, {2, 0}, {0, 2}, {0, 0}}}), ValidationError);
}

TEST_CASE("crown GeoJSON round trip") {
    TempDir dir;
    CrownCollection c{"EPSG:32632", {}};
    CrownPolygon p{"c1", rect_ring(0.5, 1.5, 4.25, 6.0)};
    p.species = "Fagus sylvatica";
    p.height = 17.5;
    p.score = 0.9;
    p.source = CrownSource::watershed;
    c.crowns.push_back(p);
    write_crowns(c, dir / "c.geojson");
    const auto back = read_crowns(dir / "c.geojson");
    REQUIRE(back.crowns.size() == 1);
    CHECK(back.crs == "EPSG:32632");
    CHECK(back.crowns[0].crown_id == "c1");
    CHECK(back.crowns[0].species == p.species);
    CHECK(back.crowns[0].height == p.height);
    CHECK(back.crowns[0].source == CrownSource::watershed);
    CHECK(back.crowns[0].ring == p.ring);
    CHECK_THROWS_AS(read_crowns(dir / "none.geojson"), IoError);
}

TEST_CASE("chip extraction") {
    std::mt19937_64 rng(8);
    Plane red = random_plane(40, 40, rng), nir = random_plane(40, 40, rng);
    red(12, 12) = -1.0f;
    const auto ortho = make_raster({{"red", red, -1.0f}, {"nir", nir, -1.0f}});
    CrownCollection crowns{"EPSG:32632", {}};
    crowns.crowns.push_back({"a", rect_ring(10.0, 80.0, 20.0, 90.0), std::string("picea")});
    crowns.crowns.push_back({"tiny", rect_ring(30.0, 70.0, 31.0, 71.0)});
    crowns.crowns.push_back({"outside", rect_ring(100.0, 0.0, 110.0, 10.0)});
    const auto ex = extract_chips(ortho, crowns, 4, "ortho.tif");
    REQUIRE(ex.chips.size() == 1);
    CHECK(ex.skipped.size() == 2);
    const auto& chip = ex.chips[0];
    // Polygon pixel bounding box: cols 10..19, rows 10..19.
    CHECK(chip.patch.width() == 10);
    CHECK(chip.patch.height() == 10);
    CHECK(chip.valid_pixels == 99);
    CHECK_FALSE(chip.mask(2, 2));
    CHECK(chip.patch.bands()[1].values(0, 0) == nir(10, 10));
    CHECK(chip.species == std::optional<std::string>("picea"));
    CHECK(chip.patch.transform().pixel_center(0, 0).isApprox(ortho.transform().pixel_center(10, 10)));

    SUBCASE("CRS mismatch") {
        CrownCollection other = crowns;
        other.crs = "EPSG:4326";
        CHECK_THROWS_AS(extract_chips(ortho, other), ValidationError);
    }
    SUBCASE("manifest round trip") {
        TempDir dir;
        write_chips(ex.chips, dir / "chips", dir / "chips.csv");
        const auto back = read_chips(dir / "chips.csv");
        REQUIRE(back.size() == 1);
        CHECK(back[0].crown_id == "a");
        CHECK(back[0].valid_pixels == 99);
        CHECK(back[0].species == chip.species);
        CHECK((back[0].mask == chip.mask).all());
    }
}
