#include "support.hpp"

#include "canopy/error.hpp"
#include "canopy/raster_io.hpp"

#include <doctest.h>

using namespace canopy;
using namespace canopy::testing;

TEST_CASE("tiles partition the grid") {
    for (auto [w, h, t, o] : std::vector<std::array<Index, 4>>{{10, 7, 4, 0}, {256, 256, 256, 0}, {33, 65, 16, 3}, {1, 1, 5, 2}}) {
        const auto tiles = tile_windows(w, h, {t, o});
        LabelPlane hits = LabelPlane::Zero(h, w);
        for (const auto& tw : tiles) {
            const auto& in = tw.interior;
            hits.block(in.row0, in.col0, in.rows, in.cols) += 1;
            CHECK(tw.extent.row0 <= in.row0);
            CHECK(tw.extent.col0 <= in.col0);
            CHECK(tw.extent.row0 >= 0);
            CHECK(tw.extent.row0 + tw.extent.rows <= h);
            CHECK(tw.extent.col0 + tw.extent.cols <= w);
            CHECK(in.row0 - tw.extent.row0 <= o);
        }
        CHECK((hits == 1).all());
    }
}

TEST_CASE("reassembling tiles gives the raster back") {
    std::mt19937_64 rng(3);
    const auto r = make_raster({{"a", random_plane(37, 51, rng), std::nullopt}, {"b", random_plane(37, 51, rng), std::nullopt}});
    Plane a = Plane::Zero(37, 51), b = Plane::Zero(37, 51);
    for (const auto& t : iterate_tiles(r, {16, 4})) {
        const Index dr = t.interior.row0 - t.extent.row0, dc = t.interior.col0 - t.extent.col0;
        a.block(t.interior.row0, t.interior.col0, t.interior.rows, t.interior.cols) =
            t.raster.bands()[0].values.block(dr, dc, t.interior.rows, t.interior.cols);
        b.block(t.interior.row0, t.interior.col0, t.interior.rows, t.interior.cols) =
            t.raster.bands()[1].values.block(dr, dc, t.interior.rows, t.interior.cols);
        // World position of a tile pixel matches the parent.
        const auto p = t.raster.transform().pixel_center(0, 0);
        const auto q = r.transform().pixel_center(t.extent.row0, t.extent.col0);
        CHECK(p.isApprox(q));
    }
    CHECK((a == r.bands()[0].values).all());
    CHECK((b == r.bands()[1].values).all());
}

TEST_CASE("bad tile specs are rejected") {
    CHECK_THROWS_AS(validate(TileSpec{0, 0}), ValidationError);
    CHECK_THROWS_AS(validate(TileSpec{8, 8}), ValidationError);
    CHECK_THROWS_AS(validate(TileSpec{8, -1}), ValidationError);
    CHECK(iterate_tiles(MultibandRaster{}, {8, 0}).empty());
}

TEST_CASE("band lookup names the missing band") {
    const auto r = make_raster({{"red", Plane::Zero(2, 2), std::nullopt}});
    try {
        (void)r.band("nir");
        FAIL("expected throw");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("nir") != std::string::npos);
    }
}

TEST_CASE("GeoTIFF round trip") {
    TempDir dir;
    std::mt19937_64 rng(11);
    Plane a = random_plane(20, 30, rng), b = random_plane(20, 30, rng);
    a(3, 4) = -9999.0f;
    auto r = make_raster({{"red", a, -9999.0f}, {"nir", b, -9999.0f}}, "EPSG:32632", {500000.0, 5500000.0, 0.05, -0.05});

    SUBCASE("float32 deflate") {
        save_raster(r, dir / "f.tif");
        const auto back = load_raster(dir / "f.tif");
        CHECK(back.width() == 30);
        CHECK(back.height() == 20);
        CHECK(back.crs() == "EPSG:32632");
        CHECK(back.transform() == r.transform());
        CHECK(back.band_names() == std::vector<std::string>{"red", "nir"});
        CHECK((back.bands()[0].values == a).all());
        CHECK((back.bands()[1].values == b).all());
        CHECK_FALSE(back.bands()[0].is_valid(3, 4));
    }
    SUBCASE("uint8 storage reproduces exactly") {
        Plane q = (a.max(0.0f) * 255.0f).round() / 255.0f;
        q(3, 4) = 0.0f;
        auto u = make_raster({{"red", q, 0.0f}});
        u.set_storage_type(SampleType::uint8);
        save_raster(u, dir / "u.tif", {TiffCompression::none});
        const auto back = load_raster(dir / "u.tif");
        CHECK(back.storage_type() == SampleType::uint8);
        CHECK((back.bands()[0].values == q).all());
        save_raster(back, dir / "u2.tif", {TiffCompression::none});
        CHECK((load_raster(dir / "u2.tif").bands()[0].values == q).all());
    }
    SUBCASE("interchange format") {
        save_raster(r, dir / "r.json");
        const auto back = load_raster(dir / "r.json");
        CHECK(same_geometry(back, r));
        CHECK((back.bands()[1].values == b).all());
    }
}

TEST_CASE("unreadable rasters") {
    TempDir dir;
    CHECK_THROWS_AS(load_raster(dir / "missing.tif"), IoError);
    write_text(dir / "junk.tif", "not a tiff");
    CHECK_THROWS(load_raster(dir / "junk.tif"));
    write_text(dir / "x.png", "png");
    CHECK_THROWS_AS(load_raster(dir / "x.png"), UnsupportedError);
}
