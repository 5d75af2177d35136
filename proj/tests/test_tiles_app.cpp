#include "support.hpp"

#include "canopy/app.hpp"
#include "canopy/error.hpp"
#include "canopy/tiles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace canopy;
using namespace canopy::testing;
using nlohmann::json;

namespace {

constexpr double kOriginX = 1211100.0;  // near 10.88 E
constexpr double kOriginY = 6418100.0;  // near 49.89 N

double lon_of(long long x, int z) { return static_cast<double>(x) / std::ldexp(1.0, z) * 360.0 - 180.0; }
double lat_of(long long y, int z) {
    return std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * static_cast<double>(y) / std::ldexp(1.0, z)))) * 180.0 /
           std::numbers::pi;
}

float gradient(Index r, Index c) { return static_cast<float>(-0.9 + 1.8 * static_cast<double>(r * 200 + c) / 40000.0); }

Layer ndvi_layer(bool constant = false) {
    Plane p(200, 200);
    for (Index r = 0; r < 200; ++r)
        for (Index c = 0; c < 200; ++c) p(r, c) = constant ? 0.3f : gradient(r, c);
    return {"ndvi", LayerKind::ndvi,
            make_raster({{"ndvi", p, std::nullopt}}, "EPSG:3857", {kOriginX, kOriginY, 1.0, -1.0})};
}

Layer rgb_layer() {
    std::mt19937_64 rng(91);
    std::vector<Band> bands;
    for (const char* n : {"red", "green", "blue"}) bands.push_back({n, random_plane(64, 64, rng), std::nullopt});
    return {"ortho", LayerKind::rgb, make_raster(bands, "EPSG:3857", {kOriginX, kOriginY, 2.0, -2.0})};
}

std::pair<long long, long long> tile_of(double mx, double my, int z) {
    const double n = std::ldexp(1.0, z);
    return {static_cast<long long>(std::floor((mx + kMercatorHalfExtent) / (2 * kMercatorHalfExtent) * n)),
            static_cast<long long>(std::floor((kMercatorHalfExtent - my) / (2 * kMercatorHalfExtent) * n))};
}

}  // namespace

TEST_CASE("tile bounds follow the lon/lat tiling formula") {
    for (int z : {0, 1, 5, 12, 18}) {
        const long long n = 1LL << z;
        for (long long x : {0LL, n / 3, n - 1})
            for (long long y : {0LL, n / 2, n - 1}) {
                const auto b = tile_bounds(z, x, y);
                const auto nw = mercator_to_lonlat(b.min_x, b.max_y);
                const auto se = mercator_to_lonlat(b.max_x, b.min_y);
                CHECK(nw.x() == doctest::Approx(lon_of(x, z)).epsilon(1e-9));
                CHECK(se.x() == doctest::Approx(lon_of(x + 1, z)).epsilon(1e-9));
                CHECK(nw.y() == doctest::Approx(lat_of(y, z)).epsilon(1e-9));
                CHECK(se.y() == doctest::Approx(lat_of(y + 1, z)).epsilon(1e-9));
            }
    }
    const auto m = lonlat_to_mercator(10.88, 49.89);
    const auto back = mercator_to_lonlat(m.x(), m.y());
    CHECK(back.x() == doctest::Approx(10.88).epsilon(1e-12));
    CHECK(back.y() == doctest::Approx(49.89).epsilon(1e-12));
    CHECK(m.x() == doctest::Approx(kEarthRadius * 10.88 * std::numbers::pi / 180.0));
    CHECK_THROWS_AS(validate(TileAddress{"l", 23, 0, 0}), ValidationError);
    CHECK_THROWS_AS(validate(TileAddress{"l", 2, 4, 0}), ValidationError);
    CHECK_THROWS_AS(validate(TileAddress{"l", 2, 0, -1}), ValidationError);
    CHECK_NOTHROW(validate(TileAddress{"l", 2, 3, 3}));
}

TEST_CASE("colormap hits its stops and clamps") {
    for (const auto& s : index_colormap()) CHECK(index_color(s.value) == s.rgb);
    CHECK(index_color(-7) == index_colormap().front().rgb);
    CHECK(index_color(7) == index_colormap().back().rgb);
    const auto mid = index_color(0.25);
    CHECK(mid[1] == std::lround((255 + 189) / 2.0));
}

TEST_CASE("PNG round trip") {
    std::mt19937_64 rng(92);
    std::vector<std::uint8_t> rgba(17 * 9 * 4);
    for (auto& v : rgba) v = static_cast<std::uint8_t>(rng());
    const std::string png = encode_png(rgba, 17, 9);
    CHECK(png.substr(1, 3) == "PNG");
    int w = 0, h = 0;
    CHECK(decode_png(png, w, h) == rgba);
    CHECK(w == 17);
    CHECK(h == 9);
    CHECK_THROWS(decode_png("not a png", w, h));
}

TEST_CASE("high zoom tiles sample the pixel under each centre") {
    const Layer layer = ndvi_layer();
    const int z = 20;
    const auto [tx, ty] = tile_of(kOriginX + 100, kOriginY - 100, z);
    const auto rgba = render_tile_rgba(layer, z, tx, ty);
    REQUIRE(rgba.size() == 256u * 256u * 4u);
    const auto b = tile_bounds(z, tx, ty);
    const double step = (b.max_x - b.min_x) / kTileSize;
    std::size_t checked = 0;
    for (int i = 0; i < kTileSize; ++i)
        for (int j = 0; j < kTileSize; ++j) {
            const double mx = b.min_x + (j + 0.5) * step, my = b.max_y - (i + 0.5) * step;
            const auto c = static_cast<Index>(std::floor(mx - kOriginX));
            const auto r = static_cast<Index>(std::floor(kOriginY - my));
            const std::uint8_t* px = &rgba[static_cast<std::size_t>(i * kTileSize + j) * 4];
            if (r < 0 || r >= 200 || c < 0 || c >= 200) {
                CHECK(px[3] == 0);
                continue;
            }
            const auto want = index_color(gradient(r, c));
            CHECK(px[0] == want[0]);
            CHECK(px[1] == want[1]);
            CHECK(px[2] == want[2]);
            CHECK(px[3] == 255);
            ++checked;
        }
    CHECK(checked > 1000);
}

TEST_CASE("a constant layer renders one colour at every zoom") {
    const Layer layer = ndvi_layer(true);
    const auto want = index_color(0.3);
    for (int z = 12; z <= 21; ++z) {
        const auto [tx, ty] = tile_of(kOriginX + 100, kOriginY - 100, z);
        const auto rgba = render_tile_rgba(layer, z, tx, ty);
        const auto b = tile_bounds(z, tx, ty);
        const double ix0 = std::max(b.min_x, kOriginX), ix1 = std::min(b.max_x, kOriginX + 200);
        const double iy0 = std::max(b.min_y, kOriginY - 200), iy1 = std::min(b.max_y, kOriginY);
        const double overlap = (ix1 - ix0) * (iy1 - iy0) / ((b.max_x - b.min_x) * (b.max_y - b.min_y));
        std::size_t opaque = 0;
        for (std::size_t k = 0; k < rgba.size(); k += 4) {
            if (rgba[k + 3] == 0) continue;
            ++opaque;
            CHECK(rgba[k] == want[0]);
            CHECK(rgba[k + 1] == want[1]);
            CHECK(rgba[k + 2] == want[2]);
        }
        const double frac = static_cast<double>(opaque) / (256.0 * 256.0);
        CHECK(std::abs(frac - overlap) < 0.02 + 4.0 / 256.0);
    }
}

TEST_CASE("layers in EPSG:4326 and validation") {
    Plane p = Plane::Constant(10, 10, -0.5f);
    const Layer geo{"g", LayerKind::ndre, make_raster({{"x", p, std::nullopt}}, "EPSG:4326", {10.0, 50.0, 0.001, -0.001})};
    CHECK_NOTHROW(validate(geo));
    const auto b = layer_bounds(geo);
    CHECK(b.min_x == doctest::Approx(lonlat_to_mercator(10.0, 50.0).x()));
    CHECK(b.max_y == doctest::Approx(lonlat_to_mercator(10.0, 50.0).y()));
    const auto [tx, ty] = tile_of((b.min_x + b.max_x) / 2, (b.min_y + b.max_y) / 2, 18);
    const auto rgba = render_tile_rgba(geo, 18, tx, ty);
    CHECK(std::any_of(rgba.begin(), rgba.end(), [](std::uint8_t v) { return v == 255; }));

    Layer bad = geo;
    bad.raster = make_raster({{"x", p, std::nullopt}}, "EPSG:32632");
    CHECK_THROWS_AS(validate(bad), ValidationError);
    bad = geo;
    bad.kind = LayerKind::rgb;
    CHECK_THROWS_AS(validate(bad), ValidationError);
    CHECK_THROWS_AS(parse_layer_kind("lidar"), ValidationError);
}

namespace {

struct AppFixture {
    TempDir dir;
    std::shared_ptr<FileStore> store = std::make_shared<FileStore>(dir.path() / "store");
    std::vector<TreeRecord> records;

    AppFixture() {
        std::mt19937_64 rng(93);
        records = random_records(60, rng);
        store->commit_snapshot(ts("2023-01-01"), records);
        auto second = records;
        second[0].vitality = 4;
        second.erase(second.begin() + 1);
        store->commit_snapshot(ts("2023-06-01"), second);
        store->append_annotations({{records[0].tree_id, AnnotationKind::ndvi_stats,
                                    {{"count", 3}, {"mean", 0.5}, {"median", 0.5}, {"std", 0.0}, {"min", 0.5}, {"max", 0.5}, {"p10", 0.5}, {"p90", 0.5}},
                                    ts("2023-06-02"), "idx"}});
        store->add_readings({{"S1", ts("2023-06-01T10:00:00Z"), Depth::d1, 20.0}, {"S1", ts("2023-06-01T11:00:00Z"), Depth::d2, 22.0}});
    }

    App app() const { return App(store, {ndvi_layer(), rgb_layer()}, "EPSG:32632"); }
};

json body(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("app routes and status codes") {
    AppFixture f;
    const App app = f.app();
    const std::string id0 = f.records[0].tree_id, id1 = f.records[1].tree_id;

    auto r = app.handle_get("/api/trees", {});
    REQUIRE(r.status == 200);
    CHECK(body(r)["total_count"] == 59);
    CHECK(body(r)["snapshot_id"] == 2);

    r = app.handle_get("/api/trees/" + id0, {});
    REQUIRE(r.status == 200);
    CHECK(body(r)["properties"]["vitality"] == 4);
    CHECK(body(r)["annotation_log"].size() == 1);
    CHECK(app.handle_get("/api/trees/" + id1, {}).status == 404);
    CHECK(app.handle_get("/api/trees/" + id1, {{"snapshot", "1"}}).status == 200);
    CHECK(app.handle_get("/api/trees/" + id0, {{"snapshot", "9"}}).status == 404);

    r = app.handle_get("/api/trees/" + id1 + "/history", {});
    REQUIRE(r.status == 200);
    CHECK(body(r)["history"].back()["change"] == "removed");

    r = app.handle_get("/api/stats/histogram", {{"field", "vitality"}});
    REQUIRE(r.status == 200);
    std::size_t sum = 0;
    const json hist = body(r);
    for (const auto& b : hist["buckets"]) sum += b["count"].get<std::size_t>();
    CHECK(sum == 59);
    CHECK(app.handle_get("/api/stats/histogram", {}).status == 400);
    CHECK(app.handle_get("/api/stats/histogram", {{"field", "ndvi_mean"}, {"bins", "x"}}).status == 400);

    r = app.handle_get("/api/sensors/S1/series", {{"depth", "d2"}});
    REQUIRE(r.status == 200);
    CHECK(body(r)["readings"].size() == 1);
    CHECK(app.handle_get("/api/sensors/S1/series", {{"from", "2023-07-01"}, {"to", "2023-06-01"}}).status == 400);

    r = app.handle_get("/api/layers", {});
    REQUIRE(r.status == 200);
    const auto layers = body(r)["layers"];
    REQUIRE(layers.size() == 2);
    CHECK(layers[0]["kind"] == "ndvi");
    CHECK(layers[0].contains("legend"));
    CHECK_FALSE(layers[1].contains("legend"));
    CHECK(layers[0]["bounds_3857"][0].get<double>() == doctest::Approx(kOriginX));

    const auto [tx, ty] = tile_of(kOriginX + 100, kOriginY - 100, 17);
    const std::string tile = "/tiles/ndvi/17/" + std::to_string(tx) + "/" + std::to_string(ty) + ".png";
    r = app.handle_get(tile, {});
    REQUIRE(r.status == 200);
    CHECK(r.content_type == "image/png");
    CHECK(r.body == render_tile(ndvi_layer(), {"ndvi", 17, tx, ty}));
    CHECK(app.handle_get("/tiles/ndvi/23/0/0.png", {}).status == 400);
    CHECK(app.handle_get("/tiles/ndvi/2/4/0.png", {}).status == 400);
    CHECK(app.handle_get("/tiles/ndvi/a/0/0.png", {}).status == 400);
    CHECK(app.handle_get("/tiles/nope/2/0/0.png", {}).status == 404);
    CHECK(app.handle_get("/tiles/ndvi/2/0/0.jpg", {}).status == 404);
    CHECK(app.handle_get("/api/nothing", {}).status == 404);

    r = app.handle_get("/api/trees", {{"vitality_min", "3"}, {"vitality_max", "1"}});
    CHECK(r.status == 400);
    CHECK(body(r)["field"].get<std::string>().rfind("vitality", 0) == 0);
    CHECK(app.handle_get("/api/trees", {{"limit", "10001"}}).status == 400);
    CHECK(app.handle_get("/api/trees", {{"shape", "x"}}).status == 400);
}

TEST_CASE("app responses are deterministic and pages concatenate") {
    AppFixture f;
    const App a = f.app(), b = f.app();
    const QueryParams q{{"species", "Picea abies,Fagus sylvatica"}};
    CHECK(a.handle_get("/api/trees", q).body == b.handle_get("/api/trees", q).body);
    const auto [tx, ty] = tile_of(kOriginX + 50, kOriginY - 150, 19);
    const std::string tile = "/tiles/ortho/19/" + std::to_string(tx) + "/" + std::to_string(ty) + ".png";
    const auto t1 = a.handle_get(tile, {}), t2 = b.handle_get(tile, {});
    REQUIRE(t1.status == 200);
    CHECK(t1.body == t2.body);

    const json full = body(a.handle_get("/api/trees", {{"limit", "10000"}}));
    json joined = json::array();
    for (int offset = 0; offset < 59; offset += 8) {
        const json page = body(a.handle_get("/api/trees", {{"limit", "8"}, {"offset", std::to_string(offset)}}));
        for (const auto& feat : page["features"]) joined.push_back(feat);
    }
    CHECK(joined == full["features"]);
}

TEST_CASE("app config parsing") {
    const auto c = parse_app_config(R"(
store = "inv"
crs = "EPSG:32632"
[server]
bind = "0.0.0.0:9000"
[[layers]]
name = "ndvi"
kind = "ndvi"
path = "rasters/ndvi.tif"
)",
                                    "/data");
    CHECK(c.store == std::filesystem::path("/data/inv"));
    CHECK(c.host == "0.0.0.0");
    CHECK(c.port == 9000);
    REQUIRE(c.layers.size() == 1);
    CHECK(c.layers[0].kind == LayerKind::ndvi);
    CHECK(c.layers[0].path == std::filesystem::path("/data/rasters/ndvi.tif"));
    CHECK_THROWS_AS(parse_app_config("crs = 1"), ValidationError);
    CHECK_THROWS_AS(parse_app_config("store = \"s\"\n[server]\nport = 70000\n"), ValidationError);
    CHECK_THROWS_AS(parse_app_config("store = \"s\"\n[[layers]]\nname = \"a\"\nkind = \"thermal\"\npath = \"p\"\n"),
                    ValidationError);
    CHECK_THROWS_AS(parse_app_config("store = "), ValidationError);
}
