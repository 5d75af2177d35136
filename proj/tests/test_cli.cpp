#include "support.hpp"

#include "canopy/app.hpp"
#include "canopy/raster_io.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <csignal>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

using namespace canopy;
using namespace canopy::testing;

namespace {

int run(const std::string& args, const TempDir& dir) {
    const std::string cmd = std::string(CANOPY_BIN) + " " + args + " >>" + (dir / "log.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

int free_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

MultibandRaster ortho(std::mt19937_64& rng) {
    std::vector<Band> bands;
    for (const char* n : {"blue", "green", "red", "rededge", "nir"}) bands.push_back({n, random_plane(60, 60, rng, 0.05f, 0.9f), std::nullopt});
    return make_raster(bands);
}

}  // namespace

TEST_CASE("cli exit codes") {
    TempDir dir;
    CHECK(run("--help", dir) == 0);
    CHECK(run("", dir) == 1);
    CHECK(run("bogus", dir) == 1);
    CHECK(run("indices --in " + (dir / "missing.tif").string() + " --index ndvi --out " + (dir / "o.tif").string(), dir) == 2);
    std::mt19937_64 rng(101);
    save_raster(ortho(rng), dir / "ortho.tif");
    CHECK(run("indices --in " + (dir / "ortho.tif").string() + " --index evi --out " + (dir / "o.tif").string(), dir) == 1);
    CHECK(run("ingest cadastre --store " + (dir / "s").string() + " --file " + (dir / "none.csv").string(), dir) == 2);
    write_text(dir / "bad.csv", "tree_id,x\nA,1\n");
    CHECK(run("ingest cadastre --store " + (dir / "s").string() + " --file " + (dir / "bad.csv").string(), dir) == 1);
}

TEST_CASE("cli pipeline from rasters to a served inventory") {
    TempDir dir;
    std::mt19937_64 rng(102);
    save_raster(ortho(rng), dir / "ortho.tif");
    const BlobChm chm = blob_chm(60, 60, rng);
    save_raster(chm.chm, dir / "chm.tif");
    const auto p = [&](const char* name) { return (dir / name).string(); };

    REQUIRE(run("itcd --chm " + p("chm.tif") + " --min-height 2 --out " + p("crowns.geojson") + " --treetops " + p("tops.csv"), dir) == 0);
    REQUIRE(run("indices --in " + p("ortho.tif") + " --index ndvi --out " + p("ndvi.tif") + " --crowns " + p("crowns.geojson") +
                    " --stats " + p("stats.csv"),
                dir) == 0);
    CHECK(load_raster(dir / "ndvi.tif").band_count() == 1);
    REQUIRE(run("chips --ortho " + p("ortho.tif") + " --crowns " + p("crowns.geojson") + " --out " + p("chips") + " --manifest " +
                    p("manifest.csv"),
                dir) == 0);
    CHECK(std::filesystem::exists(dir / "manifest.csv"));

    write_text(dir / "c1.csv", "tree_id,x,y,species,vitality\nA,10,90,Picea abies,1\nB,30,70,Fagus sylvatica,2\n");
    write_text(dir / "c2.csv", "tree_id,x,y,species,vitality\nA,10,90,Picea abies,3\nC,40,60,Abies alba,\n");
    REQUIRE(run("ingest cadastre --store " + p("store") + " --file " + p("c1.csv") + " --captured-at 2023-01-01 --crs EPSG:32632", dir) == 0);
    REQUIRE(run("ingest cadastre --store " + p("store") + " --file " + p("c2.csv") + " --captured-at 2023-06-01 --crs EPSG:32632", dir) == 0);
    REQUIRE(run("diff --store " + p("store") + " --from 1 --to 2 --out " + p("diff.json"), dir) == 0);
    const auto diff = nlohmann::json::parse(read_text(dir / "diff.json"));
    CHECK(diff["added"].size() == 1);
    CHECK(diff["removed"].size() == 1);
    CHECK(diff["modified"].size() == 1);
    CHECK(run("diff --store " + p("store") + " --from 1 --to 7 --out " + p("d.json"), dir) == 1);
    REQUIRE(run("join --store " + p("store") + " --crowns " + p("crowns.geojson") + " --max-dist 5 --out " + p("join.csv"), dir) == 0);

    Plane nd = Plane::Constant(40, 40, 0.4f);
    save_raster(make_raster({{"ndvi", nd, std::nullopt}}, "EPSG:3857", {1211100.0, 6418100.0, 1.0, -1.0}), dir / "web.tif");
    write_text(dir / "serve.toml", "store = \"store\"\ncrs = \"EPSG:32632\"\n[[layers]]\nname = \"ndvi\"\nkind = \"ndvi\"\npath = \"web.tif\"\n");

    const int port = free_port();
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        const std::string cfg = p("serve.toml"), port_s = std::to_string(port), log = p("serve.log");
        if (!std::freopen(log.c_str(), "w", stderr)) ::_exit(126);
        ::execl(CANOPY_BIN, CANOPY_BIN, "serve", "--config", cfg.c_str(), "--port", port_s.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    httplib::Client cli("127.0.0.1", port);
    httplib::Result res;
    for (int attempt = 0; attempt < 100 && !res; ++attempt) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        res = cli.Get("/api/trees");
    }
    const App local = App::from_config(read_app_config(dir / "serve.toml"));
    if (res) {
        CHECK(res->status == 200);
        CHECK(res->body == local.handle_get("/api/trees", {}).body);
        auto tile = cli.Get("/tiles/ndvi/18/137612/89476.png");
        REQUIRE(tile);
        CHECK(tile->status == 200);
        CHECK(tile->body == local.handle_get("/tiles/ndvi/18/137612/89476.png", {}).body);
        auto bad = cli.Get("/api/trees?limit=99999");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        auto missing = cli.Get("/api/trees/ZZZ");
        REQUIRE(missing);
        CHECK(missing->status == 404);
    }
    ::kill(pid, SIGTERM);
    ::waitpid(pid, nullptr, 0);
    REQUIRE(res);
}
