#include "oracles.hpp"
#include "support.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"
#include "canopy/service.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

using namespace canopy;
using namespace canopy::testing;

namespace {

struct Fixture {
    TempDir dir;
    FileStore store{dir.path()};
    std::vector<TreeRecord> records;

    Fixture() {
        std::mt19937_64 rng(81);
        records = random_records(200, rng);
        store.commit_snapshot(ts("2023-01-01"), random_records(50, rng, "OLD"));
        store.commit_snapshot(ts("2023-07-01"), records);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<TreeAnnotation> ann;
        for (std::size_t i = 0; i < records.size(); i += 2) {
            for (int rep = 0; rep < 2; ++rep) {
                const double m = u(rng);
                ann.push_back({records[i].tree_id, AnnotationKind::ndvi_stats,
                               {{"count", 5}, {"mean", m}, {"median", m}, {"std", 0.0}, {"min", m}, {"max", m}, {"p10", m}, {"p90", m}},
                               ts(rep ? "2023-08-01" : "2023-07-15"), "idx"});
            }
        }
        store.append_annotations(ann);
    }
};

}  // namespace

TEST_CASE("query_trees equals a linear scan") {
    Fixture f;
    const auto ndvi = latest_means(f.store.annotations(), AnnotationKind::ndvi_stats);
    std::mt19937_64 rng(82);
    std::uniform_int_distribution<int> coin(0, 2), v(0, 4);
    std::uniform_real_distribution<double> pos(0, 1000), nd(-1, 1);
    const std::vector<std::string> names{"Picea abies", "Fagus sylvatica", "Abies alba", "Pinus sylvestris", "unknown"};
    for (int trial = 0; trial < 200; ++trial) {
        QueryParams p;
        // Built by hand alongside the parameters, then handed to the oracle.
        TreeQuery want_q;
        if (coin(rng) == 0) {
            want_q.species = {names[rng() % 5], names[rng() % 5]};
            std::string joined;
            for (const auto& s : want_q.species) joined += (joined.empty() ? "" : ",") + s;
            p.emplace("species", joined);
        }
        if (coin(rng) == 0) {
            want_q.vitality.min = v(rng);
            p.emplace("vitality_min", std::to_string(*want_q.vitality.min));
        }
        if (coin(rng) == 0) {
            want_q.vitality.max = std::max(want_q.vitality.min.value_or(0), v(rng));
            p.emplace("vitality_max", std::to_string(*want_q.vitality.max));
        }
        if (coin(rng) == 0) {
            double x0 = pos(rng), x1 = pos(rng), y0 = pos(rng), y1 = pos(rng);
            if (x0 > x1) std::swap(x0, x1);
            if (y0 > y1) std::swap(y0, y1);
            const std::string t[] = {format_number(x0), format_number(y0), format_number(x1), format_number(y1)};
            p.emplace("bbox", t[0] + "," + t[1] + "," + t[2] + "," + t[3]);
            want_q.bbox = BBox{parse_number(t[0], ""), parse_number(t[1], ""), parse_number(t[2], ""), parse_number(t[3], "")};
        }
        if (coin(rng) == 0) {
            want_q.ndvi_mean.min = std::round(nd(rng) * 100) / 100;
            want_q.ndvi_mean.max = *want_q.ndvi_mean.min + 0.5;
            p.emplace("ndvi_min", format_number(*want_q.ndvi_mean.min));
            p.emplace("ndvi_max", format_number(*want_q.ndvi_mean.max));
        }
        p.emplace("limit", "10000");
        const TreePage page = query_trees(f.store, parse_tree_query(p));
        std::vector<std::string> got;
        for (const auto& t : page.items) got.push_back(t.record->tree_id);
        const auto want = linear_scan(f.records, ndvi, {}, want_q);
        CHECK(got == want);
        CHECK(page.total_count == want.size());
        CHECK(page.snapshot_id == 2);
    }
}

TEST_CASE("pagination concatenates to the unpaged result") {
    Fixture f;
    TreeQuery all;
    all.limit = kMaxQueryLimit;
    all.vitality.min = 1;
    const auto full = query_trees(f.store, all);
    for (std::size_t limit : {1u, 7u, 50u, 199u}) {
        std::vector<std::string> joined;
        for (std::size_t offset = 0;; offset += limit) {
            TreeQuery q = all;
            q.offset = offset;
            q.limit = limit;
            const auto page = query_trees(f.store, q);
            CHECK(page.total_count == full.total_count);
            for (const auto& t : page.items) joined.push_back(t.record->tree_id);
            if (page.items.size() < limit) break;
        }
        std::vector<std::string> want;
        for (const auto& t : full.items) want.push_back(t.record->tree_id);
        CHECK(joined == want);
    }
}

TEST_CASE("older snapshots are queryable") {
    Fixture f;
    TreeQuery q;
    q.snapshot = 1;
    const auto page = query_trees(f.store, q);
    CHECK(page.total_count == 50);
    CHECK(page.items.front().record->tree_id.rfind("OLD", 0) == 0);
    q.snapshot = 5;
    CHECK_THROWS_AS(query_trees(f.store, q), NotFoundError);
}

TEST_CASE("query parameter validation") {
    auto parse = [](std::initializer_list<std::pair<const std::string, std::string>> kv) {
        return parse_tree_query(QueryParams(kv));
    };
    CHECK(parse({}).limit == 100);
    CHECK(parse({{"species", "a,b"}, {"species", "c"}}).species == std::set<std::string>{"a", "b", "c"});
    CHECK(parse({{"snapshot", "S2"}}).snapshot == 2);
    CHECK_THROWS_AS(parse({{"limit", "10001"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"limit", "-1"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"vitality_min", "3"}, {"vitality_max", "1"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"ndvi_min", "abc"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"bbox", "1,2,3"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"bbox", "5,0,1,1"}}), ValidationError);
    CHECK_THROWS_AS(parse({{"colour", "red"}}), ValidationError);
    try {
        parse({{"ndre_min", "0.5"}, {"ndre_max", "0.1"}});
        FAIL("expected throw");
    } catch (const ValidationError& e) {
        CHECK(e.field().rfind("ndre", 0) == 0);
    }
}

TEST_CASE("histograms recount") {
    Fixture f;
    const auto ndvi = latest_means(f.store.annotations(), AnnotationKind::ndvi_stats);
    for (int bins : {1, 4, 10, 37}) {
        const auto h = stats_histogram(f.store, TreeQuery{}, HistogramField::ndvi_mean, bins);
        CHECK(h.total == f.records.size());
        std::size_t sum = 0;
        for (const auto& b : h.buckets) {
            sum += b.count;
            if (!b.lower) {
                CHECK(b.key == "unknown");
                CHECK(b.count == f.records.size() - ndvi.size());
                continue;
            }
            const bool last = *b.upper == 1.0;
            std::size_t n = 0;
            for (const auto& [id, v] : ndvi) n += v >= *b.lower && (v < *b.upper || (last && v <= *b.upper));
            CHECK(b.count == n);
        }
        CHECK(sum == h.total);
    }
    const auto sp = stats_histogram(f.store, TreeQuery{}, HistogramField::species, 0);
    std::map<std::string, std::size_t> want;
    for (const auto& r : f.records) ++want[r.species];
    for (const auto& b : sp.buckets) CHECK(b.count == want.at(b.key));
    CHECK_THROWS_AS(stats_histogram(f.store, TreeQuery{}, HistogramField::ndvi_mean, 0), ValidationError);
    CHECK_THROWS_AS(parse_histogram_field("height"), ValidationError);
    CHECK(histogram_edges(-1, 1, 4) == std::vector<double>{-1, -0.5, 0, 0.5, 1});
}

TEST_CASE("GeoJSON page shape") {
    Fixture f;
    TreeQuery q;
    q.limit = 3;
    const auto j = to_geojson(query_trees(f.store, q));
    CHECK(j["type"] == "FeatureCollection");
    CHECK(j["total_count"] == 200);
    CHECK(j["limit"] == 3);
    REQUIRE(j["features"].size() == 3);
    const auto& feat = j["features"][0];
    CHECK(feat["geometry"]["type"] == "Point");
    CHECK(feat["properties"]["tree_id"] == feat["id"]);
    CHECK(feat["properties"]["annotations"].contains("ndvi_stats"));
}
