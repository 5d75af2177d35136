#include "support.hpp"

#include "canopy/error.hpp"
#include "canopy/inventory.hpp"

#include <doctest.h>

#include <thread>

using namespace canopy;
using namespace canopy::testing;

TEST_CASE("timestamps") {
    CHECK(format_timestamp(ts("2023-06-01")) == "2023-06-01T00:00:00Z");
    CHECK(format_timestamp(ts("2023-06-01T12:30")) == "2023-06-01T12:30:00Z");
    CHECK(format_timestamp(ts("2023-06-01T12:30:05.250+02:00")) == "2023-06-01T10:30:05.250Z");
    CHECK(format_timestamp(ts("2023-06-01 23:59:59-01:00")) == "2023-06-02T00:59:59Z");
    CHECK_THROWS_AS(ts("2023-02-30"), ValidationError);
    CHECK_THROWS_AS(ts("2023-06-01T25:00"), ValidationError);
    CHECK_THROWS_AS(ts("yesterday"), ValidationError);
    CHECK(parse_date("2024-02-29") == "2024-02-29");
    CHECK_THROWS_AS(parse_date("2023-02-29"), ValidationError);
}

TEST_CASE("snapshot ids") {
    CHECK(parse_snapshot_id("S12") == 12);
    CHECK(parse_snapshot_id("3") == 3);
    CHECK_THROWS_AS(parse_snapshot_id("S"), ValidationError);
    CHECK_THROWS_AS(parse_snapshot_id("x1"), ValidationError);
    CHECK_THROWS_AS(parse_snapshot_id("-1"), ValidationError);
}

TEST_CASE("tree record JSON round trip") {
    std::mt19937_64 rng(71);
    for (const auto& r : random_records(50, rng)) {
        const auto j = to_json(r);
        CHECK(tree_from_json(nlohmann::json::parse(j.dump())) == r);
    }
    CHECK_THROWS_AS(tree_from_json(nlohmann::json{{"tree_id", "a"}, {"x", 1}, {"y", 2}, {"colour", "red"}}),
                    ValidationError);
}

TEST_CASE("cadastre CSV") {
    TempDir dir;
    write_text(dir / "c.csv",
               "tree_id,x,y,species,height_est,vitality,last_inspected\n"
               "B2,10.5,20,Fagus sylvatica,18.2,1,2023-04-01\n"
               "A1,11,21,,,,\n");
    const auto recs = read_cadastre(dir / "c.csv", {"EPSG:25832", {}});
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].tree_id == "A1");
    CHECK(recs[0].species == "unknown");
    CHECK_FALSE(recs[0].vitality.has_value());
    CHECK(recs[0].crs == "EPSG:25832");
    CHECK(recs[1].height_est == 18.2);
    CHECK(recs[1].vitality == 1);
    CHECK(recs[1].last_inspected == std::optional<std::string>("2023-04-01"));

    write_text(dir / "dup.csv", "tree_id,x,y\nA,1,1\nB,2,2\nA,3,3\n");
    try {
        read_cadastre(dir / "dup.csv");
        FAIL("expected throw");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("A") != std::string::npos);
    }
    write_text(dir / "nox.csv", "tree_id,y\nA,1\n");
    CHECK_THROWS_AS(read_cadastre(dir / "nox.csv"), ValidationError);
    write_text(dir / "vit.csv", "tree_id,x,y,vitality\nA,1,1,9\n");
    CHECK_THROWS_AS(read_cadastre(dir / "vit.csv"), ValidationError);
    CHECK_THROWS_AS(read_cadastre(dir / "missing.csv"), IoError);
}

TEST_CASE("cadastre GeoJSON") {
    TempDir dir;
    write_text(dir / "c.geojson", R"({"type":"FeatureCollection","crs":{"type":"name","properties":{"name":"EPSG:25832"}},
      "features":[{"type":"Feature","geometry":{"type":"Point","coordinates":[5.0,6.0]},
                   "properties":{"tree_id":"T9","species":"Abies alba","vitality":2}}]})");
    const auto recs = read_cadastre(dir / "c.geojson");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].x == 5.0);
    CHECK(recs[0].crs == "EPSG:25832");
    CHECK(recs[0].vitality == 2);
}

TEST_CASE("file store snapshots") {
    TempDir dir;
    std::mt19937_64 rng(72);
    const auto a = random_records(30, rng);
    const auto b = mutate_records(a, rng);
    {
        FileStore store(dir / "store");
        CHECK_FALSE(store.latest_snapshot().has_value());
        const auto s1 = store.commit_snapshot(ts("2023-05-01"), a);
        CHECK(s1.snapshot_id == 1);
        const auto before = read_text(dir / "store" / "snapshots" / "1.json");
        const auto s2 = store.commit_snapshot(ts("2023-09-01"), b);
        CHECK(s2.snapshot_id == 2);
        CHECK_THROWS_AS(store.commit_snapshot(ts("2023-08-01"), a), ValidationError);
        CHECK(read_text(dir / "store" / "snapshots" / "1.json") == before);
        CHECK_THROWS_AS(store.snapshot(7), NotFoundError);
    }
    FileStore reopened(dir / "store");
    CHECK(reopened.latest_snapshot() == 2);
    const auto infos = reopened.snapshots();
    REQUIRE(infos.size() == 2);
    CHECK(infos[0].captured_at < infos[1].captured_at);
    CHECK(canonical_json(reopened.snapshot(1)->records) == canonical_json(a));
    CHECK(canonical_json(*reopened.snapshot(2)) == canonical_json(*reopened.snapshot(2)));

    std::vector<TreeRecord> dup = a;
    dup.push_back(a.front());
    CHECK_THROWS_AS(reopened.commit_snapshot(ts("2024-01-01"), dup), ValidationError);
}

TEST_CASE("concurrent readers see complete snapshots") {
    TempDir dir;
    std::mt19937_64 rng(73);
    FileStore store(dir.path());
    store.commit_snapshot(ts("2023-01-01"), random_records(200, rng));
    std::atomic<bool> ok{true};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&] {
            for (int i = 0; i < 30; ++i) {
                const auto latest = store.latest_snapshot();
                if (!latest || store.snapshot(*latest)->records.empty()) ok = false;
            }
        });
    for (int i = 0; i < 5; ++i) store.commit_snapshot(ts("2023-02-0" + std::to_string(i + 1)), random_records(200, rng));
    for (auto& t : readers) t.join();
    CHECK(ok);
    CHECK(store.snapshots().size() == 6);
}

TEST_CASE("annotations") {
    TempDir dir;
    FileStore store(dir.path());
    TreeAnnotation a{"T1", AnnotationKind::vitality_prediction, {{"vitality", 2}}, ts("2023-06-01"), "model-a"};
    CHECK_NOTHROW(validate(a));
    store.append_annotations({a});
    TreeAnnotation bad = a;
    bad.payload = {{"vitality", 2}, {"extra", true}};
    CHECK_THROWS_AS(store.append_annotations({bad}), ValidationError);
    bad.payload = {{"vitality", 9}};
    CHECK_THROWS_AS(validate(bad), ValidationError);
    TreeAnnotation stats{"T1", AnnotationKind::ndvi_stats,
                         {{"count", 10}, {"mean", 0.5}, {"median", 0.5}, {"std", 0.1}, {"min", 0.2}, {"max", 0.8}, {"p10", 0.3}, {"p90", 0.7}},
                         ts("2023-06-02"), "indices"};
    store.append_annotations({stats});
    stats.payload.erase("p90");
    CHECK_THROWS_AS(validate(stats), ValidationError);

    const auto all = FileStore(dir.path()).annotations();
    REQUIRE(all.size() == 2);
    CHECK(all[0].payload == a.payload);
    CHECK(all[1].kind == AnnotationKind::ndvi_stats);
    CHECK(all[1].produced_at == ts("2023-06-02"));
    const auto j = to_json(all[1]);
    CHECK(annotation_from_json(nlohmann::json::parse(j.dump())).payload == all[1].payload);
}

TEST_CASE("sensor readings") {
    TempDir dir;
    write_text(dir / "s.csv",
               "sensor_id,timestamp,depth,vwc\n"
               "S1,2023-06-01T10:00:00Z,d1,23.5\n"
               "S1,2023-06-01T10:00:00Z,d2,25\n"
               "S1,2023-06-02T10:00:00Z,d1,21\n"
               "S2,2023-06-01T10:00:00Z,d1,30\n");
    FileStore store(dir / "store");
    auto n = ingest_sensor_series(store, dir / "s.csv");
    CHECK(n.ingested == 4);
    CHECK(n.rejected == 0);
    n = ingest_sensor_series(store, dir / "s.csv");
    CHECK(n.ingested == 0);
    CHECK(n.rejected == 4);

    SeriesQuery q{"S1", ts("2023-06-01T10:00:00Z"), ts("2023-06-01T23:00"), std::nullopt};
    auto s = FileStore(dir / "store").series(q);
    REQUIRE(s.size() == 2);
    CHECK(s[0].depth == Depth::d1);
    CHECK(s[1].vwc == 25);
    q = {"S1", std::nullopt, std::nullopt, Depth::d1};
    s = store.series(q);
    REQUIRE(s.size() == 2);
    CHECK(s[0].timestamp < s[1].timestamp);

    write_text(dir / "bad.csv", "sensor_id,timestamp,depth,vwc\nS1,2023-06-01,d1,120\n");
    try {
        read_sensor_csv(dir / "bad.csv");
        FAIL("expected throw");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
    write_text(dir / "bad2.csv", "sensor_id,timestamp,depth,vwc\nS1,2023-06-01,d7,12\n");
    CHECK_THROWS_AS(read_sensor_csv(dir / "bad2.csv"), ValidationError);
}

TEST_CASE("diff round trip on random pairs") {
    std::mt19937_64 rng(74);
    for (int trial = 0; trial < 25; ++trial) {
        const auto a = random_records(40 + trial, rng);
        const auto b = mutate_records(a, rng);
        const auto d = diff_records(a, b);
        CHECK(canonical_json(apply_diff(a, d)) == canonical_json(b));
        const auto back = changeset_from_json(nlohmann::json::parse(to_json(d).dump()));
        CHECK(canonical_json(apply_diff(a, back)) == canonical_json(b));
        CHECK(to_json(back).dump() == to_json(d).dump());
        CHECK(diff_records(a, a).empty());
        CHECK(diff_records(b, b).empty());
    }
}

TEST_CASE("diff details") {
    TreeRecord t{"T1", 1.0, 2.0, "EPSG:1", "Picea abies"};
    TreeRecord u = t;
    u.vitality = 3;
    TreeRecord gone{"T2", 5.0, 5.0};
    TreeRecord renamed = gone;
    renamed.tree_id = "T3";
    const auto d = diff_records({t, gone}, {u, renamed});
    REQUIRE(d.modified.size() == 1);
    REQUIRE(d.modified[0].changes.size() == 1);
    CHECK(d.modified[0].changes[0].field == "vitality");
    CHECK(d.modified[0].changes[0].old_value.is_null());
    CHECK(d.modified[0].changes[0].new_value == 3);
    REQUIRE(d.possible_id_churn.size() == 1);
    CHECK(d.possible_id_churn[0] == std::pair<std::string, std::string>{"T2", "T3"});
    // Strict application.
    CHECK_THROWS_AS(apply_diff({u}, d), ValidationError);
}

TEST_CASE("snapshot diff and history through the store") {
    TempDir dir;
    FileStore store(dir.path());
    TreeRecord t{"T1", 1.0, 2.0};
    store.commit_snapshot(ts("2023-01-01"), {t});
    t.vitality = 1;
    store.commit_snapshot(ts("2023-06-01"), {t, TreeRecord{"T2", 4.0, 4.0}});
    store.commit_snapshot(ts("2023-12-01"), {TreeRecord{"T2", 4.0, 4.0}});
    const auto d = snapshot_diff(store, 1, 3);
    CHECK(d.from == 1);
    CHECK(d.to == 3);
    CHECK(d.removed.size() == 1);
    CHECK(d.added.size() == 1);
    CHECK_THROWS_AS(snapshot_diff(store, 3, 1), ValidationError);
    CHECK_THROWS_AS(snapshot_diff(store, 1, 9), NotFoundError);

    const auto h = tree_history(store, "T1");
    REQUIRE(h.size() == 2);
    CHECK(h[0].change == "modified");
    CHECK(h[0].fields.at(0).field == "vitality");
    CHECK(h[1].change == "removed");
    CHECK(tree_history(store, "T2").front().change == "added");
    CHECK_THROWS_AS(tree_history(store, "nope"), NotFoundError);
}

TEST_CASE("joining crowns to trees") {
    std::vector<TreeRecord> trees{{"A", 0.0, 0.0}, {"B", 10.0, 0.0}, {"C", 50.0, 50.0}};
    CrownCollection crowns{"", {}};
    crowns.crowns.push_back({"c1", rect_ring(-1, -1, 1, 1)});        // centroid (0,0)
    crowns.crowns.push_back({"c2", rect_ring(8, -1, 10, 1)});        // (9,0)
    crowns.crowns.push_back({"c3", rect_ring(1, 1, 3, 3)});          // (2,2), loses to c1
    crowns.crowns.push_back({"c4", rect_ring(100, 100, 102, 102)});  // too far
    const auto j = join_predictions(trees, crowns, 3.0);
    REQUIRE(j.matches.size() == 2);
    CHECK(j.matches[0].tree_id == "A");
    CHECK(j.matches[0].crown_id == "c1");
    CHECK(j.matches[0].distance == 0.0);
    CHECK(j.matches[1].crown_id == "c2");
    CHECK(j.matches[1].distance == doctest::Approx(1.0));
    CHECK(j.unmatched_trees == std::vector<std::string>{"C"});
    CHECK(j.unmatched_crowns == std::vector<std::string>{"c3", "c4"});
    CHECK_THROWS_AS(join_predictions(trees, crowns, -1.0), ValidationError);
}
