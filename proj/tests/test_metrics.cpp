#include "oracles.hpp"
#include "support.hpp"

#include "canopy/error.hpp"
#include "canopy/metrics.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace canopy;
using namespace canopy::testing;

TEST_CASE("Hungarian assignment equals permutation enumeration") {
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<int> count(0, 30);
    for (int trial = 0; trial < 200; ++trial) {
        const Index rows = 1 + trial % 5, cols = 1 + (trial / 5) % 6;
        Eigen::MatrixXd p(rows, cols);
        for (Index i = 0; i < p.size(); ++i) p.data()[i] = count(rng);
        const auto a = hungarian_max(p);
        REQUIRE(a.size() == static_cast<std::size_t>(rows));
        double total = 0.0;
        std::set<Index> used;
        for (Index r = 0; r < rows; ++r) {
            const Index c = a[static_cast<std::size_t>(r)];
            if (c < 0) continue;
            CHECK(used.insert(c).second);
            total += p(r, c);
        }
        CHECK(total == best_by_enumeration(p));
        CHECK(static_cast<Index>(used.size()) == std::min(rows, cols));
    }
}

TEST_CASE("cluster mapping counts") {
    // Clusters 0,1 map to a,b; cluster 2 is smaller than the remaining class c.
    const std::vector<int> labels{0, 0, 0, 1, 1, 2, -1, 0};
    const std::vector<std::string> truth{"a", "a", "b", "b", "b", "c", "c", "a"};
    const auto m = map_clusters_to_classes(labels, truth);
    CHECK(m.counts.classes == std::vector<std::string>{"a", "b", "c"});
    CHECK(m.cluster_to_class.at(0) == "a");
    CHECK(m.cluster_to_class.at(1) == "b");
    CHECK(m.cluster_to_class.at(2) == "c");
    CHECK(m.counts.counts[0].tp == 3);
    CHECK(m.counts.counts[0].fp == 1);
    CHECK(m.counts.counts[0].fn == 0);
    CHECK(m.counts.counts[1].tp == 2);
    CHECK(m.counts.counts[1].fn == 1);
    CHECK(m.counts.counts[2].tp == 1);
    CHECK(m.counts.counts[2].fn == 1);  // the noise point
    CHECK(m.counts.total_tp() == 6);
}

TEST_CASE("ground truth is conserved under any mapping") {
    std::mt19937_64 rng(52);
    const char* names[] = {"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 40, k = 1 + trial % 7;
        std::vector<int> labels;
        std::vector<std::string> truth;
        for (int i = 0; i < n; ++i) {
            labels.push_back(static_cast<int>(rng() % (k + 1)) - 1);
            truth.push_back(names[rng() % 5]);
        }
        const auto m = map_clusters_to_classes(labels, truth);
        long long support = 0, fp = 0, tp = 0;
        for (const auto& c : m.counts.counts) {
            support += c.tp + c.fn;
            fp += c.fp;
            tp += c.tp;
            CHECK(c.tp >= 0);
            CHECK(c.fp >= 0);
            CHECK(c.fn >= 0);
        }
        CHECK(support == n);
        // Every non-noise item of an assigned cluster is a TP or an FP.
        long long assigned = 0;
        for (int l : labels) assigned += l >= 0 && m.cluster_to_class.count(l);
        CHECK(tp + fp == assigned);
    }
}

TEST_CASE("F1 values") {
    CHECK(f1_score({1534, 264, 123}) == doctest::Approx(2.0 * 1534 / (2.0 * 1534 + 264 + 123)));
    CHECK(f1_score({0, 0, 0}) == 0.0);
    CHECK(f1_score({0, 0, 5}) == 0.0);
    ConfusionCounts c{{"x", "y"}, {{8, 2, 2}, {0, 0, 4}}, {}};
    const auto r = f1_scores(c);
    CHECK(r.f1[0] == doctest::Approx(0.8));
    CHECK(r.f1[1] == 0.0);
    CHECK(r.macro == doctest::Approx(0.4));
    CHECK(r.weighted == doctest::Approx(0.8 * 10.0 / 14.0));
    CHECK(r.micro == doctest::Approx(16.0 / (16.0 + 2.0 + 6.0)));
    std::ostringstream out;
    write_f1_report(out, c, r);
    CHECK(out.str().rfind("class,tp,fp,fn,f1\n", 0) == 0);
    CHECK(out.str().find("macro_f1") != std::string::npos);
}

TEST_CASE("IoU against a pixel-count oracle") {
    std::mt19937_64 rng(53);
    SegmentationMap truth, pred;
    truth.ids.resize(20, 20);
    pred.ids.resize(20, 20);
    for (Index i = 0; i < truth.ids.size(); ++i) {
        truth.ids.data()[i] = static_cast<std::int32_t>(rng() % 4) - 1;
        pred.ids.data()[i] = rng() % 3 ? truth.ids.data()[i] : static_cast<std::int32_t>(rng() % 3);
    }
    truth.classes = pred.classes = {{0, "a"}, {1, "b"}, {2, "c"}};
    const ClassShareTable shares({{"a", 50}, {"b", 30}, {"c", 20}});
    const auto rep = iou_scores(pred, truth, shares);
    double weighted = 0.0;
    for (std::int32_t id = 0; id < 3; ++id) {
        long long inter = 0, uni = 0;
        for (Index i = 0; i < truth.ids.size(); ++i) {
            if (truth.ids.data()[i] == -1 || pred.ids.data()[i] == -1) continue;
            const bool t = truth.ids.data()[i] == id, p = pred.ids.data()[i] == id;
            inter += t && p;
            uni += t || p;
        }
        const double iou = static_cast<double>(inter) / static_cast<double>(uni);
        REQUIRE(rep.classes[static_cast<std::size_t>(id)].iou.has_value());
        CHECK(*rep.classes[static_cast<std::size_t>(id)].iou == doctest::Approx(iou));
        weighted += iou * (id == 0 ? 0.5 : id == 1 ? 0.3 : 0.2);
    }
    CHECK(rep.weighted == doctest::Approx(weighted));
}

TEST_CASE("share table normalization") {
    const ClassShareTable t({{"a", 38.3}, {"b", 61.4}});
    CHECK(t.raw_sum() == doctest::Approx(99.7));
    double sum = 0;
    for (const auto& [n, s] : t.entries()) sum += s;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t.share("a").value() == doctest::Approx(38.3 / 99.7));
    CHECK_FALSE(t.share("z").has_value());
    CHECK_THROWS_AS(ClassShareTable({{"a", -1.0}, {"b", 2.0}}), ValidationError);
    CHECK_THROWS_AS(ClassShareTable({{"a", 0.5}, {"a", 0.5}}), ValidationError);
}

TEST_CASE("minor class merging") {
    const ClassShareTable t({{"big", 0.6}, {"mid", 0.3}, {"s1", 0.06}, {"s2", 0.04}});
    const auto top = merge_minor_classes(t, KeepTop{2});
    CHECK(top.remap.at("s1") == "other");
    CHECK(top.remap.at("mid") == "mid");
    CHECK(top.shares.share("other").value() == doctest::Approx(0.1));
    const auto thr = merge_minor_classes(t, ShareThreshold{0.05});
    CHECK(thr.remap.at("s1") == "s1");
    CHECK(thr.remap.at("s2") == "other");
    const std::vector<std::string> labels{"big", "s2", "s1"};
    CHECK(apply_merge(top, labels) == std::vector<std::string>{"big", "other", "other"});

    const auto w = class_weights(t);
    double mean = 0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i].second * t.entries()[i].second;
    CHECK(mean == doctest::Approx(1.0));
}

TEST_CASE("majority vote smoothing") {
    SegmentationMap m;
    m.ids = LabelPlane::Constant(5, 5, 1);
    m.ids(2, 2) = 2;
    m.classes = {{1, "a"}, {2, "b"}};
    const auto s = majority_vote_smooth(m, 3);
    CHECK((s.ids == 1).all());
    CHECK_THROWS_AS(majority_vote_smooth(m, 2), ValidationError);
    m.ids(0, 0) = -1;
    CHECK(majority_vote_smooth(m, 3).ids(0, 0) == -1);
    m.ids(1, 1) = 7;
    CHECK_THROWS_AS(validate(m), ValidationError);
}
