#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uwbcal/errors.hpp"
#include "uwbcal/rng.hpp"
#include "uwbcal/simulator.hpp"
#include "uwbcal/zones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

using namespace uwbcal;

namespace {

Descriptor make_desc(int id, const Vec3& p, std::vector<double> v) {
    Descriptor d;
    d.id = id;
    d.pose = {0.0, p, Quat::Identity()};
    d.vec = std::move(v);
    return d;
}

// Grid of descriptors with position-coded vectors.
std::vector<Descriptor> grid_store(Rng& rng, double extent, double step, int dim = 4) {
    std::vector<Descriptor> out;
    int id = 0;
    for (double x = 0.0; x <= extent; x += step)
        for (double y = 0.0; y <= extent; y += step) {
            std::vector<double> v(dim);
            for (int i = 0; i < dim; ++i) v[i] = 0.01 * x + 0.02 * y + 0.1 * i + 0.001 * rng.normal();
            out.push_back(make_desc(id++, Vec3(x, y, 0.0), std::move(v)));
        }
    return out;
}

}  // namespace

TEST_CASE("bucket boundary convention is half open") {
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}};
    std::vector<Descriptor> store;
    store.push_back(make_desc(1, Vec3(50.0, 0.0, 0.0), {1.0}));  // exactly at r_1
    const ZoneIndex index(store, anchors, 50.0, 4, 0.0);
    CHECK(index.bucket(0, 1).empty());
    REQUIRE(index.bucket(0, 2).size() == 1);
    CHECK(index.bucket(0, 2)[0] == 1);
}

TEST_CASE("delta overlap puts boundary descriptors in adjacent buckets") {
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}};
    std::vector<Descriptor> store;
    for (int i = 0; i < 20; ++i)
        store.push_back(make_desc(i, Vec3(5.0 + 10.0 * i, 0.0, 0.0), {static_cast<double>(i)}));
    // delta >= zone width: every in-range descriptor lands in >= 2 buckets.
    const ZoneIndex index(store, anchors, 10.0, 25, 10.0);
    for (const Descriptor& d : store) {
        int hits = 0;
        for (int z = 1; z <= 25; ++z)
            if (std::count(index.bucket(0, z).begin(), index.bucket(0, z).end(), d.id) > 0) ++hits;
        CHECK(hits >= 2);
    }
}

TEST_CASE("bucket membership matches a brute force distance check") {
    Rng rng(4);
    std::map<int, Vec3> anchors{{3, Vec3(20, 30, 0)}, {9, Vec3(70, 10, 0)}};
    const auto store = grid_store(rng, 100.0, 7.0);
    const double width = 15.0, delta = 4.0;
    const int n_zones = 8;
    const ZoneIndex index(store, anchors, width, n_zones, delta);

    for (const auto& [aid, apos] : anchors) {
        for (int z = 1; z <= n_zones; ++z) {
            std::set<int> expected;
            for (const Descriptor& d : store) {
                const double dist = (d.pose.position - apos).norm();
                if (dist >= (z - 1) * width - delta && dist < z * width + delta)
                    expected.insert(d.id);
            }
            const auto& bucket = index.bucket(aid, z);
            CHECK(std::set<int>(bucket.begin(), bucket.end()) == expected);
        }
    }
}

TEST_CASE("descriptors beyond every anchor's outermost radius are unzoned") {
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}};
    std::vector<Descriptor> store = {make_desc(0, Vec3(10, 0, 0), {0.0}),
                                     make_desc(1, Vec3(500, 0, 0), {1.0})};
    const ZoneIndex index(store, anchors, 20.0, 3, 5.0);
    REQUIRE(index.unzoned().size() == 1);
    CHECK(index.unzoned()[0] == 1);
}

TEST_CASE("candidates: single anchor, exact zone, errors") {
    Rng rng(5);
    std::map<int, Vec3> anchors{{1, Vec3(0, 0, 0)}};
    const auto store = grid_store(rng, 120.0, 6.0);
    const double width = 20.0;
    const ZoneIndex index(store, anchors, width, 7, 0.0);

    // d in zone 3 with delta = 0: exactly bucket (1, 3).
    const auto cs = index.candidates({{1, 45.0}});
    CHECK(cs.reporting_anchors == 1);
    CHECK(!cs.used_fallback);
    CHECK(cs.ids == index.bucket(1, 3));

    CHECK_THROWS_AS(index.candidates({{42, 10.0}}), UnknownAnchorId);
    CHECK_THROWS_AS(index.candidates({}), EmptyInput);

    // Beyond the outermost radius: treated as not reporting, full fallback.
    const auto far = index.candidates({{1, 1e6}});
    CHECK(far.used_fallback);
    CHECK(far.ids.size() == store.size());
}

TEST_CASE("huge delta degenerates the gate to the full index") {
    Rng rng(6);
    std::map<int, Vec3> anchors{{0, Vec3(10, 10, 0)}, {1, Vec3(90, 80, 0)}};
    const auto store = grid_store(rng, 100.0, 9.0);
    const ZoneIndex index(store, anchors, 10.0, 12, std::numeric_limits<double>::infinity());
    CHECK(index.unzoned().empty());
    const auto cs = index.candidates({{0, 33.0}, {1, 61.0}});
    CHECK(cs.ids.size() == store.size());

    // Match under that setting equals the ungated nearest neighbor.
    Descriptor q = store[37];
    const auto gated = index.match(q, {{0, 33.0}, {1, 61.0}});
    const auto ungated = index.match_ungated(q);
    REQUIRE(gated.has_value());
    REQUIRE(ungated.has_value());
    CHECK(gated->id == ungated->id);
    CHECK(gated->score == ungated->score);
}

TEST_CASE("two anchor intersection matches brute force") {
    Rng rng(7);
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}, {1, Vec3(100, 0, 0)}};
    const auto store = grid_store(rng, 100.0, 5.0);
    const double width = 12.0, delta = 3.0;
    const int n_zones = 15;
    const ZoneIndex index(store, anchors, width, n_zones, delta);

    Rng qrng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 q(qrng.uniform(0, 100), qrng.uniform(0, 100), 0.0);
        std::map<int, double> measured;
        for (const auto& [aid, apos] : anchors) measured[aid] = (q - apos).norm();
        const auto cs = index.candidates(measured, /*allow_fallback=*/false);

        std::set<int> expected;
        for (const Descriptor& d : store) {
            bool ok = true;
            for (const auto& [aid, dist] : measured) {
                const double ddist = (d.pose.position - anchors[aid]).norm();
                // Descriptor's bucket set must contain the bucket set hit by
                // the measured distance: brute force over zones.
                bool shared = false;
                for (int z = 1; z <= n_zones && !shared; ++z) {
                    const double lo = (z - 1) * width - delta;
                    const double hi = z * width + delta;
                    if (dist >= lo && dist < hi && ddist >= lo && ddist < hi) shared = true;
                }
                if (!shared) ok = false;
            }
            if (ok) expected.insert(d.id);
        }
        CHECK(std::set<int>(cs.ids.begin(), cs.ids.end()) == expected);
    }
}

TEST_CASE("gating soundness: the true descriptor always survives the gate") {
    Rng rng(9);
    std::map<int, Vec3> anchors{{0, Vec3(25, 25, 0)}, {1, Vec3(75, 75, 0)}, {2, Vec3(25, 75, 0)}};
    const auto store = grid_store(rng, 100.0, 4.0);
    for (const double delta : {0.0, 5.0}) {
        const ZoneIndex index(store, anchors, 10.0, 15, delta);
        for (std::size_t i = 0; i < store.size(); i += 7) {
            std::map<int, double> measured;
            for (const auto& [aid, apos] : anchors)
                measured[aid] = (store[i].pose.position - apos).norm();
            const auto cs = index.candidates(measured);
            CHECK(std::binary_search(cs.ids.begin(), cs.ids.end(), store[i].id));
        }
    }
}

TEST_CASE("gating monotonicity in delta and anchor count") {
    Rng rng(10);
    std::map<int, Vec3> anchors{{0, Vec3(10, 50, 0)}, {1, Vec3(90, 50, 0)}};
    const auto store = grid_store(rng, 100.0, 5.0);
    const Vec3 q(40.0, 30.0, 0.0);

    std::size_t prev = 0;
    for (const double delta : {0.0, 5.0, 15.0, 40.0}) {
        const ZoneIndex index(store, anchors, 12.0, 12, delta);
        std::map<int, double> measured;
        for (const auto& [aid, apos] : anchors) measured[aid] = (q - apos).norm();
        const auto cs = index.candidates(measured);
        CHECK(cs.ids.size() >= prev);
        prev = cs.ids.size();
    }

    // More anchors, smaller (or equal) candidate set, pre fallback.
    const ZoneIndex index(store, anchors, 12.0, 12, 5.0);
    const auto one = index.candidates({{0, (q - anchors[0]).norm()}}, false);
    const auto two = index.candidates(
        {{0, (q - anchors[0]).norm()}, {1, (q - anchors[1]).norm()}}, false);
    CHECK(two.ids.size() <= one.ids.size());
}

TEST_CASE("match finds the identical descriptor with score 0") {
    Rng rng(11);
    std::map<int, Vec3> anchors{{0, Vec3(50, 50, 0)}};
    const auto store = grid_store(rng, 100.0, 8.0);
    const ZoneIndex index(store, anchors, 15.0, 10, 5.0);
    const Descriptor& target = store[10];
    std::map<int, double> measured{{0, (target.pose.position - anchors[0]).norm()}};
    const auto m = index.match(target, measured);
    REQUIRE(m.has_value());
    CHECK(m->id == target.id);
    CHECK(m->score == doctest::Approx(0.0));
    CHECK((m->pose.position - target.pose.position).norm() == doctest::Approx(0.0));

    Descriptor wrong_dim = target;
    wrong_dim.vec.push_back(0.0);
    CHECK_THROWS_AS(index.match(wrong_dim, measured), DimensionMismatch);
}

TEST_CASE("empty candidate set with fallback disabled gives no match") {
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}, {1, Vec3(200, 0, 0)}};
    std::vector<Descriptor> store = {make_desc(0, Vec3(10, 0, 0), {0.0}),
                                     make_desc(1, Vec3(190, 0, 0), {5.0})};
    const ZoneIndex index(store, anchors, 20.0, 10, 0.0);
    // Distances pointing at disjoint buckets: intersection empty.
    Descriptor q = make_desc(99, Vec3(0, 0, 0), {0.0});
    const auto none = index.match(q, {{0, 10.0}, {1, 10.0}}, /*allow_fallback=*/false);
    CHECK(!none.has_value());
    // With fallback the union is searched instead.
    const auto with_fb = index.match(q, {{0, 10.0}, {1, 10.0}});
    REQUIRE(with_fb.has_value());
    CHECK(with_fb->gated_fallback);
}

TEST_CASE("acceptance threshold rejects weak matches") {
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}};
    std::vector<Descriptor> store;
    for (int i = 0; i < 40; ++i)
        store.push_back(make_desc(i, Vec3(5.0 + i, 0, 0), {0.1 * i, 1.0}));
    ZoneIndex index(store, anchors, 25.0, 4, 5.0);
    index.set_acceptance_threshold(0.05);
    Descriptor q = make_desc(99, Vec3(6, 0, 0), {0.0, 1.0});
    q.vec[0] = 0.5 + 0.049;  // nearest is 0.049 away: accepted
    auto got = index.match_ungated(q);
    CHECK(got.has_value());
    q.vec[0] = 0.55;  // nearest is 0.05.. away: rejected
    index.set_acceptance_threshold(0.04);
    got = index.match_ungated(q);
    CHECK(!got.has_value());
}

TEST_CASE("repetitive scene: gating recovers the true pose duplicate") {
    // Locally smooth field duplicated in a far patch; queries from the
    // original patch must not match the far clone once gated.
    DescriptorFieldConfig cfg;
    cfg.dim = 12;
    cfg.smoothness = 25.0;
    cfg.noise = 0.01;
    cfg.duplicate = true;
    // Patch offset is a multiple of the store grid step so clones coincide
    // with store grid points exactly.
    cfg.duplicate_from = {Vec3(0, 0, 0), Vec3(56, 56, 4)};
    cfg.duplicate_to = {Vec3(238, 238, 0), Vec3(294, 294, 4)};
    const DescriptorField field(cfg, 21);

    std::vector<Descriptor> store;
    Rng store_rng(22);
    int id = 0;
    for (double x = 2.0; x < 300.0; x += 7.0)
        for (double y = 2.0; y < 300.0; y += 7.0) {
            Descriptor d;
            d.id = id++;
            d.pose = {0.0, Vec3(x, y, 1.0), Quat::Identity()};
            d.vec = field.observe(d.pose.position, store_rng);
            store.push_back(std::move(d));
        }

    std::map<int, Vec3> anchors{{0, Vec3(30, 30, 2)}, {1, Vec3(270, 50, 2)}};
    const ZoneIndex index(store, anchors, 40.0, 12, 8.0);

    Rng qrng(23);
    int ungated_wrong = 0, gated_wrong = 0, gated_found = 0;
    int queries = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Vec3 p = store[i].pose.position;
        if (!cfg.duplicate_from.contains(p)) continue;  // query inside patch A
        ++queries;
        Descriptor q;
        q.id = -1;
        q.pose = store[i].pose;
        q.vec = field.observe(p, qrng);
        std::map<int, double> measured;
        for (const auto& [aid, apos] : anchors) measured[aid] = (p - apos).norm();

        const auto ug = index.match_ungated(q);
        if (ug && (store[ug->id].pose.position - p).norm() > 20.0) ++ungated_wrong;
        const auto g = index.match(q, measured);
        if (g) {
            ++gated_found;
            if ((store[g->id].pose.position - p).norm() > 20.0) ++gated_wrong;
        }
    }
    REQUIRE(queries >= 50);
    CHECK(ungated_wrong > 0);        // clones confuse the ungated matcher
    CHECK(gated_wrong == 0);         // the gate removes the far clones
    CHECK(gated_found == queries);   // and never loses the true one
}

TEST_CASE("evaluate applies the success thresholds exactly") {
    auto mk = [](double pos_err, double ang_deg, bool matched = true) {
        QueryEval q;
        q.matched = matched;
        q.truth = {0.0, Vec3(0, 0, 0), Quat::Identity()};
        q.predicted = {0.0, Vec3(pos_err, 0, 0),
                       quat_exp(Vec3(0, 0, ang_deg * M_PI / 180.0))};
        q.latency_ms = 2.0;
        return q;
    };

    // All exact: 100 % success, zero APE.
    std::vector<QueryEval> perfect(5, mk(0.0, 0.0));
    const auto rep = evaluate(perfect);
    CHECK(rep.success_rate == doctest::Approx(1.0));
    CHECK(rep.ape == doctest::Approx(0.0));

    // Threshold cases.
    CHECK(evaluate({mk(8.4, 9.0)}).successes == 1);
    CHECK(evaluate({mk(8.6, 9.0)}).successes == 0);
    CHECK(evaluate({mk(8.4, 11.0)}).successes == 0);
    CHECK(evaluate({mk(8.5, 9.0)}).successes == 0);     // strictly under 8.5
    CHECK(evaluate({mk(8.4, 10.001)}).successes == 0);  // strictly below 10
    CHECK(evaluate({mk(8.4, 9.999)}).successes == 1);

    // Hand computed mixed batch: 10 cases, 4 successes, APE over successes.
    std::vector<QueryEval> mixed = {
        mk(0.0, 0.0),          // success, 0
        mk(2.0, 3.0),          // success, 2
        mk(8.0, 9.9),          // success, 8
        mk(4.0, 0.0),          // success, 4
        mk(9.0, 0.0),          // fail: position
        mk(1.0, 15.0),         // fail: angle
        mk(20.0, 20.0),        // fail: both
        mk(0.5, 0.5, false),   // fail: no match
        mk(8.6, 9.0),          // fail: position
        mk(8.4, 11.0),         // fail: angle
    };
    const auto mrep = evaluate(mixed);
    CHECK(mrep.attempts == 10);
    CHECK(mrep.matches == 9);
    CHECK(mrep.successes == 4);
    CHECK(mrep.success_rate == doctest::Approx(0.4));
    CHECK(mrep.ape == doctest::Approx((0.0 + 2.0 + 8.0 + 4.0) / 4.0));
    CHECK(mrep.mean_latency_ms == doctest::Approx(2.0));

    CHECK(evaluate({}).attempts == 0);
    CHECK(evaluate({}).success_rate == doctest::Approx(0.0));
}

TEST_CASE("index construction validation") {
    std::vector<Descriptor> store = {make_desc(0, Vec3(0, 0, 0), {1.0, 2.0}),
                                     make_desc(1, Vec3(1, 0, 0), {1.0})};
    CHECK_THROWS_AS(ZoneIndex(store, {}, 10.0, 5, 0.0), EmptyAnchors);
    std::map<int, Vec3> anchors{{0, Vec3(0, 0, 0)}};
    CHECK_THROWS_AS(ZoneIndex(store, anchors, 10.0, 5, 0.0), DimensionMismatch);
}
