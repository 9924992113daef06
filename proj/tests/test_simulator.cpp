#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uwbcal/errors.hpp"
#include "uwbcal/rng.hpp"
#include "uwbcal/simulator.hpp"

#include <cmath>
#include <set>

using namespace uwbcal;

namespace {

Scene basic_scene() {
    Scene s;
    s.bounds = {Vec3(0, 0, 0), Vec3(100, 100, 10)};
    s.anchors[0] = Vec3(20, 20, 5);
    s.anchors[1] = Vec3(80, 70, 3);
    return s;
}

// Dense sampling oracle: probe many points along the segment for box
// membership.
bool occluded_by_sampling(const Scene& scene, const Vec3& p, const Vec3& a, int probes = 10000) {
    for (int k = 0; k <= probes; ++k) {
        const Vec3 q = p + (a - p) * (static_cast<double>(k) / probes);
        for (const Aabb& box : scene.occluders)
            if (box.contains(q)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("trajectories stay inside bounds and respect the timing grid") {
    const Aabb bounds{Vec3(0, 0, 0), Vec3(100, 100, 6)};
    for (auto kind : {TrajectoryKind::Lawnmower, TrajectoryKind::Loop, TrajectoryKind::RandomWalk}) {
        const auto traj = generate_trajectory(kind, bounds, 3.0, 120.0, 77);
        CHECK(traj.size() == 1201);
        CHECK(traj.front().t == 0.0);
        CHECK(traj.back().t == doctest::Approx(120.0));
        for (const Pose& p : traj) {
            CHECK(bounds.contains(p.position));
            CHECK(p.orientation.norm() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("loop trajectory closes") {
    const Aabb bounds{Vec3(-50, -50, 0), Vec3(50, 50, 4)};
    const auto traj = generate_trajectory(TrajectoryKind::Loop, bounds, 4.0, 200.0, 3);
    const double step = 4.0 / 10.0;
    CHECK((traj.front().position - traj.back().position).norm() <= step);
}

TEST_CASE("trajectories are deterministic per seed") {
    const Aabb bounds{Vec3(0, 0, 0), Vec3(60, 40, 5)};
    const auto a = generate_trajectory(TrajectoryKind::RandomWalk, bounds, 2.0, 60.0, 42);
    const auto b = generate_trajectory(TrajectoryKind::RandomWalk, bounds, 2.0, 60.0, 42);
    const auto c = generate_trajectory(TrajectoryKind::RandomWalk, bounds, 2.0, 60.0, 43);
    REQUIRE(a.size() == b.size());
    bool identical = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].position != b[i].position) identical = false;
    CHECK(identical);
    bool differs = false;
    for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i)
        if (a[i].position != c[i].position) differs = true;
    CHECK(differs);
}

TEST_CASE("lawnmower covers both axes") {
    const Aabb bounds{Vec3(0, 0, 0), Vec3(100, 80, 2)};
    const auto traj = generate_trajectory(TrajectoryKind::Lawnmower, bounds, 5.0, 600.0, 1);
    Aabb box = Aabb::of_points([&] {
        std::vector<Vec3> pts;
        for (const auto& p : traj) pts.push_back(p.position);
        return pts;
    }());
    CHECK(box.extent().x() > 80.0);
    CHECK(box.extent().y() > 60.0);
}

TEST_CASE("is_occluded slab test against the sampling oracle") {
    Scene s = basic_scene();
    CHECK(!is_occluded(s, Vec3(0, 0, 0), Vec3(100, 100, 10)));  // no occluders yet

    s.occluders.push_back({Vec3(40, 40, 0), Vec3(60, 60, 10)});
    CHECK(is_occluded(s, Vec3(10, 50, 5), Vec3(90, 50, 5)));   // straight through
    CHECK(!is_occluded(s, Vec3(10, 10, 5), Vec3(90, 10, 5)));  // passes south of it

    s.occluders.push_back({Vec3(0, 70, 0), Vec3(15, 90, 4)});
    Rng rng(9);
    int disagreements = 0;
    for (int k = 0; k < 1000; ++k) {
        const Vec3 p(rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 10));
        const Vec3 a(rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 10));
        if (is_occluded(s, p, a) != occluded_by_sampling(s, p, a)) ++disagreements;
    }
    // The sampling oracle can only miss grazing contacts shorter than its
    // probe spacing; exact agreement is expected at this density.
    CHECK(disagreements == 0);
}

TEST_CASE("noiseless ranges equal true distances") {
    Scene s = basic_scene();
    RangingModel m;
    m.gaussian_sigma = 0.0;
    m.los_bias = 0.0;
    m.dropout_prob_los = 0.0;
    const auto traj = generate_trajectory(TrajectoryKind::Loop, s.bounds, 3.0, 60.0, 5);
    const auto ranges = simulate_ranges(s, m, traj, 11);
    REQUIRE(!ranges.empty());
    for (const auto& r : ranges) {
        // Reconstruct the exact interpolated position used by the simulator.
        const double ft = (r.t - traj.front().t) * 10.0;
        const auto i = static_cast<std::size_t>(ft + 0.5);
        Vec3 p;
        if (std::abs(ft - i) < 1e-9 && i < traj.size()) {
            p = traj[i].position;
        } else {
            continue;  // only check measurements landing on pose timestamps
        }
        const double d = (p - s.anchors.at(r.anchor_id)).norm();
        CHECK(r.range == doctest::Approx(d).epsilon(1e-12));
        CHECK(!r.occluded);
    }
}

TEST_CASE("full LoS dropout silences the output") {
    Scene s = basic_scene();
    RangingModel m;
    m.dropout_prob_los = 1.0;
    const auto traj = generate_trajectory(TrajectoryKind::Loop, s.bounds, 3.0, 30.0, 5);
    CHECK(simulate_ranges(s, m, traj, 1).empty());
}

TEST_CASE("max range cuts measurements") {
    Scene s;
    s.bounds = {Vec3(0, 0, 0), Vec3(1000, 10, 5)};
    s.anchors[7] = Vec3(995, 5, 2);
    RangingModel m;
    m.gaussian_sigma = 0.0;
    m.max_range = 300.0;
    const auto traj = generate_trajectory(TrajectoryKind::Lawnmower, s.bounds, 10.0, 100.0, 2);
    const auto ranges = simulate_ranges(s, m, traj, 3);
    for (const auto& r : ranges) CHECK(r.range <= 300.0 + 1e-9);
}

TEST_CASE("gaussian noise has the configured spread") {
    Scene s;
    s.bounds = {Vec3(0, 0, 0), Vec3(200, 200, 8)};
    s.anchors[0] = Vec3(100, 100, 4);
    RangingModel m;
    m.gaussian_sigma = 0.3;
    m.rate_hz = 50.0;
    const auto traj = generate_trajectory(TrajectoryKind::Loop, s.bounds, 5.0, 240.0, 17);
    const auto ranges = simulate_ranges(s, m, traj, 17);
    REQUIRE(ranges.size() >= 10000);

    // Residual against the true distance at each measurement time.
    double sum = 0.0, sq = 0.0;
    for (const auto& r : ranges) {
        const double ft = (r.t - traj.front().t) * 10.0;
        const auto lo = static_cast<std::size_t>(ft);
        const double u = ft - lo;
        const Vec3 p = lo + 1 < traj.size()
                           ? ((1.0 - u) * traj[lo].position + u * traj[lo + 1].position).eval()
                           : traj.back().position;
        const double resid = r.range - (p - s.anchors.at(0)).norm();
        sum += resid;
        sq += resid * resid;
    }
    const double n = static_cast<double>(ranges.size());
    const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(stddev > 0.27);
    CHECK(stddev < 0.33);
}

TEST_CASE("NLoS bias is non-negative extra delay") {
    Scene s;
    s.bounds = {Vec3(0, 0, 0), Vec3(100, 100, 10)};
    s.anchors[0] = Vec3(90, 50, 5);
    s.occluders.push_back({Vec3(45, 0, 0), Vec3(55, 100, 10)});  // wall across the middle
    RangingModel m;
    m.gaussian_sigma = 0.1;
    m.los_bias = 0.2;
    m.dropout_prob_nlos = 0.0;
    m.rate_hz = 100.0;
    const auto traj = generate_trajectory(TrajectoryKind::Lawnmower, s.bounds, 5.0, 2400.0, 23);
    const auto ranges = simulate_ranges(s, m, traj, 29);

    std::size_t occluded_count = 0;
    double min_extra = 1e300;
    for (const auto& r : ranges) {
        if (!r.occluded) continue;
        ++occluded_count;
        const double ft = (r.t - traj.front().t) * 10.0;
        const auto lo = static_cast<std::size_t>(ft);
        const double u = ft - lo;
        const Vec3 p = lo + 1 < traj.size()
                           ? ((1.0 - u) * traj[lo].position + u * traj[lo + 1].position).eval()
                           : traj.back().position;
        const double extra = r.range - (p - s.anchors.at(0)).norm() - m.los_bias;
        min_extra = std::min(min_extra, extra);
    }
    REQUIRE(occluded_count >= 100000);
    CHECK(min_extra >= -4.0 * m.gaussian_sigma);
}

TEST_CASE("simulate_ranges is deterministic and sorted") {
    Scene s = basic_scene();
    s.occluders.push_back({Vec3(30, 30, 0), Vec3(50, 60, 8)});
    RangingModel m;
    const auto traj = generate_trajectory(TrajectoryKind::RandomWalk, s.bounds, 3.0, 90.0, 4);
    const auto a = simulate_ranges(s, m, traj, 99);
    const auto b = simulate_ranges(s, m, traj, 99);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].t == b[i].t);
        CHECK(a[i].range == b[i].range);
        CHECK(a[i].anchor_id == b[i].anchor_id);
    }
    for (std::size_t i = 1; i < a.size(); ++i) {
        CHECK((a[i - 1].t < a[i].t ||
               (a[i - 1].t == a[i].t && a[i - 1].anchor_id < a[i].anchor_id)));
    }
}

TEST_CASE("descriptor field is smooth, duplicated patches repeat, noise is seeded") {
    DescriptorFieldConfig cfg;
    cfg.dim = 8;
    cfg.smoothness = 30.0;
    cfg.noise = 0.01;
    cfg.duplicate = true;
    cfg.duplicate_from = {Vec3(0, 0, 0), Vec3(20, 20, 5)};
    cfg.duplicate_to = {Vec3(200, 200, 0), Vec3(220, 220, 5)};
    const DescriptorField field(cfg, 55);

    // Smoothness: nearby points give nearby vectors.
    const auto v0 = field.field_at(Vec3(50, 50, 1));
    const auto v1 = field.field_at(Vec3(50.5, 50, 1));
    double d01 = 0.0, norm = 0.0;
    for (int i = 0; i < cfg.dim; ++i) {
        d01 += (v0[i] - v1[i]) * (v0[i] - v1[i]);
        norm += v0[i] * v0[i];
    }
    CHECK(std::sqrt(d01) < 0.2 * std::sqrt(norm));

    // Duplication: a point in the target patch replicates the source field.
    const auto dup = field.value_at(Vec3(205, 207, 2));
    const auto src = field.field_at(Vec3(5, 7, 2));
    for (int i = 0; i < cfg.dim; ++i) CHECK(dup[i] == doctest::Approx(src[i]).epsilon(1e-12));

    // Extraction is deterministic and spaced.
    const Aabb bounds{Vec3(0, 0, 0), Vec3(300, 300, 4)};
    const auto traj = generate_trajectory(TrajectoryKind::Lawnmower, bounds, 5.0, 400.0, 6);
    cfg.spacing = 10.0;
    const DescriptorField f2(cfg, 55);
    const auto d1 = extract_descriptors(f2, traj, 77);
    const auto d2 = extract_descriptors(f2, traj, 77);
    REQUIRE(!d1.empty());
    REQUIRE(d1.size() == d2.size());
    for (std::size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1[i].id == d2[i].id);
        CHECK(d1[i].vec == d2[i].vec);
    }
    for (std::size_t i = 1; i < d1.size(); ++i)
        CHECK((d1[i].pose.position - d1[i - 1].pose.position).norm() >= 0.5 * cfg.spacing);
}

TEST_CASE("scene validation") {
    Scene s = basic_scene();
    s.anchors[9] = Vec3(500, 0, 0);  // outside bounds
    CHECK_THROWS_AS(s.validate(), Error);

    RangingModel m;
    m.dropout_prob_los = 1.5;
    CHECK_THROWS_AS(m.validate(), Error);
}
