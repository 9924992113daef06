#include "uwbcal/simulator.hpp"

#include "uwbcal/errors.hpp"
#include "uwbcal/rng.hpp"

#include <algorithm>
#include <cmath>

namespace uwbcal {

void Scene::validate() const {
    if ((bounds.extent().array() < 0.0).any()) throw Error("scene bounds are inverted");
    for (const auto& [id, p] : anchors) {
        if (!bounds.contains(p))
            throw Error("anchor " + std::to_string(id) + " lies outside the scene bounds");
    }
}

void RangingModel::validate() const {
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!prob(dropout_prob_los) || !prob(dropout_prob_nlos))
        throw Error("dropout probabilities must be in [0, 1]");
    if (!(max_range > 0.0)) throw Error("max_range must be > 0");
    if (!(rate_hz > 0.0)) throw Error("rate_hz must be > 0");
    if (!(gaussian_sigma >= 0.0) || !(nlos_bias_sigma >= 0.0))
        throw Error("noise sigmas must be >= 0");
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
    if (s == "lawnmower") return TrajectoryKind::Lawnmower;
    if (s == "loop") return TrajectoryKind::Loop;
    if (s == "random-walk") return TrajectoryKind::RandomWalk;
    throw ParseError("unknown trajectory kind '" + s + "' (expected lawnmower|loop|random-walk)");
}

namespace {

Quat heading_quat(double yaw) {
    return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

// Piecewise path made of straight lanes joined by half-circle turns,
// sweeping down and back up for as long as needed.
class LawnmowerPath {
public:
    LawnmowerPath(const Aabb& bounds, double total_length) {
        const Vec3 ext = bounds.extent();
        const double mx = std::max(0.02 * ext.x(), 0.5);
        const double my = std::max(0.02 * ext.y(), 0.5);
        x_lo_ = bounds.min.x() + mx;
        x_hi_ = bounds.max.x() - mx;
        y_lo_ = bounds.min.y() + my;
        y_hi_ = bounds.max.y() - my;
        z_ = bounds.min.z() + 0.5 * ext.z();
        const double lane = std::max(x_hi_ - x_lo_, 1.0);
        const double span = std::max(y_hi_ - y_lo_, 1.0);
        // Choose a lane count so one full sweep roughly consumes the path.
        int lanes = static_cast<int>(std::floor((total_length + span) / (lane + 1.0)));
        lanes = std::clamp(lanes, 2, 200);
        spacing_ = span / (lanes - 1);
        lanes_ = lanes;
    }

    // Position and heading at arc length s (sweep repeats, reversing).
    // Lanes are inset by the turn radius so the elliptical turn arcs stay
    // inside the margin box.
    void at(double s, Vec3& p, double& yaw) const {
        const double rx = std::min(0.5 * spacing_, 0.25 * (x_hi_ - x_lo_));
        const double ry = 0.5 * spacing_;
        const double straight = (x_hi_ - x_lo_) - 2.0 * rx;
        const double turn = M_PI * std::sqrt(0.5 * (rx * rx + ry * ry));
        const double sweep = lanes_ * straight + (lanes_ - 1) * turn;
        // Reflect s into a forward sweep.
        double u = std::fmod(s, 2.0 * sweep);
        if (u < 0.0) u += 2.0 * sweep;
        bool reversed = false;
        if (u > sweep) {
            u = 2.0 * sweep - u;
            reversed = true;
        }
        int lane_idx = 0;
        while (lane_idx + 1 < lanes_ && u > straight + turn) {
            u -= straight + turn;
            ++lane_idx;
        }
        const bool rightward = lane_idx % 2 == 0;
        const double y0 = y_lo_ + lane_idx * spacing_;
        if (u <= straight || lane_idx + 1 == lanes_) {
            const double v = std::min(u, straight);
            const double x = rightward ? x_lo_ + rx + v : x_hi_ - rx - v;
            p = Vec3(x, y0, z_);
            yaw = rightward ? 0.0 : M_PI;
        } else {
            const double a = std::clamp((u - straight) / turn, 0.0, 1.0) * M_PI;
            const double cx = rightward ? x_hi_ - rx : x_lo_ + rx;
            const double sgn = rightward ? 1.0 : -1.0;
            p = Vec3(cx + sgn * rx * std::sin(a), y0 + ry - ry * std::cos(a), z_);
            yaw = std::atan2(ry * std::sin(a), sgn * rx * std::cos(a));
        }
        if (reversed) yaw += M_PI;
    }

private:
    double x_lo_, x_hi_, y_lo_, y_hi_, z_;
    double spacing_ = 1.0;
    int lanes_ = 2;
};

}  // namespace

std::vector<Pose> generate_trajectory(TrajectoryKind kind, const Aabb& bounds, double speed,
                                      double duration, std::uint64_t seed, double pose_rate_hz) {
    if (!(duration > 0.0)) throw Error("trajectory duration must be > 0");
    if (!(speed > 0.0)) throw Error("trajectory speed must be > 0");
    if (!(pose_rate_hz > 0.0)) throw Error("pose rate must be > 0");

    const double dt = 1.0 / pose_rate_hz;
    const std::size_t n = static_cast<std::size_t>(std::round(duration * pose_rate_hz)) + 1;
    std::vector<Pose> out;
    out.reserve(n);

    const Vec3 ext = bounds.extent();
    const Vec3 c = bounds.center();

    switch (kind) {
        case TrajectoryKind::Lawnmower: {
            LawnmowerPath path(bounds, speed * duration);
            for (std::size_t k = 0; k < n; ++k) {
                const double t = k * dt;
                Vec3 p;
                double yaw;
                path.at(speed * t, p, yaw);
                out.push_back({t, p, heading_quat(yaw)});
            }
            break;
        }
        case TrajectoryKind::Loop: {
            const double a = 0.45 * std::max(ext.x(), 1.0);
            const double b = 0.45 * std::max(ext.y(), 1.0);
            // Ramanujan perimeter approximation; cycles rounded so the loop
            // closes exactly at t = duration.
            const double h = (a - b) * (a - b) / ((a + b) * (a + b));
            const double perimeter = M_PI * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
            const double cycles = std::max(1.0, std::round(speed * duration / perimeter));
            const double omega = 2.0 * M_PI * cycles / duration;
            const double zc = bounds.min.z() + 0.5 * ext.z();
            const double zamp = 0.4 * 0.5 * ext.z();
            for (std::size_t k = 0; k < n; ++k) {
                const double t = k * dt;
                const double th = omega * t;
                const Vec3 p(c.x() + a * std::cos(th), c.y() + b * std::sin(th),
                             zc + zamp * std::sin(2.0 * th));
                const double yaw = std::atan2(b * std::cos(th), -a * std::sin(th));
                out.push_back({t, p, heading_quat(yaw)});
            }
            break;
        }
        case TrajectoryKind::RandomWalk: {
            Rng rng(Rng::mix(seed, 0x7261776bull));
            const double mx = std::max(0.05 * ext.x(), 0.5);
            const double my = std::max(0.05 * ext.y(), 0.5);
            const Aabb inner{Vec3(bounds.min.x() + mx, bounds.min.y() + my, bounds.min.z()),
                             Vec3(bounds.max.x() - mx, bounds.max.y() - my, bounds.max.z())};
            Vec3 p = c;
            double yaw = rng.uniform(0.0, 2.0 * M_PI);
            const double zc = bounds.min.z() + 0.5 * ext.z();
            const double zamp = 0.35 * 0.5 * ext.z();
            const double zfreq = rng.uniform(0.02, 0.06) * 2.0 * M_PI;
            const double zphase = rng.uniform(0.0, 2.0 * M_PI);
            for (std::size_t k = 0; k < n; ++k) {
                const double t = k * dt;
                p.z() = zc + zamp * std::sin(zfreq * t + zphase);
                out.push_back({t, p, heading_quat(yaw)});
                yaw += rng.normal(0.0, 0.45 * std::sqrt(dt));
                Vec3 step(speed * dt * std::cos(yaw), speed * dt * std::sin(yaw), 0.0);
                Vec3 next = p + step;
                if (next.x() < inner.min.x() || next.x() > inner.max.x() ||
                    next.y() < inner.min.y() || next.y() > inner.max.y()) {
                    // Steer toward the center and retry the step.
                    yaw = std::atan2(c.y() - p.y(), c.x() - p.x()) + rng.normal(0.0, 0.2);
                    next = p + Vec3(speed * dt * std::cos(yaw), speed * dt * std::sin(yaw), 0.0);
                    next.x() = std::clamp(next.x(), inner.min.x(), inner.max.x());
                    next.y() = std::clamp(next.y(), inner.min.y(), inner.max.y());
                }
                p.x() = next.x();
                p.y() = next.y();
            }
            break;
        }
    }
    return out;
}

bool is_occluded(const Scene& scene, const Vec3& p, const Vec3& a) {
    const Vec3 d = a - p;
    for (const Aabb& box : scene.occluders) {
        double tmin = 0.0;
        double tmax = 1.0;
        bool miss = false;
        for (int i = 0; i < 3 && !miss; ++i) {
            if (d(i) == 0.0) {
                if (p(i) < box.min(i) || p(i) > box.max(i)) miss = true;
            } else {
                double t1 = (box.min(i) - p(i)) / d(i);
                double t2 = (box.max(i) - p(i)) / d(i);
                if (t1 > t2) std::swap(t1, t2);
                tmin = std::max(tmin, t1);
                tmax = std::min(tmax, t2);
                if (tmin > tmax) miss = true;
            }
        }
        if (!miss) return true;
    }
    return false;
}

namespace {

Vec3 interpolate_position(const std::vector<Pose>& traj, double t) {
    const auto it = std::lower_bound(traj.begin(), traj.end(), t,
                                     [](const Pose& p, double tv) { return p.t < tv; });
    if (it == traj.begin()) return traj.front().position;
    if (it == traj.end()) return traj.back().position;
    const Pose& hi = *it;
    const Pose& lo = *(it - 1);
    const double dt = hi.t - lo.t;
    if (dt <= 0.0) return lo.position;
    const double u = (t - lo.t) / dt;
    return (1.0 - u) * lo.position + u * hi.position;
}

}  // namespace

std::vector<SimulatedRange> simulate_ranges(const Scene& scene, const RangingModel& model,
                                            const std::vector<Pose>& trajectory,
                                            std::uint64_t seed) {
    scene.validate();
    model.validate();
    std::vector<SimulatedRange> out;
    if (trajectory.empty()) return out;

    const double t0 = trajectory.front().t;
    const double t1 = trajectory.back().t;
    const std::size_t steps = static_cast<std::size_t>(std::floor((t1 - t0) * model.rate_hz)) + 1;

    for (const auto& [aid, anchor_pos] : scene.anchors) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(aid) + 0x414eu));
        for (std::size_t k = 0; k < steps; ++k) {
            const double t = t0 + static_cast<double>(k) / model.rate_hz;
            const Vec3 p = interpolate_position(trajectory, t);
            const double d = (p - anchor_pos).norm();
            if (d > model.max_range) continue;
            const bool occ = is_occluded(scene, p, anchor_pos);
            const double drop = occ ? model.dropout_prob_nlos : model.dropout_prob_los;
            if (rng.uniform() < drop) continue;
            double zeta = d + model.los_bias + rng.normal(0.0, model.gaussian_sigma);
            if (occ) zeta += std::abs(rng.normal(model.nlos_bias_mean, model.nlos_bias_sigma));
            out.push_back({t, aid, std::max(0.0, zeta), occ});
        }
    }
    std::sort(out.begin(), out.end(), [](const SimulatedRange& a, const SimulatedRange& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.anchor_id < b.anchor_id;
    });
    return out;
}

std::vector<RangeSample> to_range_samples(const std::vector<SimulatedRange>& sim) {
    std::vector<RangeSample> out;
    out.reserve(sim.size());
    for (const auto& s : sim) out.push_back({s.t, s.anchor_id, s.range});
    return out;
}

DescriptorField::DescriptorField(const DescriptorFieldConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.dim < 1) throw Error("descriptor dimension must be >= 1");
    if (!(cfg_.smoothness > 0.0)) throw Error("descriptor field smoothness must be > 0");
    Rng rng(Rng::mix(seed, 0xde5cull));
    frequencies_.reserve(cfg_.dim);
    phases_.reserve(cfg_.dim);
    for (int i = 0; i < cfg_.dim; ++i) {
        // Random Fourier features of an RBF field; z gets a reduced weight
        // because trajectories are mostly planar.
        frequencies_.emplace_back(rng.normal() / cfg_.smoothness, rng.normal() / cfg_.smoothness,
                                  0.2 * rng.normal() / cfg_.smoothness);
        phases_.push_back(rng.uniform(0.0, 2.0 * M_PI));
    }
}

std::vector<double> DescriptorField::field_at(const Vec3& p) const {
    std::vector<double> v(cfg_.dim);
    for (int i = 0; i < cfg_.dim; ++i)
        v[i] = std::sqrt(2.0) * std::cos(frequencies_[i].dot(p) + phases_[i]);
    return v;
}

std::vector<double> DescriptorField::value_at(const Vec3& p) const {
    if (cfg_.duplicate && cfg_.duplicate_to.contains(p)) {
        const Vec3 mapped = p - cfg_.duplicate_to.center() + cfg_.duplicate_from.center();
        return field_at(mapped);
    }
    return field_at(p);
}

std::vector<double> DescriptorField::observe(const Vec3& p, Rng& rng) const {
    std::vector<double> v = value_at(p);
    for (double& x : v) x += cfg_.noise * rng.normal();
    return v;
}

std::vector<Descriptor> extract_descriptors(const DescriptorField& field,
                                            const std::vector<Pose>& trajectory,
                                            std::uint64_t seed) {
    std::vector<Descriptor> out;
    Rng rng(Rng::mix(seed, 0x6465ull));
    double walked = field.config().spacing;  // emit at the first pose
    Vec3 last = Vec3::Zero();
    bool have_last = false;
    int next_id = 0;
    for (const Pose& pose : trajectory) {
        if (have_last) walked += (pose.position - last).norm();
        last = pose.position;
        have_last = true;
        if (walked >= field.config().spacing) {
            walked = 0.0;
            out.push_back({next_id++, field.observe(pose.position, rng), pose});
        }
    }
    return out;
}

}  // namespace uwbcal
