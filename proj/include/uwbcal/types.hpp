#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <vector>

namespace uwbcal {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Axis-aligned box, min/max corners in meters.
struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    double diagonal() const { return extent().norm(); }

    bool contains(const Vec3& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }

    Aabb inflated(double r) const { return {min.array() - r, max.array() + r}; }

    static Aabb of_points(const std::vector<Vec3>& pts);
};

struct Pose {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    Quat orientation = Quat::Identity();
};

// One raw UWB measurement before pairing with a trajectory position.
struct RangeSample {
    double t = 0.0;
    int anchor_id = 0;
    double range = 0.0;  // meters
};

// A range measurement joined with the interpolated tag position at its timestamp.
struct InterpolatedSample {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    int anchor_id = 0;
    double range = 0.0;
};

inline Aabb Aabb::of_points(const std::vector<Vec3>& pts) {
    Aabb box;
    if (pts.empty()) return box;
    box.min = box.max = pts.front();
    for (const Vec3& p : pts) {
        box.min = box.min.cwiseMin(p);
        box.max = box.max.cwiseMax(p);
    }
    return box;
}

// Rotation-vector log of a unit quaternion (angle*axis, radians).
inline Vec3 quat_log(const Quat& q_in) {
    Quat q = q_in;
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // shortest arc
    const double vn = q.vec().norm();
    if (vn < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(vn, q.w());
    return (angle / vn) * q.vec();
}

inline Quat quat_exp(const Vec3& v) {
    const double angle = v.norm();
    if (angle < 1e-12) {
        Quat q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
        q.normalize();
        return q;
    }
    const double half = 0.5 * angle;
    const Vec3 axis = v / angle;
    const double s = std::sin(half);
    return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

// Geodesic angle between two orientations, degrees.
inline double angular_error_deg(const Quat& a, const Quat& b) {
    double d = std::abs(a.coeffs().dot(b.coeffs()));
    d = std::min(1.0, d);
    return 2.0 * std::acos(d) * 180.0 / M_PI;
}

}  // namespace uwbcal
