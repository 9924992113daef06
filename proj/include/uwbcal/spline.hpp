#pragma once

#include "uwbcal/types.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace uwbcal {

struct ControlPose {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    Quat orientation = Quat::Identity();
};

/// Uniform cumulative B-spline over timestamped control poses.
///
/// Control timestamps are the Greville abscissae of the underlying uniform
/// knot grid, so a spline whose control positions sample an affine function
/// of time reproduces that function exactly (any order). Internally knot m
/// sits at t0 + (m - order/2) * dt; the segment with knot-span index m blends
/// the `order` control poses m-order+1 .. m through the cumulative form
///
///   p(t) = p_base + sum_j lambda_j(s) * (p_{base+j} - p_{base+j-1}),
///
/// with s in [0,1) the normalized offset inside the span and lambda the
/// row-cumulative sums of the standard uniform basis matrix applied to
/// [1, s, ..., s^{order-1}].
class PoseSpline {
public:
    // Throws NonUniformKnots / TooFewControlPoses. Order must be in [2, 5].
    PoseSpline(std::vector<ControlPose> control, int order);

    int order() const { return order_; }
    double knot_spacing() const { return dt_; }
    const std::vector<ControlPose>& control() const { return control_; }

    // Cumulative blending matrix (row j holds the polynomial coefficients of
    // lambda_j in powers of s).
    const Eigen::MatrixXd& cumulative_basis() const { return cumulative_basis_; }

    double domain_start() const;
    double domain_end() const;  // exclusive
    bool in_domain(double t) const { return t >= domain_start() && t < domain_end(); }

    // Knot-span index and cumulative coefficients lambda_0..lambda_{N-1} at t.
    // lambda_0 == 1 for every valid t. Throws OutOfDomain.
    std::pair<int, Eigen::VectorXd> blending_coefficients(double t) const;

    Vec3 position_at(double t) const;       // throws OutOfDomain
    Quat orientation_at(double t) const;    // throws OutOfDomain
    Pose pose_at(double t) const;

    // Standard (non-cumulative) uniform B-spline basis matrix for the given
    // order, from the closed-form combinatorial expression.
    static Eigen::MatrixXd standard_basis_matrix(int order);

private:
    // Span index + normalized offset for a timestamp inside the domain.
    std::pair<int, double> locate(double t) const;

    std::vector<ControlPose> control_;
    int order_ = 4;
    double dt_ = 0.0;
    Eigen::MatrixXd standard_basis_;
    Eigen::MatrixXd cumulative_basis_;
};

PoseSpline make_spline(std::vector<ControlPose> control, int order = 4);

struct SplineFit {
    PoseSpline spline;
    double position_rms = 0.0;     // meters
    double orientation_rms = 0.0;  // radians
};

// Least-squares fit of control poses to timestamped input poses. Control
// positions solve a sparse linear system; control orientations are refined by
// reusing the same system on locally-chartered quaternion logs. Throws
// NonMonotoneTimestamps / TooFewControlPoses / DegenerateSystem.
SplineFit fit_spline(const std::vector<Pose>& poses, double knot_spacing, int order = 4);

struct PairedSamples {
    std::vector<InterpolatedSample> samples;  // sorted by t
    std::size_t dropped_out_of_domain = 0;
    std::size_t dropped_invalid = 0;  // negative or non-finite range
};

// Pairs each in-domain range measurement with the interpolated tag position.
PairedSamples pair_samples(const PoseSpline& spline, const std::vector<RangeSample>& ranges);

}  // namespace uwbcal
