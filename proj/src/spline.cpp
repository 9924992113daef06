#include "uwbcal/spline.hpp"

#include "uwbcal/errors.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <string>

namespace uwbcal {

namespace {

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

double int_pow(double base, int e) {
    // 0^0 = 1 by the convention the basis formula relies on.
    if (e == 0) return 1.0;
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

}  // namespace

Eigen::MatrixXd PoseSpline::standard_basis_matrix(int order) {
    const int n = order;
    double fact = 1.0;
    for (int i = 2; i < n; ++i) fact *= i;
    Eigen::MatrixXd m(n, n);
    for (int j = 0; j < n; ++j) {
        for (int p = 0; p < n; ++p) {
            double acc = 0.0;
            for (int l = j; l < n; ++l)
                acc += ((l - j) % 2 == 0 ? 1.0 : -1.0) * binomial(n, l - j) * int_pow(n - 1 - l, n - 1 - p);
            m(j, p) = binomial(n - 1, p) / fact * acc;
        }
    }
    return m;
}

PoseSpline::PoseSpline(std::vector<ControlPose> control, int order)
    : control_(std::move(control)), order_(order) {
    if (order_ < 2 || order_ > 5)
        throw Error("spline order must be in [2, 5], got " + std::to_string(order_));
    if (static_cast<int>(control_.size()) < order_)
        throw TooFewControlPoses("need at least " + std::to_string(order_) + " control poses, got " +
                                 std::to_string(control_.size()));

    dt_ = control_[1].t - control_[0].t;
    if (!(dt_ > 0.0)) throw NonUniformKnots("knot spacing must be positive");
    for (std::size_t i = 1; i < control_.size(); ++i) {
        const double step = control_[i].t - control_[i - 1].t;
        if (std::abs(step - dt_) > 1e-6 * dt_)
            throw NonUniformKnots("knot spacing not uniform at control pose " + std::to_string(i));
    }
    for (auto& c : control_) {
        const double n = c.orientation.norm();
        if (std::abs(n - 1.0) > 1e-3)
            throw Error("control orientation is not a unit quaternion (norm " + std::to_string(n) + ")");
        c.orientation.normalize();
    }

    standard_basis_ = standard_basis_matrix(order_);
    // Cumulative row j = sum of standard rows j..N-1; row 0 is the partition
    // of unity and evaluates to 1 for every s.
    cumulative_basis_ = Eigen::MatrixXd::Zero(order_, order_);
    for (int j = order_ - 1; j >= 0; --j) {
        cumulative_basis_.row(j) = standard_basis_.row(j);
        if (j + 1 < order_) cumulative_basis_.row(j) += cumulative_basis_.row(j + 1);
    }
}

double PoseSpline::domain_start() const {
    return control_.front().t + (order_ - 1 - 0.5 * order_) * dt_;
}

double PoseSpline::domain_end() const {
    return control_.front().t + (static_cast<double>(control_.size()) - 0.5 * order_) * dt_;
}

std::pair<int, double> PoseSpline::locate(double t) const {
    if (!in_domain(t)) {
        throw OutOfDomain("t = " + std::to_string(t) + " outside spline domain [" +
                          std::to_string(domain_start()) + ", " + std::to_string(domain_end()) + ")");
    }
    // Knot-space coordinate: knot m sits at t0 + (m - order/2) * dt.
    const double x = (t - control_.front().t) / dt_ + 0.5 * order_;
    int span = static_cast<int>(std::floor(x));
    span = std::clamp(span, order_ - 1, static_cast<int>(control_.size()) - 1);
    double s = x - span;
    s = std::clamp(s, 0.0, std::nextafter(1.0, 0.0));
    return {span, s};
}

std::pair<int, Eigen::VectorXd> PoseSpline::blending_coefficients(double t) const {
    const auto [span, s] = locate(t);
    Eigen::VectorXd powers(order_);
    powers(0) = 1.0;
    for (int p = 1; p < order_; ++p) powers(p) = powers(p - 1) * s;
    return {span, cumulative_basis_ * powers};
}

Vec3 PoseSpline::position_at(double t) const {
    const auto [span, lambda] = blending_coefficients(t);
    const int base = span - order_ + 1;
    Vec3 p = control_[base].position;
    for (int j = 1; j < order_; ++j)
        p += lambda(j) * (control_[base + j].position - control_[base + j - 1].position);
    return p;
}

Quat PoseSpline::orientation_at(double t) const {
    const auto [span, lambda] = blending_coefficients(t);
    const int base = span - order_ + 1;
    Quat q = control_[base].orientation;
    for (int j = 1; j < order_; ++j) {
        const Vec3 delta =
            quat_log(control_[base + j - 1].orientation.conjugate() * control_[base + j].orientation);
        q = q * quat_exp(lambda(j) * delta);
    }
    q.normalize();
    return q;
}

Pose PoseSpline::pose_at(double t) const { return {t, position_at(t), orientation_at(t)}; }

PoseSpline make_spline(std::vector<ControlPose> control, int order) {
    return PoseSpline(std::move(control), order);
}

namespace {

// Fitting evaluates on the closed domain: a sample exactly at the right
// boundary lands on the last span with s = 1, which is the same spline value
// without demanding an extra trailing control pose.
struct SpanEval {
    int span;
    double s;
};

SpanEval locate_closed(const PoseSpline& spline, double t) {
    const double x = (t - spline.control().front().t) / spline.knot_spacing() + 0.5 * spline.order();
    const int max_span = static_cast<int>(spline.control().size()) - 1;
    int span = static_cast<int>(std::floor(x));
    span = std::clamp(span, spline.order() - 1, max_span);
    const double s = std::clamp(x - span, 0.0, 1.0);
    return {span, s};
}

Eigen::VectorXd cumulative_at(const PoseSpline& spline, double s) {
    Eigen::VectorXd powers(spline.order());
    powers(0) = 1.0;
    for (int p = 1; p < spline.order(); ++p) powers(p) = powers(p - 1) * s;
    return spline.cumulative_basis() * powers;
}

Quat orientation_eval(const PoseSpline& spline, const SpanEval& at) {
    const Eigen::VectorXd lambda = cumulative_at(spline, at.s);
    const int base = at.span - spline.order() + 1;
    const auto& control = spline.control();
    Quat q = control[base].orientation;
    for (int j = 1; j < spline.order(); ++j) {
        const Vec3 delta =
            quat_log(control[base + j - 1].orientation.conjugate() * control[base + j].orientation);
        q = q * quat_exp(lambda(j) * delta);
    }
    q.normalize();
    return q;
}

// Design matrix row for one timestamp: standard basis weights of the order
// active control poses (w_j = lambda_j - lambda_{j+1}).
struct DesignRow {
    int base;
    Eigen::VectorXd weights;
};

DesignRow design_row(const PoseSpline& spline, double t) {
    const SpanEval at = locate_closed(spline, t);
    const Eigen::VectorXd lambda = cumulative_at(spline, at.s);
    const int order = spline.order();
    Eigen::VectorXd w(order);
    for (int j = 0; j < order - 1; ++j) w(j) = lambda(j) - lambda(j + 1);
    w(order - 1) = lambda(order - 1);
    return {at.span - order + 1, w};
}

}  // namespace

SplineFit fit_spline(const std::vector<Pose>& poses, double knot_spacing, int order) {
    if (static_cast<int>(poses.size()) < order + 1)
        throw TooFewControlPoses("need at least order+1 input poses to fit, got " +
                                 std::to_string(poses.size()));
    if (!(knot_spacing > 0.0)) throw Error("knot spacing must be positive");
    for (std::size_t i = 1; i < poses.size(); ++i)
        if (!(poses[i].t > poses[i - 1].t))
            throw NonMonotoneTimestamps("input pose timestamps must be strictly increasing (row " +
                                        std::to_string(i) + ")");

    const double t_first = poses.front().t;
    const double t_last = poses.back().t;

    // Lay out control timestamps so the spline domain covers all inputs.
    // domain_start = t0 + (order-1 - order/2)*dt and domain_end grows with the
    // control count.
    // Smallest layout whose closed domain [start, end] covers the inputs.
    const double t0 = t_first - (order - 1 - 0.5 * order) * knot_spacing;
    auto domain_end_for = [&](int n) { return t0 + (n - 0.5 * order) * knot_spacing; };
    int n_control = std::max(
        order, static_cast<int>(std::ceil((t_last - t0) / knot_spacing + 0.5 * order - 1e-9)));
    while (domain_end_for(n_control) < t_last - 1e-12) ++n_control;

    std::vector<ControlPose> control(n_control);
    for (int i = 0; i < n_control; ++i) control[i].t = t0 + i * knot_spacing;

    // Seed orientations from the chronologically nearest input pose, with
    // hemisphere alignment along the sequence; these are the chart centers for
    // the orientation solve.
    std::size_t cursor = 0;
    for (int i = 0; i < n_control; ++i) {
        while (cursor + 1 < poses.size() &&
               std::abs(poses[cursor + 1].t - control[i].t) <= std::abs(poses[cursor].t - control[i].t))
            ++cursor;
        control[i].orientation = poses[cursor].orientation.normalized();
        if (i > 0 && control[i].orientation.coeffs().dot(control[i - 1].orientation.coeffs()) < 0.0)
            control[i].orientation.coeffs() = -control[i].orientation.coeffs();
    }

    PoseSpline layout(control, order);

    // Sparse banded least squares for the positions; the same normal matrix is
    // reused for the orientation chart updates.
    const std::size_t m = poses.size();
    std::vector<DesignRow> rows;
    rows.reserve(m);
    std::vector<int> support(n_control, 0);
    for (const Pose& p : poses) {
        rows.push_back(design_row(layout, p.t));
        for (int j = 0; j < order; ++j)
            if (std::abs(rows.back().weights(j)) > 0.0) ++support[rows.back().base + j];
    }
    for (int i = 0; i < n_control; ++i)
        if (support[i] == 0)
            throw DegenerateSystem("control pose " + std::to_string(i) +
                                   " is unsupported by any input sample");

    Eigen::SparseMatrix<double> a(static_cast<int>(m), n_control);
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(m * order);
        for (std::size_t r = 0; r < m; ++r)
            for (int j = 0; j < order; ++j)
                trips.emplace_back(static_cast<int>(r), rows[r].base + j, rows[r].weights(j));
        a.setFromTriplets(trips.begin(), trips.end());
    }
    Eigen::SparseMatrix<double> ata = Eigen::SparseMatrix<double>(a.transpose()) * a;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ata);
    if (solver.info() != Eigen::Success)
        throw DegenerateSystem("normal equations are rank deficient");

    Eigen::MatrixXd targets(m, 3);
    for (std::size_t r = 0; r < m; ++r) targets.row(r) = poses[r].position.transpose();
    Eigen::MatrixXd rhs = a.transpose() * targets;
    Eigen::MatrixXd x = solver.solve(rhs);
    // LDLT of a singular system can still "succeed" with junk pivots; verify
    // the solve actually satisfies the normal equations.
    const double resid = (ata * x - rhs).norm();
    if (!x.allFinite() || resid > 1e-6 * (rhs.norm() + 1.0))
        throw DegenerateSystem("normal equations are numerically singular");

    for (int i = 0; i < n_control; ++i) control[i].position = x.row(i).transpose();

    // Orientation: Gauss-Newton steps in the local log charts, same design
    // matrix, three passes.
    for (int pass = 0; pass < 3; ++pass) {
        PoseSpline current(control, order);
        Eigen::MatrixXd logs(m, 3);
        for (std::size_t r = 0; r < m; ++r) {
            const Quat predicted = orientation_eval(current, locate_closed(current, poses[r].t));
            logs.row(r) = quat_log(predicted.conjugate() * poses[r].orientation).transpose();
        }
        Eigen::MatrixXd theta = solver.solve(a.transpose() * logs);
        if (!theta.allFinite()) break;
        for (int i = 0; i < n_control; ++i) {
            control[i].orientation = control[i].orientation * quat_exp(theta.row(i).transpose());
            control[i].orientation.normalize();
        }
    }

    PoseSpline fitted(control, order);
    double pos_sq = 0.0;
    double ang_sq = 0.0;
    for (const Pose& p : poses) {
        const SpanEval at = locate_closed(fitted, p.t);
        const Eigen::VectorXd lambda = cumulative_at(fitted, at.s);
        const int base = at.span - order + 1;
        Vec3 pos = fitted.control()[base].position;
        for (int j = 1; j < order; ++j)
            pos += lambda(j) *
                   (fitted.control()[base + j].position - fitted.control()[base + j - 1].position);
        pos_sq += (pos - p.position).squaredNorm();
        ang_sq +=
            quat_log(orientation_eval(fitted, at).conjugate() * p.orientation).squaredNorm();
    }
    return {std::move(fitted), std::sqrt(pos_sq / m), std::sqrt(ang_sq / m)};
}

PairedSamples pair_samples(const PoseSpline& spline, const std::vector<RangeSample>& ranges) {
    PairedSamples out;
    out.samples.reserve(ranges.size());
    for (const RangeSample& r : ranges) {
        if (!(r.range >= 0.0) || !std::isfinite(r.range) || !std::isfinite(r.t)) {
            ++out.dropped_invalid;
            continue;
        }
        if (!spline.in_domain(r.t)) {
            ++out.dropped_out_of_domain;
            continue;
        }
        out.samples.push_back({r.t, spline.position_at(r.t), r.anchor_id, r.range});
    }
    std::stable_sort(out.samples.begin(), out.samples.end(),
                     [](const InterpolatedSample& a, const InterpolatedSample& b) { return a.t < b.t; });
    return out;
}

}  // namespace uwbcal
