// Independent reference implementations used only by tests. These avoid the
// library's evaluation paths on purpose: the spline oracle runs the textbook
// De Boor recursion on an explicit knot vector, and the GP oracle inverts the
// dense kernel matrix directly.
#pragma once

#include "uwbcal/gp.hpp"
#include "uwbcal/spline.hpp"
#include "uwbcal/types.hpp"

#include <cmath>
#include <vector>

namespace oracle {

// De Boor recursive evaluation of a uniform B-spline through the given
// control points. Control point j of an order-N spline with timestamps
// t_j = t0 + j*dt spans knots kappa_j .. kappa_{j+N} with
// kappa_m = t0 + (m - N/2)*dt (Greville layout: control timestamps are the
// averages of their interior knots).
inline uwbcal::Vec3 de_boor_position(const std::vector<uwbcal::ControlPose>& control, int order,
                                     double t) {
    const int degree = order - 1;
    const int n = static_cast<int>(control.size());
    const double t0 = control.front().t;
    const double dt = control[1].t - control[0].t;

    auto knot = [&](int m) { return t0 + (m - 0.5 * order) * dt; };

    // Knot span index m with knot(m) <= t < knot(m+1), valid m in
    // [degree, n-1].
    int m = static_cast<int>(std::floor((t - t0) / dt + 0.5 * order));
    if (m < degree) m = degree;
    if (m > n - 1) m = n - 1;

    // d[j] starts as control[m - degree + j], j = 0..degree.
    std::vector<uwbcal::Vec3> d(order);
    for (int j = 0; j <= degree; ++j) d[j] = control[m - degree + j].position;

    for (int r = 1; r <= degree; ++r) {
        for (int j = degree; j >= r; --j) {
            const int i = m - degree + j;
            const double denom = knot(i + order - r) - knot(i);
            const double alpha = (t - knot(i)) / denom;
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
        }
    }
    return d[degree];
}

// Standard (non-cumulative) basis function values b_0..b_{N-1} on the active
// window at time t, extracted from the De Boor oracle by evaluating with unit
// control vectors.
inline std::vector<double> de_boor_basis(int order, int n_control, double t0, double dt, double t) {
    std::vector<double> basis;
    const int degree = order - 1;
    int m = static_cast<int>(std::floor((t - t0) / dt + 0.5 * order));
    if (m < degree) m = degree;
    if (m > n_control - 1) m = n_control - 1;
    const int base = m - degree;
    for (int j = 0; j < order; ++j) {
        std::vector<uwbcal::ControlPose> unit(n_control);
        for (int i = 0; i < n_control; ++i) unit[i].t = t0 + i * dt;
        unit[base + j].position = uwbcal::Vec3(1.0, 0.0, 0.0);
        basis.push_back(de_boor_position(unit, order, t).x());
    }
    return basis;
}

struct GpPrediction {
    double mean = 0.0;
    double var = 0.0;
};

// Dense-inverse GP prediction: mean + k*^T (K + s2 I)^{-1} (y - mean),
// var = k** - k*^T (K + s2 I)^{-1} k*.
inline GpPrediction gp_dense(const uwbcal::KernelParams& params, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& y, double mean, const uwbcal::Vec3& p,
                             double extra_noise = 0.0) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            k(i, j) = uwbcal::kernel(params, x.row(i).transpose(), x.row(j).transpose());
    k.diagonal().array() += params.noise_variance + extra_noise;
    const Eigen::MatrixXd kinv = k.inverse();

    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ks(i) = uwbcal::kernel(params, p, x.row(i).transpose());

    GpPrediction out;
    const Eigen::VectorXd centered = y.array() - mean;
    out.mean = mean + ks.dot(kinv * centered);
    out.var = params.signal_variance - ks.dot(kinv * ks);
    return out;
}

inline double gp_dense_lml(const uwbcal::KernelParams& params, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& y, double mean) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            k(i, j) = uwbcal::kernel(params, x.row(i).transpose(), x.row(j).transpose());
    k.diagonal().array() += params.noise_variance;
    const Eigen::VectorXd centered = y.array() - mean;
    const double quad = centered.dot(k.inverse() * centered);
    const double logdet = std::log(k.determinant());
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
}

}  // namespace oracle
