#pragma once

#include "uwbcal/types.hpp"

#include <vector>

namespace uwbcal {

/// Matérn kernel hyperparameters. Smoothness is restricted to the
/// half-integers with closed-form kernels (1/2, 3/2, 5/2).
struct KernelParams {
    double nu = 1.5;
    double length_scale = 30.0;     // meters
    double signal_variance = 1.0;   // meters^2
    double noise_variance = 0.09;   // meters^2

    void validate() const;  // throws Error on out-of-range values
};

double kernel(const KernelParams& params, const Vec3& a, const Vec3& b);

/// Exact GP regression over 3D positions: range field f(p) ~ GP(m, k).
/// Immutable after fit; predictions are pure.
class GpModel {
public:
    // X: n x 3 training positions, y: n training ranges. The constant prior
    // mean is subtracted from y before the solve and re-added at prediction.
    // Throws NotPositiveDefinite / DimensionMismatch.
    static GpModel fit(const KernelParams& params, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& y, double mean);

    double predict_mean(const Vec3& p) const;
    double predict_var(const Vec3& p) const;  // clamped at 0 from below

    double log_marginal_likelihood() const;

    const KernelParams& params() const { return params_; }
    const Eigen::MatrixXd& training_positions() const { return x_; }
    const Eigen::VectorXd& training_targets() const { return y_; }
    double prior_mean() const { return mean_; }
    double effective_noise_variance() const { return noise_used_; }
    int size() const { return static_cast<int>(x_.rows()); }

private:
    GpModel() = default;

    Eigen::VectorXd kernel_vector(const Vec3& p) const;

    KernelParams params_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;         // raw targets
    Eigen::VectorXd centered_;  // y - mean
    Eigen::MatrixXd chol_;      // lower factor of K + sigma^2 I
    Eigen::VectorXd alpha_;     // (K + sigma^2 I)^{-1} (y - mean)
    double mean_ = 0.0;
    double noise_used_ = 0.0;   // after any jitter retry
};

/// Picks the candidate with the highest log marginal likelihood. Candidates
/// with failing factorizations are skipped; throws if none survive.
KernelParams select_hyperparams(const std::vector<KernelParams>& candidates,
                                const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double mean);

}  // namespace uwbcal
