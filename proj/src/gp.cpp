#include "uwbcal/gp.hpp"

#include "uwbcal/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <string>

namespace uwbcal {

void KernelParams::validate() const {
    if (!(length_scale > 0.0)) throw Error("kernel length_scale must be > 0");
    if (!(signal_variance >= 0.0)) throw Error("kernel signal_variance must be >= 0");
    if (!(noise_variance >= 0.0)) throw Error("kernel noise_variance must be >= 0");
    if (nu != 0.5 && nu != 1.5 && nu != 2.5)
        throw Error("kernel nu must be one of 0.5, 1.5, 2.5");
}

double kernel(const KernelParams& params, const Vec3& a, const Vec3& b) {
    const double r = (a - b).norm();
    const double l = params.length_scale;
    if (params.nu == 0.5) {
        return params.signal_variance * std::exp(-r / l);
    }
    if (params.nu == 1.5) {
        const double z = std::sqrt(3.0) * r / l;
        return params.signal_variance * (1.0 + z) * std::exp(-z);
    }
    const double z = std::sqrt(5.0) * r / l;
    return params.signal_variance * (1.0 + z + z * z / 3.0) * std::exp(-z);
}

GpModel GpModel::fit(const KernelParams& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     double mean) {
    params.validate();
    const Eigen::Index n = X.rows();
    if (n < 1) throw DimensionMismatch("GP fit needs at least one training point");
    if (X.cols() != 3) throw DimensionMismatch("training positions must be n x 3");
    if (y.size() != n) throw DimensionMismatch("targets size does not match positions");
    if (!X.allFinite() || !y.allFinite()) throw Error("GP training data must be finite");

    // With zero observation noise, exact duplicate rows make the Gram matrix
    // singular by construction; report that instead of silently jittering.
    if (params.noise_variance == 0.0) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j)
                if ((X.row(i) - X.row(j)).norm() == 0.0)
                    throw NotPositiveDefinite(
                        "duplicate training positions with zero noise variance (rows " +
                        std::to_string(i) + ", " + std::to_string(j) + ")");
    }

    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        gram(i, i) = params.signal_variance;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = kernel(params, X.row(i).transpose(), X.row(j).transpose());
            gram(i, j) = v;
            gram(j, i) = v;
        }
    }

    GpModel model;
    model.params_ = params;
    model.x_ = X;
    model.y_ = y;
    model.mean_ = mean;
    model.centered_ = y.array() - mean;

    double noise = params.noise_variance;
    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::MatrixXd k = gram;
        k.diagonal().array() += noise;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() == Eigen::Success) {
            model.chol_ = llt.matrixL();
            model.alpha_ = llt.solve(model.centered_);
            model.noise_used_ = noise;
            return model;
        }
        // One retry with jitter scaled to the signal variance.
        noise += 1e-6 * std::max(params.signal_variance, 1e-12);
    }
    throw NotPositiveDefinite("kernel matrix not positive definite even after jitter; "
                              "noise variance may be too small or points duplicated");
}

Eigen::VectorXd GpModel::kernel_vector(const Vec3& p) const {
    Eigen::VectorXd k(x_.rows());
    for (Eigen::Index i = 0; i < x_.rows(); ++i)
        k(i) = kernel(params_, p, x_.row(i).transpose());
    return k;
}

double GpModel::predict_mean(const Vec3& p) const {
    return mean_ + kernel_vector(p).dot(alpha_);
}

double GpModel::predict_var(const Vec3& p) const {
    const Eigen::VectorXd k = kernel_vector(p);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
    const double var = params_.signal_variance - v.squaredNorm();
    return std::max(0.0, var);
}

double GpModel::log_marginal_likelihood() const {
    const double n = static_cast<double>(x_.rows());
    double log_det_half = 0.0;
    for (Eigen::Index i = 0; i < chol_.rows(); ++i) log_det_half += std::log(chol_(i, i));
    return -0.5 * centered_.dot(alpha_) - log_det_half - 0.5 * n * std::log(2.0 * M_PI);
}

KernelParams select_hyperparams(const std::vector<KernelParams>& candidates,
                                const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double mean) {
    if (candidates.empty()) throw EmptyInput("hyperparameter grid is empty");
    const KernelParams* best = nullptr;
    double best_lml = -std::numeric_limits<double>::infinity();
    for (const KernelParams& c : candidates) {
        try {
            const double lml = GpModel::fit(c, X, y, mean).log_marginal_likelihood();
            if (lml > best_lml) {
                best_lml = lml;
                best = &c;
            }
        } catch (const NotPositiveDefinite&) {
            continue;
        }
    }
    if (!best) throw NotPositiveDefinite("no hyperparameter candidate produced a valid fit");
    return *best;
}

}  // namespace uwbcal
