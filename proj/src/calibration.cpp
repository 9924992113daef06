#include "uwbcal/calibration.hpp"

#include "uwbcal/errors.hpp"
#include "uwbcal/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace uwbcal {

void CalibrationConfig::validate() const {
    if (top_k < 1) throw Error("top_k must be >= 1");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (!(shrink_factor > 0.0 && shrink_factor < 1.0))
        throw Error("shrink_factor must be in (0, 1)");
    if (layers < 1) throw Error("layers must be >= 1");
    if (samples_per_layer < 1) throw Error("samples_per_layer must be >= 1");
    if (!(convergence_tol > 0.0)) throw Error("convergence_tol must be > 0");
    if (min_samples < 1) throw Error("min_samples must be >= 1");
    if (!(planar_height_extent >= 0.0)) throw Error("planar_height_extent must be >= 0");
}

std::vector<InterpolatedSample> stratified_subsample(const std::vector<InterpolatedSample>& samples,
                                                     int layers, int per_layer,
                                                     std::uint64_t seed) {
    if (samples.empty()) throw EmptyInput("no samples to subsample");
    if (layers < 1) throw Error("layers must be >= 1");
    if (per_layer < 1) throw Error("per_layer must be >= 1");

    double lo = samples.front().range;
    double hi = lo;
    for (const auto& s : samples) {
        lo = std::min(lo, s.range);
        hi = std::max(hi, s.range);
    }

    std::vector<std::vector<std::size_t>> strata(layers);
    if (hi - lo <= 0.0 || layers == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) strata[0].push_back(i);
    } else {
        const double width = (hi - lo) / layers;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            int b = static_cast<int>((samples[i].range - lo) / width);
            b = std::clamp(b, 0, layers - 1);
            strata[b].push_back(i);
        }
    }

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (const auto& stratum : strata) {
        if (stratum.empty()) continue;
        for (const std::size_t k : rng.sample_indices(stratum.size(), per_layer))
            chosen.push_back(stratum[k]);
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<InterpolatedSample> out;
    out.reserve(chosen.size());
    for (const std::size_t i : chosen) out.push_back(samples[i]);
    return out;
}

std::vector<Vec3> cuboid_grid(const Aabb& bounds, double resolution) {
    const Vec3 ext = bounds.extent();
    if (!(resolution > 0.0)) throw Error("grid resolution must be > 0");
    if (!(ext.x() > 0.0) || !(ext.y() > 0.0) || ext.z() < 0.0)
        throw DegenerateBox("search box must have positive x/y extent (z may be flat)");

    int counts[3];
    for (int i = 0; i < 3; ++i)
        counts[i] = static_cast<int>(std::floor(ext(i) / resolution + 1e-12)) + 1;

    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(counts[0]) * counts[1] * counts[2]);
    auto coord = [&](int axis, int k) {
        if (counts[axis] == 1) return 0.5 * (bounds.min(axis) + bounds.max(axis));
        return bounds.min(axis) + ext(axis) * k / (counts[axis] - 1);
    };
    for (int ix = 0; ix < counts[0]; ++ix)
        for (int iy = 0; iy < counts[1]; ++iy)
            for (int iz = 0; iz < counts[2]; ++iz)
                pts.emplace_back(coord(0, ix), coord(1, iy), coord(2, iz));
    return pts;
}

namespace {

// Singular values of the centered position cloud, descending.
Vec3 position_singular_values(const std::vector<InterpolatedSample>& samples) {
    Vec3 mean = Vec3::Zero();
    for (const auto& s : samples) mean += s.position;
    mean /= static_cast<double>(samples.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& s : samples) {
        const Vec3 d = s.position - mean;
        scatter += d * d.transpose();
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(scatter);
    return svd.singularValues().cwiseSqrt();
}

// Drops samples whose range deviates from the spatially nearest sample's
// range beyond the 99.5th percentile. Grid hash keeps this near linear.
std::vector<InterpolatedSample> filter_outliers(const std::vector<InterpolatedSample>& samples) {
    const std::size_t n = samples.size();
    if (n < 20) return samples;

    std::vector<Vec3> pts;
    pts.reserve(n);
    for (const auto& s : samples) pts.push_back(s.position);
    const Aabb box = Aabb::of_points(pts);
    const double cell = std::max(box.extent().maxCoeff() / 64.0, 1e-6);

    auto key = [&](const Vec3& p) {
        const auto gx = static_cast<std::int64_t>(std::floor((p.x() - box.min.x()) / cell));
        const auto gy = static_cast<std::int64_t>(std::floor((p.y() - box.min.y()) / cell));
        const auto gz = static_cast<std::int64_t>(std::floor((p.z() - box.min.z()) / cell));
        return (gx * 73856093) ^ (gy * 19349663) ^ (gz * 83492791);
    };
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) cells[key(pts[i])].push_back(i);

    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = n;
        const Vec3& p = pts[i];
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const Vec3 probe = p + cell * Vec3(dx, dy, dz);
                    const auto it = cells.find(key(probe));
                    if (it == cells.end()) continue;
                    for (const std::size_t j : it->second) {
                        if (j == i) continue;
                        const double d2 = (pts[j] - p).squaredNorm();
                        if (d2 < best) {
                            best = d2;
                            best_j = j;
                        }
                    }
                }
        if (best_j < n) score[i] = std::abs(samples[i].range - samples[best_j].range);
    }

    std::vector<double> sorted = score;
    std::sort(sorted.begin(), sorted.end());
    const double cutoff = sorted[static_cast<std::size_t>(0.995 * (n - 1))];

    std::vector<InterpolatedSample> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (score[i] <= cutoff) kept.push_back(samples[i]);
    return kept;
}

}  // namespace

AnchorEstimate calibrate_anchor(const std::vector<InterpolatedSample>& samples,
                                const CalibrationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (static_cast<int>(samples.size()) < cfg.min_samples)
        throw TooFewSamples("anchor has " + std::to_string(samples.size()) +
                            " samples, need at least " + std::to_string(cfg.min_samples));

    const Vec3 sv = position_singular_values(samples);
    if (sv(1) < 1e-6 * std::max(sv(0), 1e-12) || sv(0) <= 0.0)
        throw DegenerateGeometry("sample positions are collinear; anchor unobservable off the line");

    const std::vector<InterpolatedSample> data = cfg.outlier_filter ? filter_outliers(samples) : samples;

    std::vector<Vec3> pts;
    pts.reserve(data.size());
    double max_range = 0.0;
    for (const auto& s : data) {
        pts.push_back(s.position);
        max_range = std::max(max_range, s.range);
    }
    const Aabb traj_box = Aabb::of_points(pts);

    // Initial search region: the trajectory bounding box inflated by the
    // largest measured range; the anchor cannot lie farther out. A nearly
    // planar trajectory cannot observe anchor height, so z degenerates to a
    // configured slab instead.
    Aabb box = traj_box.inflated(max_range);
    const bool planar = traj_box.extent().z() < cfg.planar_z_threshold;
    if (planar) {
        box.min.z() = cfg.planar_height - cfg.planar_height_extent;
        box.max.z() = cfg.planar_height + cfg.planar_height_extent;
    }

    double resolution = cfg.grid_resolution > 0.0 ? cfg.grid_resolution
                                                  : box.extent().maxCoeff() / 20.0;

    // Hyperparameters are fixed across iterations; the signal variance
    // default scales with the data extent.
    KernelParams kp = cfg.kernel;
    if (kp.signal_variance <= 0.0) {
        const double extent = traj_box.diagonal() + 2.0 * max_range;
        kp.signal_variance = 0.0625 * extent * extent;  // (0.25 * extent)^2
    }

    AnchorEstimate est;
    est.anchor_id = data.empty() ? 0 : data.front().anchor_id;

    Vec3 center = box.center();
    std::optional<GpModel> model;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        const std::vector<InterpolatedSample> sub =
            stratified_subsample(data, cfg.layers, cfg.samples_per_layer,
                                 Rng::mix(seed, 1000u + static_cast<std::uint64_t>(iter)));

        Eigen::MatrixXd x(sub.size(), 3);
        Eigen::VectorXd y(sub.size());
        for (std::size_t i = 0; i < sub.size(); ++i) {
            x.row(i) = sub[i].position.transpose();
            y(i) = sub[i].range;
        }
        const double mean = cfg.zero_mean ? 0.0 : y.mean();
        model = GpModel::fit(kp, x, y, mean);
        est.n_samples_used = static_cast<int>(sub.size());

        const std::vector<Vec3> grid = cuboid_grid(box, resolution);
        std::vector<std::pair<double, std::size_t>> scored(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g)
            scored[g] = {model->predict_mean(grid[g]), g};
        const std::size_t k = std::min<std::size_t>(cfg.top_k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + k, scored.end());

        Vec3 avg = Vec3::Zero();
        for (std::size_t i = 0; i < k; ++i) avg += grid[scored[i].second];
        avg /= static_cast<double>(k);

        IterationRecord rec;
        rec.box = box;
        rec.grid_resolution = resolution;
        rec.best_candidate = grid[scored.front().second];
        rec.averaged_estimate = avg;
        rec.predicted_range = model->predict_mean(avg);
        rec.n_grid = static_cast<int>(grid.size());
        est.iterations.push_back(rec);

        const double moved = (avg - center).norm();
        center = avg;

        // Shrink around the new center, clamped so the next box stays inside
        // the current one, and refine the lattice.
        const Vec3 half = 0.5 * cfg.shrink_factor * box.extent();
        Vec3 c = center;
        for (int axis = 0; axis < 3; ++axis)
            c(axis) = std::clamp(c(axis), box.min(axis) + half(axis), box.max(axis) - half(axis));
        box = Aabb{c - half, c + half};
        resolution *= 0.5;

        if (iter > 0 && moved < cfg.convergence_tol) {
            est.converged = true;
            break;
        }
    }

    const IterationRecord& last = est.iterations.back();
    est.position = last.averaged_estimate;
    est.predicted_range_at_estimate = last.predicted_range;
    est.final_grid_resolution = last.grid_resolution;
    // Keep the estimate no worse than the best grid candidate of the final
    // iteration.
    if (model) {
        const double best_pred = model->predict_mean(last.best_candidate);
        if (best_pred < est.predicted_range_at_estimate) {
            est.position = last.best_candidate;
            est.predicted_range_at_estimate = best_pred;
        }
    }

    double sq = 0.0;
    for (const auto& s : data) {
        const double r = s.range - (s.position - est.position).norm();
        sq += r * r;
    }
    est.residual_rms = data.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(data.size()));
    return est;
}

CalibrationRun calibrate_all(const std::vector<InterpolatedSample>& samples,
                             const CalibrationConfig& cfg, std::uint64_t seed, int jobs) {
    std::map<int, std::vector<InterpolatedSample>> grouped;
    for (const auto& s : samples) grouped[s.anchor_id].push_back(s);

    std::vector<int> ids;
    ids.reserve(grouped.size());
    for (const auto& [id, v] : grouped) ids.push_back(id);

    CalibrationRun run;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= ids.size()) return;
            const int id = ids[i];
            try {
                AnchorEstimate est = calibrate_anchor(
                    grouped[id], cfg, Rng::mix(seed, static_cast<std::uint64_t>(id)));
                est.anchor_id = id;
                std::lock_guard<std::mutex> lock(mu);
                run.estimates.emplace(id, std::move(est));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                run.failures.emplace(id, e.what());
            }
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1 || ids.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(ids.size()));
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return run;
}

TrilaterationResult trilaterate_ls(const std::vector<InterpolatedSample>& samples) {
    if (samples.size() < 4)
        throw TooFewSamples("trilateration needs at least 4 samples, got " +
                            std::to_string(samples.size()));

    TrilaterationResult res;
    const Vec3 sv = position_singular_values(samples);
    if (sv(2) < 1e-6 * std::max(sv(0), 1e-12)) res.degenerate = true;

    Vec3 a = Vec3::Zero();
    for (const auto& s : samples) a += s.position;
    a /= static_cast<double>(samples.size());

    auto cost_at = [&](const Vec3& q) {
        double c = 0.0;
        for (const auto& s : samples) {
            const double r = (s.position - q).norm() - s.range;
            c += r * r;
        }
        return c;
    };

    double cost = cost_at(a);
    double lambda = 1e-6;
    int iter = 0;
    bool converged = false;
    for (; iter < 100; ++iter) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Vec3 jtr = Vec3::Zero();
        for (const auto& s : samples) {
            const Vec3 d = a - s.position;
            const double norm = std::max(d.norm(), 1e-12);
            const Vec3 j = d / norm;
            const double r = norm - s.range;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if (jtr.lpNorm<Eigen::Infinity>() < 1e-10 * (1.0 + cost)) {
            converged = true;
            break;
        }

        bool stepped = false;
        for (int damp = 0; damp < 16; ++damp) {
            Eigen::Matrix3d m = jtj;
            m.diagonal().array() += lambda;
            const Vec3 delta = m.ldlt().solve(-jtr);
            const double new_cost = cost_at(a + delta);
            const double predicted = -jtr.dot(delta) + lambda * delta.squaredNorm();
            if (new_cost <= cost) {
                a += delta;
                const bool small_step = delta.norm() < 1e-8 * (1.0 + a.norm());
                const bool small_gain = cost - new_cost < 1e-12 * (1.0 + cost);
                // Marquardt gain ratio: poor agreement with the linear model
                // raises the damping even on accepted steps, which kills the
                // overshoot oscillation in weakly constrained directions.
                const double rho = predicted > 0.0 ? (cost - new_cost) / predicted : 0.0;
                cost = new_cost;
                if (rho > 0.75)
                    lambda = std::max(lambda / 3.0, 1e-12);
                else if (rho < 0.25)
                    lambda = std::min(lambda * 4.0, 1e12);
                stepped = true;
                if (small_step || small_gain) converged = true;
                break;
            }
            lambda = std::min(lambda * 10.0, 1e14);
        }
        if (!stepped) converged = true;  // no descent direction left
        if (converged) break;
    }
    if (!converged) throw NonConvergence("trilateration did not converge within 100 iterations");

    res.position = a;
    res.iterations = iter + 1;
    res.residual_rms = std::sqrt(cost / static_cast<double>(samples.size()));
    return res;
}

}  // namespace uwbcal
