#pragma once

#include "uwbcal/gp.hpp"
#include "uwbcal/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uwbcal {

struct CalibrationConfig {
    double grid_resolution = -1.0;  // meters per axis step; <= 0 picks extent/20
    int top_k = 10;
    int max_iterations = 8;
    double shrink_factor = 0.5;     // per-iteration cuboid size multiplier
    int layers = 4;                 // strata for layered sampling
    int samples_per_layer = 75;
    double convergence_tol = 0.05;  // meters
    KernelParams kernel{1.5, 30.0, -1.0, 0.09};  // signal variance < 0: auto from data extent
    int min_samples = 30;

    // Prior mean: empirical mean of the training ranges unless zero_mean.
    bool zero_mean = false;
    // Drop ranges whose deviation from the nearest-neighbor range is beyond
    // the 99.5th percentile before fitting.
    bool outlier_filter = true;

    // When the trajectory z extent is below planar_z_threshold the search
    // cuboid degenerates to a slab at planar_height +/- planar_height_extent.
    double planar_z_threshold = 1.0;
    double planar_height = 0.0;
    double planar_height_extent = 5.0;

    // If signal_variance <= 0 it is derived as (0.25 * sample extent)^2.
    void validate() const;

    // Variant selected by --strict-paper: zero prior mean, no outlier filter.
    CalibrationConfig strict_paper() const {
        CalibrationConfig c = *this;
        c.zero_mean = true;
        c.outlier_filter = false;
        return c;
    }
};

struct IterationRecord {
    Aabb box;
    double grid_resolution = 0.0;
    Vec3 best_candidate = Vec3::Zero();     // grid point with the smallest predicted range
    Vec3 averaged_estimate = Vec3::Zero();  // mean of the top-k candidates
    double predicted_range = 0.0;           // GP mean at the averaged estimate
    int n_grid = 0;
};

struct AnchorEstimate {
    int anchor_id = 0;
    Vec3 position = Vec3::Zero();
    std::vector<IterationRecord> iterations;
    bool converged = false;
    int n_samples_used = 0;      // training points per GP fit
    double residual_rms = 0.0;   // RMS of (measured - |p - estimate|) over all samples
    double predicted_range_at_estimate = 0.0;
    double final_grid_resolution = 0.0;
};

// Bins samples into `layers` equal-width strata by measured range and draws
// up to per_layer from each without replacement. Deterministic per seed.
// Throws EmptyInput.
std::vector<InterpolatedSample> stratified_subsample(const std::vector<InterpolatedSample>& samples,
                                                     int layers, int per_layer, std::uint64_t seed);

// Regular lattice over the box including both corners on each axis;
// points per axis = floor(extent / resolution) + 1. The z extent may be zero.
// Throws DegenerateBox.
std::vector<Vec3> cuboid_grid(const Aabb& bounds, double resolution);

// Iterative GP calibration of one anchor: subsample, fit, scan the cuboid
// grid, average the top-k lowest predicted ranges, shrink, repeat.
// Throws TooFewSamples / DegenerateGeometry; GP failures propagate.
AnchorEstimate calibrate_anchor(const std::vector<InterpolatedSample>& samples,
                                const CalibrationConfig& cfg, std::uint64_t seed);

struct CalibrationRun {
    std::map<int, AnchorEstimate> estimates;
    std::map<int, std::string> failures;  // anchor id -> error message
};

// Groups samples by anchor and calibrates each independently (optionally in
// parallel); per-anchor failures are collected, not propagated.
CalibrationRun calibrate_all(const std::vector<InterpolatedSample>& samples,
                             const CalibrationConfig& cfg, std::uint64_t seed, int jobs = 1);

struct TrilaterationResult {
    Vec3 position = Vec3::Zero();
    bool degenerate = false;  // coplanar samples: mirror ambiguity
    int iterations = 0;
    double residual_rms = 0.0;
};

// Gauss-Newton least squares on sum(|p_i - a| - range_i)^2 from the sample
// centroid. Throws TooFewSamples / NonConvergence.
TrilaterationResult trilaterate_ls(const std::vector<InterpolatedSample>& samples);

}  // namespace uwbcal
