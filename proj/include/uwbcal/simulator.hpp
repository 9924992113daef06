#pragma once

#include "uwbcal/rng.hpp"
#include "uwbcal/types.hpp"
#include "uwbcal/zones.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uwbcal {

/// Synthetic scene: anchors at known positions plus axis-aligned box
/// occluders, all inside the scene bounds.
struct Scene {
    std::map<int, Vec3> anchors;
    std::vector<Aabb> occluders;
    Aabb bounds;

    void validate() const;  // throws Error on duplicate ids / out-of-bounds anchors
};

/// TOF range measurement model. NLoS adds a non-negative extra path delay;
/// dropout probabilities differ between LoS and NLoS.
struct RangingModel {
    double gaussian_sigma = 0.3;     // meters
    double los_bias = 0.0;           // constant additive, meters
    double nlos_bias_mean = 2.0;     // meters
    double nlos_bias_sigma = 0.5;    // meters
    double dropout_prob_los = 0.0;
    double dropout_prob_nlos = 0.5;
    double max_range = 800.0;        // meters
    double rate_hz = 20.0;           // per-anchor measurement rate

    void validate() const;
};

enum class TrajectoryKind { Lawnmower, Loop, RandomWalk };

TrajectoryKind trajectory_kind_from_string(const std::string& s);  // throws ParseError

// Smooth timestamped poses inside `bounds` at `pose_rate_hz`, orientation
// following the heading. Deterministic for a fixed seed.
std::vector<Pose> generate_trajectory(TrajectoryKind kind, const Aabb& bounds, double speed,
                                      double duration, std::uint64_t seed,
                                      double pose_rate_hz = 10.0);

// True iff the segment p -> a intersects any occluder box (slab test).
bool is_occluded(const Scene& scene, const Vec3& p, const Vec3& a);

struct SimulatedRange {
    double t = 0.0;
    int anchor_id = 0;
    double range = 0.0;
    bool occluded = false;  // simulation truth, not part of the CSV output
};

// Range measurements for every anchor at the model rate along the trajectory
// (linear interpolation between poses). Output is sorted by (t, anchor_id)
// and deterministic per seed.
std::vector<SimulatedRange> simulate_ranges(const Scene& scene, const RangingModel& model,
                                            const std::vector<Pose>& trajectory,
                                            std::uint64_t seed);

std::vector<RangeSample> to_range_samples(const std::vector<SimulatedRange>& sim);

/// Synthetic descriptor generator: a locally smooth random field over
/// position, sampled along the trajectory every `spacing` meters. Descriptors
/// whose position falls in `duplicate_to` copy the field of the corresponding
/// point in `duplicate_from` (same offset from the box center), which builds
/// repetitive scenes with duplicated patches.
struct DescriptorFieldConfig {
    int dim = 16;
    double spacing = 8.0;          // meters along path between extractions
    double smoothness = 40.0;      // field length scale, meters
    double noise = 0.02;           // per-descriptor observation noise
    bool duplicate = false;
    Aabb duplicate_from;
    Aabb duplicate_to;
};

class DescriptorField {
public:
    DescriptorField(const DescriptorFieldConfig& cfg, std::uint64_t seed);

    // Field value at a position (before duplication remap and noise).
    std::vector<double> field_at(const Vec3& p) const;

    // Field value with the duplicate_to -> duplicate_from remap applied.
    std::vector<double> value_at(const Vec3& p) const;

    // Noisy observation, e.g. a query descriptor extracted at runtime.
    std::vector<double> observe(const Vec3& p, Rng& rng) const;

    const DescriptorFieldConfig& config() const { return cfg_; }

private:
    DescriptorFieldConfig cfg_;
    std::vector<Vec3> frequencies_;
    std::vector<double> phases_;
};

std::vector<Descriptor> extract_descriptors(const DescriptorField& field,
                                            const std::vector<Pose>& trajectory,
                                            std::uint64_t seed);

}  // namespace uwbcal
