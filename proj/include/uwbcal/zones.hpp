#pragma once

#include "uwbcal/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uwbcal {

/// Fixed-length place descriptor with the pose it was extracted at. The
/// vector contents are opaque to the index; matching is Euclidean nearest
/// neighbor.
struct Descriptor {
    int id = 0;
    std::vector<double> vec;
    Pose pose;
};

struct CandidateSet {
    std::vector<int> ids;  // sorted ascending
    bool used_fallback = false;
    int reporting_anchors = 0;
};

struct MatchResult {
    int id = 0;
    double score = 0.0;  // negative descriptor distance
    Pose pose;
    bool gated_fallback = false;
};

/// Buckets prior descriptors into per-anchor range zones. Zone i of anchor j
/// is the annulus r_{i-1} <= |p - a_j| < r_i with r_i = i * zone_width,
/// expanded by the boundary bias delta on both sides, so adjacent buckets
/// overlap when delta > 0. Immutable after build.
class ZoneIndex {
public:
    // Throws EmptyAnchors / DimensionMismatch.
    ZoneIndex(std::vector<Descriptor> descriptors, const std::map<int, Vec3>& anchors,
              double zone_width, int n_zones, double delta);

    // Candidate descriptors compatible with the measured anchor distances.
    // Per anchor: every bucket whose expanded annulus contains the distance;
    // across anchors: intersection, falling back to the union (flagged) when
    // the intersection is empty and fallback is allowed. Distances beyond the
    // outermost expanded radius are treated as not reporting.
    // Throws UnknownAnchorId / EmptyInput.
    CandidateSet candidates(const std::map<int, double>& measured, bool allow_fallback = true) const;

    // Nearest neighbor over the gated candidate set; nullopt when the set is
    // empty or the best distance exceeds the acceptance threshold.
    // Throws DimensionMismatch on wrong query dimension.
    std::optional<MatchResult> match(const Descriptor& query, const std::map<int, double>& measured,
                                     bool allow_fallback = true) const;

    // Nearest neighbor over the whole store (no gate), same acceptance rule.
    std::optional<MatchResult> match_ungated(const Descriptor& query) const;

    const std::vector<Descriptor>& store() const { return store_; }
    const std::map<int, Vec3>& anchors() const { return anchors_; }
    const std::vector<double>& radii(int anchor_id) const;
    double delta() const { return delta_; }
    double zone_width() const { return zone_width_; }
    int n_zones() const { return n_zones_; }
    int dimension() const { return dim_; }
    double acceptance_threshold() const { return tau_; }
    void set_acceptance_threshold(double tau) { tau_ = tau; }

    const std::vector<int>& bucket(int anchor_id, int zone) const;  // zone is 1-based
    const std::vector<int>& unzoned() const { return unzoned_; }
    std::size_t max_bucket_size() const;

private:
    std::optional<MatchResult> best_over(const std::vector<int>& ids, const Descriptor& query) const;

    std::vector<Descriptor> store_;
    std::map<int, Vec3> anchors_;
    double zone_width_ = 0.0;
    int n_zones_ = 0;
    double delta_ = 0.0;
    int dim_ = 0;
    double tau_ = 0.0;
    // buckets_[anchor][zone-1] -> sorted descriptor ids
    std::map<int, std::vector<std::vector<int>>> buckets_;
    std::map<int, std::vector<double>> radii_;
    std::vector<int> unzoned_;
    std::vector<int> all_ids_;          // sorted
    std::map<int, std::size_t> by_id_;  // id -> index in store_
};

struct QueryEval {
    bool matched = false;
    Pose predicted;
    Pose truth;
    double latency_ms = 0.0;
};

struct LocalizationReport {
    std::size_t attempts = 0;
    std::size_t matches = 0;
    std::size_t successes = 0;
    double success_rate = 0.0;  // successes / attempts
    double ape = 0.0;           // mean positional error over successes only
    double mean_latency_ms = 0.0;
};

// A match counts as a success iff positional error < 8.5 m and angular error
// < 10 degrees; errors are averaged over successes only.
LocalizationReport evaluate(const std::vector<QueryEval>& results);

}  // namespace uwbcal
