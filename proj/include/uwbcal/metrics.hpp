#pragma once

#include "uwbcal/types.hpp"
#include "uwbcal/zones.hpp"

#include <map>
#include <optional>
#include <string>

namespace uwbcal {

/// Per-anchor calibration error against ground truth, with the failure
/// convention that an error beyond 10 % of the scene diagonal marks the
/// anchor as failed and excludes it from the mean.
struct CalibrationReport {
    struct Entry {
        std::optional<double> error;  // nullopt: no estimate produced
        bool failed = false;          // no estimate, or error beyond the threshold
    };
    std::map<int, Entry> per_anchor;
    double mean_error = 0.0;  // over non-failed anchors only
    std::size_t n_failed = 0;
    double scene_diagonal = 0.0;
    double failure_threshold = 0.0;  // 0.1 * scene_diagonal
    double processing_time_s = 0.0;
};

// ids of estimates must be a subset of truth ids (MissingTruth otherwise).
// Truth anchors without an estimate are reported as failed.
CalibrationReport anchor_ape(const std::map<int, Vec3>& estimates,
                             const std::map<int, Vec3>& truth, double scene_diagonal);

// Fixed-width text table; failed anchors render as "-". Byte-deterministic
// for a fixed report.
std::string render_report(const CalibrationReport& report);

// CSV twin: anchor_id,error_m,failed
std::string report_csv(const CalibrationReport& report);

// Table with gated and ungated localization columns.
std::string render_localization_report(const LocalizationReport& gated,
                                       const LocalizationReport& ungated);

std::string localization_report_csv(const LocalizationReport& gated,
                                    const LocalizationReport& ungated);

}  // namespace uwbcal
