#include "uwbcal/metrics.hpp"

#include "uwbcal/errors.hpp"

#include <cinttypes>
#include <cstdio>

namespace uwbcal {

CalibrationReport anchor_ape(const std::map<int, Vec3>& estimates,
                             const std::map<int, Vec3>& truth, double scene_diagonal) {
    CalibrationReport rep;
    rep.scene_diagonal = scene_diagonal;
    rep.failure_threshold = 0.1 * scene_diagonal;

    for (const auto& [id, est] : estimates)
        if (truth.find(id) == truth.end())
            throw MissingTruth("no ground truth for anchor " + std::to_string(id));

    double sum = 0.0;
    std::size_t n_ok = 0;
    for (const auto& [id, true_pos] : truth) {
        CalibrationReport::Entry entry;
        const auto it = estimates.find(id);
        if (it == estimates.end()) {
            entry.failed = true;
        } else {
            const double err = (it->second - true_pos).norm();
            entry.error = err;
            entry.failed = err > rep.failure_threshold;
        }
        if (entry.failed) {
            ++rep.n_failed;
        } else {
            sum += *entry.error;
            ++n_ok;
        }
        rep.per_anchor.emplace(id, entry);
    }
    rep.mean_error = n_ok == 0 ? 0.0 : sum / static_cast<double>(n_ok);
    return rep;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

}  // namespace

std::string render_report(const CalibrationReport& report) {
    std::string out;
    out += "anchor calibration report\n";
    out += "-------------------------\n";
    out += "anchor      error_m\n";
    for (const auto& [id, entry] : report.per_anchor) {
        char line[96];
        if (entry.failed)
            std::snprintf(line, sizeof(line), "A%-10d %10s\n", id, "-");
        else
            std::snprintf(line, sizeof(line), "A%-10d %10.3f\n", id, *entry.error);
        out += line;
    }
    out += "-------------------------\n";
    char line[96];
    std::snprintf(line, sizeof(line), "mean        %10.3f\n", report.mean_error);
    out += line;
    std::snprintf(line, sizeof(line), "failed      %10zu\n", report.n_failed);
    out += line;
    std::snprintf(line, sizeof(line), "fail_thresh %10.3f\n", report.failure_threshold);
    out += line;
    std::snprintf(line, sizeof(line), "time_s      %10.2f\n", report.processing_time_s);
    out += line;
    return out;
}

std::string report_csv(const CalibrationReport& report) {
    std::string out = "anchor_id,error_m,failed\n";
    for (const auto& [id, entry] : report.per_anchor) {
        out += std::to_string(id);
        out += ',';
        out += entry.failed || !entry.error ? std::string("-") : fmt("%.6f", *entry.error);
        out += ',';
        out += entry.failed ? '1' : '0';
        out += '\n';
    }
    return out;
}

namespace {

std::string loc_row(const char* name, const LocalizationReport& r) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %12.2f %9.3f %13.3f %9zu %9zu\n", name,
                  100.0 * r.success_rate, r.ape, r.mean_latency_ms, r.successes, r.attempts);
    return line;
}

}  // namespace

std::string render_localization_report(const LocalizationReport& gated,
                                       const LocalizationReport& ungated) {
    std::string out;
    out += "one-shot localization report\n";
    out += "----------------------------\n";
    out += "method   success_pct     ape_m  latency_ms successes  attempts\n";
    out += loc_row("gated", gated);
    out += loc_row("ungated", ungated);
    return out;
}

std::string localization_report_csv(const LocalizationReport& gated,
                                    const LocalizationReport& ungated) {
    auto row = [](const char* name, const LocalizationReport& r) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s,%.4f,%.6f,%.6f,%zu,%zu\n", name, r.success_rate,
                      r.ape, r.mean_latency_ms, r.successes, r.attempts);
        return std::string(line);
    };
    return "method,success_rate,ape_m,mean_latency_ms,successes,attempts\n" + row("gated", gated) +
           row("ungated", ungated);
}

}  // namespace uwbcal
