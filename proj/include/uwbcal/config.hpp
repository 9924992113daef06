#pragma once

#include "uwbcal/calibration.hpp"
#include "uwbcal/simulator.hpp"

#include <map>
#include <string>
#include <vector>

namespace uwbcal {

/// Key-value text file: one `key value...` pair per line, '#' comments.
/// Used for configs and run manifests. Keys keep insertion order on write.
class KeyValueFile {
public:
    KeyValueFile() = default;
    static KeyValueFile load(const std::string& path);  // throws ParseError with line numbers

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;  // empty when absent

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, long long value);

    void save(const std::string& path) const;
    std::string serialize() const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    const std::string* find(const std::string& key) const;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::string origin_;
};

// Scene file: `bounds minx miny minz maxx maxy maxz`, `anchor id x y z`,
// `occluder minx miny minz maxx maxy maxz`, '#' comments.
Scene load_scene(const std::string& path);
void save_scene(const std::string& path, const Scene& scene);

struct PipelineConfig {
    CalibrationConfig calibration;
    RangingModel ranging;
    double traj_speed = 5.0;
    double traj_duration = 600.0;
    double pose_rate_hz = 10.0;
    double spline_knot_spacing = 1.0;
    int spline_order = 4;
    double clock_offset = 0.0;  // added to range timestamps before pairing

    // Optional hyperparameter grid (empty = fixed kernel).
    std::vector<double> grid_length_scales;
    std::vector<double> grid_signal_variances;
    std::vector<double> grid_noise_variances;

    // Descriptor / localization stage.
    bool descriptors_enabled = false;
    DescriptorFieldConfig descriptor;
    int query_stride = 5;      // every n-th descriptor pose becomes a query
    double query_noise = 0.0;  // sigma on measured query distances
    double zone_width = 50.0;
    int n_zones = 10;
    double zone_delta = 10.0;
    double match_tau = -1.0;  // <= 0: keep the index default (95th pct NN)

    static PipelineConfig from_file(const KeyValueFile& kv);
    void describe(KeyValueFile& kv) const;  // effective values, for manifests
};

}  // namespace uwbcal
