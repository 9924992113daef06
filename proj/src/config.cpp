#include "uwbcal/config.hpp"

#include "uwbcal/csv.hpp"
#include "uwbcal/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace uwbcal {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_number(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(where + ": bad number '" + s + "'");
    return v;
}

}  // namespace

KeyValueFile KeyValueFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    KeyValueFile kv;
    kv.origin_ = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t sp = t.find_first_of(" \t");
        if (sp == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'key value', got '" +
                             t + "'");
        kv.entries_.emplace_back(t.substr(0, sp), trim(t.substr(sp + 1)));
    }
    return kv;
}

const std::string* KeyValueFile::find(const std::string& key) const {
    // Duplicate keys are allowed in files; the last one wins, so appending a
    // line overrides an earlier setting.
    const std::string* hit = nullptr;
    for (const auto& [k, v] : entries_)
        if (k == key) hit = &v;
    return hit;
}

bool KeyValueFile::has(const std::string& key) const { return find(key) != nullptr; }

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    return parse_number(*v, origin_ + " key '" + key + "'");
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ParseError(origin_ + " key '" + key + "': expected integer");
    return i;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "1" || *v == "true" || *v == "yes") return true;
    if (*v == "0" || *v == "false" || *v == "no") return false;
    throw ParseError(origin_ + " key '" + key + "': expected boolean, got '" + *v + "'");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key) const {
    const std::string* v = find(key);
    std::vector<double> out;
    if (!v) return out;
    std::stringstream ss(*v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(parse_number(tok, origin_ + " key '" + key + "'"));
    }
    return out;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void KeyValueFile::set_double(const std::string& key, double value) {
    set(key, format_double(value));
}

void KeyValueFile::set_int(const std::string& key, long long value) {
    set(key, std::to_string(value));
}

std::string KeyValueFile::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += ' ';
        out += v;
        out += '\n';
    }
    return out;
}

void KeyValueFile::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << serialize();
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    Scene scene;
    bool have_bounds = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::stringstream ss(t);
        std::string tag;
        ss >> tag;
        const std::string where = path + ":" + std::to_string(line_no);
        auto read_vals = [&](int n, double* out) {
            for (int i = 0; i < n; ++i)
                if (!(ss >> out[i]))
                    throw ParseError(where + ": '" + tag + "' needs " + std::to_string(n) +
                                     " numeric fields");
            double extra;
            if (ss >> extra) throw ParseError(where + ": too many fields for '" + tag + "'");
        };
        if (tag == "bounds") {
            double v[6];
            read_vals(6, v);
            scene.bounds = {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
            have_bounds = true;
        } else if (tag == "anchor") {
            double v[4];
            read_vals(4, v);
            const int id = static_cast<int>(v[0]);
            if (static_cast<double>(id) != v[0])
                throw ParseError(where + ": anchor id must be an integer");
            if (!scene.anchors.emplace(id, Vec3(v[1], v[2], v[3])).second)
                throw ParseError(where + ": duplicate anchor id " + std::to_string(id));
        } else if (tag == "occluder") {
            double v[6];
            read_vals(6, v);
            scene.occluders.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])});
        } else {
            throw ParseError(where + ": unknown entry '" + tag + "'");
        }
    }
    if (!have_bounds) throw ParseError(path + ": missing 'bounds' entry");
    scene.validate();
    return scene;
}

void save_scene(const std::string& path, const Scene& scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "bounds " << format_double(scene.bounds.min.x()) << ' '
        << format_double(scene.bounds.min.y()) << ' ' << format_double(scene.bounds.min.z()) << ' '
        << format_double(scene.bounds.max.x()) << ' ' << format_double(scene.bounds.max.y()) << ' '
        << format_double(scene.bounds.max.z()) << '\n';
    for (const auto& [id, p] : scene.anchors)
        out << "anchor " << id << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
            << format_double(p.z()) << '\n';
    for (const Aabb& b : scene.occluders)
        out << "occluder " << format_double(b.min.x()) << ' ' << format_double(b.min.y()) << ' '
            << format_double(b.min.z()) << ' ' << format_double(b.max.x()) << ' '
            << format_double(b.max.y()) << ' ' << format_double(b.max.z()) << '\n';
}

PipelineConfig PipelineConfig::from_file(const KeyValueFile& kv) {
    PipelineConfig c;

    c.calibration.kernel.nu = kv.get_double("kernel.nu", c.calibration.kernel.nu);
    c.calibration.kernel.length_scale =
        kv.get_double("kernel.length_scale", c.calibration.kernel.length_scale);
    c.calibration.kernel.signal_variance = kv.get_double("kernel.signal_variance", -1.0);
    c.calibration.kernel.noise_variance =
        kv.get_double("kernel.noise_variance", c.calibration.kernel.noise_variance);
    c.grid_length_scales = kv.get_doubles("kernel.grid.length_scale");
    c.grid_signal_variances = kv.get_doubles("kernel.grid.signal_variance");
    c.grid_noise_variances = kv.get_doubles("kernel.grid.noise_variance");

    c.calibration.grid_resolution =
        kv.get_double("calib.grid_resolution", c.calibration.grid_resolution);
    c.calibration.top_k = kv.get_int("calib.top_k", c.calibration.top_k);
    c.calibration.max_iterations = kv.get_int("calib.max_iterations", c.calibration.max_iterations);
    c.calibration.shrink_factor = kv.get_double("calib.shrink_factor", c.calibration.shrink_factor);
    c.calibration.layers = kv.get_int("calib.layers", c.calibration.layers);
    c.calibration.samples_per_layer =
        kv.get_int("calib.samples_per_layer", c.calibration.samples_per_layer);
    c.calibration.convergence_tol =
        kv.get_double("calib.convergence_tol", c.calibration.convergence_tol);
    c.calibration.min_samples = kv.get_int("calib.min_samples", c.calibration.min_samples);
    c.calibration.zero_mean = kv.get_bool("calib.zero_mean", c.calibration.zero_mean);
    c.calibration.outlier_filter = kv.get_bool("calib.outlier_filter", c.calibration.outlier_filter);
    c.calibration.planar_z_threshold =
        kv.get_double("calib.planar_z_threshold", c.calibration.planar_z_threshold);
    c.calibration.planar_height = kv.get_double("calib.planar_height", c.calibration.planar_height);
    c.calibration.planar_height_extent =
        kv.get_double("calib.planar_height_extent", c.calibration.planar_height_extent);

    c.ranging.gaussian_sigma = kv.get_double("sim.gaussian_sigma", c.ranging.gaussian_sigma);
    c.ranging.los_bias = kv.get_double("sim.los_bias", c.ranging.los_bias);
    c.ranging.nlos_bias_mean = kv.get_double("sim.nlos_bias_mean", c.ranging.nlos_bias_mean);
    c.ranging.nlos_bias_sigma = kv.get_double("sim.nlos_bias_sigma", c.ranging.nlos_bias_sigma);
    c.ranging.dropout_prob_los = kv.get_double("sim.dropout_prob_los", c.ranging.dropout_prob_los);
    c.ranging.dropout_prob_nlos =
        kv.get_double("sim.dropout_prob_nlos", c.ranging.dropout_prob_nlos);
    c.ranging.max_range = kv.get_double("sim.max_range", c.ranging.max_range);
    c.ranging.rate_hz = kv.get_double("sim.rate_hz", c.ranging.rate_hz);

    c.traj_speed = kv.get_double("traj.speed", c.traj_speed);
    c.traj_duration = kv.get_double("traj.duration", c.traj_duration);
    c.pose_rate_hz = kv.get_double("traj.pose_rate_hz", c.pose_rate_hz);

    c.spline_knot_spacing = kv.get_double("spline.knot_spacing", c.spline_knot_spacing);
    c.spline_order = kv.get_int("spline.order", c.spline_order);
    c.clock_offset = kv.get_double("clock_offset", c.clock_offset);

    c.descriptors_enabled = kv.get_bool("descriptors.enabled", c.descriptors_enabled);
    c.descriptor.dim = kv.get_int("descriptors.dim", c.descriptor.dim);
    c.descriptor.spacing = kv.get_double("descriptors.spacing", c.descriptor.spacing);
    c.descriptor.smoothness = kv.get_double("descriptors.smoothness", c.descriptor.smoothness);
    c.descriptor.noise = kv.get_double("descriptors.noise", c.descriptor.noise);
    const std::vector<double> from = kv.get_doubles("descriptors.duplicate_from");
    const std::vector<double> to = kv.get_doubles("descriptors.duplicate_to");
    if (!from.empty() || !to.empty()) {
        if (from.size() != 6 || to.size() != 6)
            throw ParseError("descriptors.duplicate_from/to need 6 comma-separated values");
        c.descriptor.duplicate = true;
        c.descriptor.duplicate_from = {Vec3(from[0], from[1], from[2]),
                                       Vec3(from[3], from[4], from[5])};
        c.descriptor.duplicate_to = {Vec3(to[0], to[1], to[2]), Vec3(to[3], to[4], to[5])};
    }
    c.query_stride = kv.get_int("queries.stride", c.query_stride);
    c.query_noise = kv.get_double("queries.noise", c.query_noise);

    c.zone_width = kv.get_double("zone.width", c.zone_width);
    c.n_zones = kv.get_int("zone.count", c.n_zones);
    c.zone_delta = kv.get_double("zone.delta", c.zone_delta);
    c.match_tau = kv.get_double("match.tau", c.match_tau);
    return c;
}

void PipelineConfig::describe(KeyValueFile& kv) const {
    kv.set_double("kernel.nu", calibration.kernel.nu);
    kv.set_double("kernel.length_scale", calibration.kernel.length_scale);
    kv.set_double("kernel.signal_variance", calibration.kernel.signal_variance);
    kv.set_double("kernel.noise_variance", calibration.kernel.noise_variance);
    kv.set_double("calib.grid_resolution", calibration.grid_resolution);
    kv.set_int("calib.top_k", calibration.top_k);
    kv.set_int("calib.max_iterations", calibration.max_iterations);
    kv.set_double("calib.shrink_factor", calibration.shrink_factor);
    kv.set_int("calib.layers", calibration.layers);
    kv.set_int("calib.samples_per_layer", calibration.samples_per_layer);
    kv.set_double("calib.convergence_tol", calibration.convergence_tol);
    kv.set_int("calib.min_samples", calibration.min_samples);
    kv.set_int("calib.zero_mean", calibration.zero_mean ? 1 : 0);
    kv.set_int("calib.outlier_filter", calibration.outlier_filter ? 1 : 0);
    kv.set_double("calib.planar_height", calibration.planar_height);
    kv.set_double("calib.planar_height_extent", calibration.planar_height_extent);
    kv.set_double("spline.knot_spacing", spline_knot_spacing);
    kv.set_int("spline.order", spline_order);
    kv.set_double("clock_offset", clock_offset);
}

}  // namespace uwbcal
