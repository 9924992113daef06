// uwbcal: UWB anchor calibration and range-gated one-shot localization.
//
// Subcommands wire the pipeline stages together:
//   simulate   scene + model -> pose/range/truth CSVs (+ descriptor store)
//   calibrate  poses + ranges -> anchor estimates via iterative GP
//   localize   store + anchors + query log -> gated matches and report
//   evaluate   estimates vs truth -> calibration APE report

#include <CLI11.hpp>

#include "uwbcal/calibration.hpp"
#include "uwbcal/config.hpp"
#include "uwbcal/csv.hpp"
#include "uwbcal/errors.hpp"
#include "uwbcal/metrics.hpp"
#include "uwbcal/rng.hpp"
#include "uwbcal/simulator.hpp"
#include "uwbcal/spline.hpp"
#include "uwbcal/zones.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace uwbcal;

namespace {

constexpr const char* kVersion = "uwbcal 0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitParse = 2;
constexpr int kExitNumerical = 3;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Output files are written into a staging directory and renamed into place
// only after the whole command succeeded, so a failing run leaves no partial
// outputs behind.
class StagedDir {
public:
    explicit StagedDir(const std::string& out) : final_(out) {
        fs::create_directories(final_);
        staging_ = final_ / fs::path(".staging-" + std::to_string(
                                         std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(staging_);
    }

    ~StagedDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    std::string path(const std::string& name) const { return (staging_ / name).string(); }
    std::string final_path(const std::string& name) const { return (final_ / name).string(); }

    void commit() {
        for (const auto& entry : fs::directory_iterator(staging_))
            fs::rename(entry.path(), final_ / entry.path().filename());
        fs::remove_all(staging_);
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path staging_;
    bool committed_ = false;
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    bool strict_paper = false;
    bool trace = false;
};

KeyValueFile manifest_base(const std::string& command, const CommonArgs& args) {
    KeyValueFile m;
    m.set("tool_version", kVersion);
    m.set("command", command);
    m.set("config", args.config_path.empty() ? "<defaults>" : args.config_path);
    m.set_int("seed", static_cast<long long>(args.seed));
    m.set_int("strict_paper", args.strict_paper ? 1 : 0);
    return m;
}

PipelineConfig load_pipeline_config(const CommonArgs& args) {
    KeyValueFile kv;
    if (!args.config_path.empty()) kv = KeyValueFile::load(args.config_path);
    PipelineConfig cfg = PipelineConfig::from_file(kv);
    if (args.strict_paper) cfg.calibration = cfg.calibration.strict_paper();
    return cfg;
}

int cmd_simulate(const CommonArgs& args, const std::string& scene_path, const std::string& kind) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene scene = load_scene(scene_path);
    const PipelineConfig cfg = load_pipeline_config(args);
    cfg.ranging.validate();

    const TrajectoryKind traj_kind = trajectory_kind_from_string(kind);
    const auto traj = generate_trajectory(traj_kind, scene.bounds, cfg.traj_speed,
                                          cfg.traj_duration, args.seed, cfg.pose_rate_hz);
    const auto sim = simulate_ranges(scene, cfg.ranging, traj, args.seed);

    StagedDir out(args.out_dir);
    write_pose_csv(out.path("poses.csv"), traj);
    write_range_csv(out.path("ranges.csv"), to_range_samples(sim));
    write_anchor_csv(out.path("anchors_truth.csv"), scene.anchors);

    std::size_t occluded = 0;
    for (const auto& r : sim)
        if (r.occluded) ++occluded;

    KeyValueFile manifest = manifest_base("simulate", args);
    manifest.set("scene", scene_path);
    manifest.set("trajectory_kind", kind);
    manifest.set_int("poses", static_cast<long long>(traj.size()));
    manifest.set_int("ranges", static_cast<long long>(sim.size()));
    manifest.set_double("occluded_fraction",
                        sim.empty() ? 0.0 : static_cast<double>(occluded) / sim.size());
    manifest.set("outputs", "poses.csv ranges.csv anchors_truth.csv");

    if (cfg.descriptors_enabled) {
        const DescriptorField field(cfg.descriptor, args.seed);
        const auto store = extract_descriptors(field, traj, args.seed);
        write_descriptor_csv(out.path("descriptors.csv"), store);

        // Queries revisit every n-th extraction pose with fresh observation
        // noise; the log keys queries by integer id.
        Rng qrng(Rng::mix(args.seed, 0x9e3779b9ull));
        std::vector<Descriptor> queries;
        std::map<int, std::map<int, double>> qlog;
        int qid = 0;
        for (std::size_t i = 0; i < store.size(); i += cfg.query_stride) {
            Descriptor q;
            q.id = qid;
            q.pose = store[i].pose;
            q.vec = field.observe(q.pose.position, qrng);
            std::map<int, double> per_anchor;
            for (const auto& [aid, apos] : scene.anchors) {
                const double d = (q.pose.position - apos).norm() +
                                 cfg.query_noise * qrng.normal();
                per_anchor[aid] = std::max(0.0, d);
            }
            qlog[qid] = std::move(per_anchor);
            queries.push_back(std::move(q));
            ++qid;
        }
        write_descriptor_csv(out.path("queries.csv"), queries);
        write_query_log_csv(out.path("query_log.csv"), qlog);
        manifest.set_int("descriptors", static_cast<long long>(store.size()));
        manifest.set_int("queries", static_cast<long long>(queries.size()));
        manifest.set("outputs",
                     "poses.csv ranges.csv anchors_truth.csv descriptors.csv queries.csv "
                     "query_log.csv");
    }

    manifest.set_double("elapsed_s", seconds_since(t0));
    manifest.save(out.path("manifest.txt"));
    out.commit();
    return kExitOk;
}

int cmd_calibrate(const CommonArgs& args, const std::string& poses_path,
                  const std::string& ranges_path) {
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig cfg = load_pipeline_config(args);
    cfg.calibration.validate();

    const auto poses = read_pose_csv(poses_path);
    auto ranges = read_range_csv(ranges_path);
    for (auto& r : ranges) r.t += cfg.clock_offset;

    const auto t_fit0 = std::chrono::steady_clock::now();
    const SplineFit fit = fit_spline(poses, cfg.spline_knot_spacing, cfg.spline_order);
    const double fit_s = seconds_since(t_fit0);

    const PairedSamples paired = pair_samples(fit.spline, ranges);

    const auto t_cal0 = std::chrono::steady_clock::now();
    CalibrationConfig calib = cfg.calibration;
    if (!cfg.grid_length_scales.empty() || !cfg.grid_signal_variances.empty() ||
        !cfg.grid_noise_variances.empty()) {
        // Optional likelihood grid search on a subsample of the pooled data.
        auto ls = cfg.grid_length_scales.empty()
                      ? std::vector<double>{calib.kernel.length_scale}
                      : cfg.grid_length_scales;
        auto sv = cfg.grid_signal_variances.empty()
                      ? std::vector<double>{calib.kernel.signal_variance}
                      : cfg.grid_signal_variances;
        auto nv = cfg.grid_noise_variances.empty()
                      ? std::vector<double>{calib.kernel.noise_variance}
                      : cfg.grid_noise_variances;
        std::vector<KernelParams> grid;
        for (double l : ls)
            for (double s : sv)
                for (double n : nv) {
                    KernelParams k = calib.kernel;
                    k.length_scale = l;
                    k.signal_variance = s;
                    k.noise_variance = n;
                    grid.push_back(k);
                }
        if (!paired.samples.empty()) {
            const auto sub = stratified_subsample(paired.samples, calib.layers,
                                                  calib.samples_per_layer, args.seed);
            Eigen::MatrixXd x(sub.size(), 3);
            Eigen::VectorXd y(sub.size());
            for (std::size_t i = 0; i < sub.size(); ++i) {
                x.row(i) = sub[i].position.transpose();
                y(i) = sub[i].range;
            }
            calib.kernel = select_hyperparams(grid, x, y, calib.zero_mean ? 0.0 : y.mean());
        }
    }

    const CalibrationRun run = calibrate_all(paired.samples, calib, args.seed, args.jobs);
    const double cal_s = seconds_since(t_cal0);

    StagedDir out(args.out_dir);
    write_paired_csv(out.path("paired.csv"), paired.samples);
    write_estimate_csv(out.path("anchors_est.csv"), run.estimates);
    if (args.trace) write_trace_csv(out.path("trace.csv"), run.estimates);

    // Text summary: per-anchor outcome plus stage timings.
    std::map<int, std::size_t> counts;
    for (const auto& s : paired.samples) ++counts[s.anchor_id];
    std::string summary = "calibration summary\n-------------------\n";
    char line[160];
    std::snprintf(line, sizeof(line), "input poses        %zu\n", poses.size());
    summary += line;
    std::snprintf(line, sizeof(line), "input ranges       %zu\n", ranges.size());
    summary += line;
    std::snprintf(line, sizeof(line), "paired samples     %zu\n", paired.samples.size());
    summary += line;
    std::snprintf(line, sizeof(line), "dropped (domain)   %zu\n", paired.dropped_out_of_domain);
    summary += line;
    std::snprintf(line, sizeof(line), "dropped (invalid)  %zu\n", paired.dropped_invalid);
    summary += line;
    std::snprintf(line, sizeof(line), "spline rms         %.4f m\n", fit.position_rms);
    summary += line;
    summary += "\nanchor   samples  converged  residual_rms\n";
    bool all_converged = true;
    for (const auto& [id, n] : counts) {
        const auto it = run.estimates.find(id);
        if (it != run.estimates.end()) {
            std::snprintf(line, sizeof(line), "A%-7d %7zu  %9s  %12.4f\n", id, n,
                          it->second.converged ? "yes" : "no", it->second.residual_rms);
            if (!it->second.converged) all_converged = false;
        } else {
            std::snprintf(line, sizeof(line), "A%-7d %7zu  %9s  %12s\n", id, n, "-", "-");
            if (static_cast<int>(n) >= calib.min_samples) all_converged = false;
        }
        summary += line;
    }
    for (const auto& [id, why] : run.failures) summary += "A" + std::to_string(id) + ": " + why + "\n";
    std::snprintf(line, sizeof(line), "\nprocessing time    %.2f s\n", seconds_since(t_cal0));
    summary += line;
    {
        std::ofstream sf(out.path("calibration_summary.txt"), std::ios::binary);
        sf << summary;
    }

    KeyValueFile manifest = manifest_base("calibrate", args);
    manifest.set("poses", poses_path);
    manifest.set("ranges", ranges_path);
    PipelineConfig effective = cfg;
    effective.calibration = calib;
    effective.describe(manifest);
    manifest.set_int("anchors_estimated", static_cast<long long>(run.estimates.size()));
    manifest.set_int("anchors_failed", static_cast<long long>(run.failures.size()));
    manifest.set_double("stage.spline_fit_s", fit_s);
    manifest.set_double("stage.calibration_s", cal_s);
    manifest.set_double("elapsed_s", seconds_since(t0));
    manifest.save(out.path("manifest.txt"));
    out.commit();

    std::cout << summary;
    return all_converged ? kExitOk : kExitNumerical;
}

// Anchor positions for the zone index: either a plain anchor CSV or the
// estimate CSV produced by calibrate (sniffed by header).
std::map<int, Vec3> read_anchors_any(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw ParseError(path + ": cannot open file");
    std::string header;
    std::getline(probe, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    probe.close();
    if (header == "anchor_id,x,y,z") return read_anchor_csv(path);
    return read_estimate_csv(path);
}

int cmd_localize(const CommonArgs& args, const std::string& store_path,
                 const std::string& anchors_path, const std::string& queries_path,
                 const std::string& qlog_path) {
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig cfg = load_pipeline_config(args);

    const auto store = read_descriptor_csv(store_path);
    const auto anchors = read_anchors_any(anchors_path);
    const auto queries = read_descriptor_csv(queries_path);
    const auto qlog = read_query_log_csv(qlog_path);

    std::map<int, const Descriptor*> query_by_id;
    for (const auto& q : queries) query_by_id[q.id] = &q;
    for (const auto& [qid, per_anchor] : qlog)
        if (query_by_id.find(qid) == query_by_id.end())
            throw ParseError(qlog_path + ": query id " + std::to_string(qid) +
                             " has no descriptor in " + queries_path);

    const auto t_build0 = std::chrono::steady_clock::now();
    ZoneIndex index(store, anchors, cfg.zone_width, cfg.n_zones, cfg.zone_delta);
    if (cfg.match_tau > 0.0) index.set_acceptance_threshold(cfg.match_tau);
    const double build_s = seconds_since(t_build0);

    std::vector<MatchRow> rows;
    std::vector<QueryEval> gated_evals, ungated_evals;
    for (const auto& [qid, measured] : qlog) {
        const Descriptor& q = *query_by_id.at(qid);

        const auto tg0 = std::chrono::steady_clock::now();
        const auto gated = index.match(q, measured);
        const double gated_ms = 1000.0 * seconds_since(tg0);

        const auto tu0 = std::chrono::steady_clock::now();
        const auto ungated = index.match_ungated(q);
        const double ungated_ms = 1000.0 * seconds_since(tu0);

        MatchRow row;
        row.query_id = qid;
        row.matched = gated.has_value();
        if (gated) {
            row.match_id = gated->id;
            row.score = gated->score;
            row.pose = gated->pose;
        }
        rows.push_back(row);

        QueryEval ge;
        ge.matched = gated.has_value();
        if (gated) ge.predicted = gated->pose;
        ge.truth = q.pose;
        ge.latency_ms = gated_ms;
        gated_evals.push_back(ge);

        QueryEval ue;
        ue.matched = ungated.has_value();
        if (ungated) ue.predicted = ungated->pose;
        ue.truth = q.pose;
        ue.latency_ms = ungated_ms;
        ungated_evals.push_back(ue);
    }

    const LocalizationReport gated_rep = evaluate(gated_evals);
    const LocalizationReport ungated_rep = evaluate(ungated_evals);
    const std::string report = render_localization_report(gated_rep, ungated_rep);

    StagedDir out(args.out_dir);
    write_match_csv(out.path("matches.csv"), rows);
    {
        std::ofstream rf(out.path("localization_report.txt"), std::ios::binary);
        rf << report;
    }
    {
        std::ofstream cf(out.path("localization_report.csv"), std::ios::binary);
        cf << localization_report_csv(gated_rep, ungated_rep);
    }

    KeyValueFile manifest = manifest_base("localize", args);
    manifest.set("store", store_path);
    manifest.set("anchors", anchors_path);
    manifest.set("queries", queries_path);
    manifest.set("query_log", qlog_path);
    manifest.set_double("zone.width", cfg.zone_width);
    manifest.set_int("zone.count", cfg.n_zones);
    manifest.set_double("zone.delta", cfg.zone_delta);
    manifest.set_double("match.tau", index.acceptance_threshold());
    manifest.set_int("indexed_descriptors", static_cast<long long>(store.size()));
    manifest.set_int("queries_run", static_cast<long long>(rows.size()));
    manifest.set_double("stage.index_build_s", build_s);
    manifest.set_double("elapsed_s", seconds_since(t0));
    manifest.save(out.path("manifest.txt"));
    out.commit();

    std::cout << report;
    return kExitOk;
}

int cmd_evaluate(const CommonArgs& args, const std::string& estimates_path,
                 const std::string& truth_path, const std::string& scene_path) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto estimates = read_anchors_any(estimates_path);
    const auto truth = read_anchor_csv(truth_path);

    double diagonal;
    if (!scene_path.empty()) {
        diagonal = load_scene(scene_path).bounds.diagonal();
    } else {
        std::vector<Vec3> pts;
        for (const auto& [id, p] : truth) pts.push_back(p);
        diagonal = Aabb::of_points(pts).diagonal();
    }

    CalibrationReport rep = anchor_ape(estimates, truth, diagonal);
    rep.processing_time_s = seconds_since(t0);
    const std::string text = render_report(rep);
    std::cout << text;

    if (!args.out_dir.empty()) {
        StagedDir out(args.out_dir);
        {
            std::ofstream rf(out.path("calibration_report.txt"), std::ios::binary);
            rf << text;
        }
        {
            std::ofstream cf(out.path("calibration_report.csv"), std::ios::binary);
            cf << report_csv(rep);
        }
        KeyValueFile manifest = manifest_base("evaluate", args);
        manifest.set("estimates", estimates_path);
        manifest.set("truth", truth_path);
        manifest.set_double("scene_diagonal", diagonal);
        manifest.set_double("mean_error_m", rep.mean_error);
        manifest.set_int("failed", static_cast<long long>(rep.n_failed));
        manifest.set_double("elapsed_s", seconds_since(t0));
        manifest.save(out.path("manifest.txt"));
        out.commit();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) +
                 " - UWB anchor calibration and range-gated one-shot localization"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string scene_path, kind = "lawnmower";
    std::string poses_path, ranges_path;
    std::string store_path, anchors_path, queries_path, qlog_path;
    std::string estimates_path, truth_path, eval_scene;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--config", args.config_path, "key-value config file");
        cmd->add_option("--seed", args.seed, "RNG seed")->default_val(0);
        auto* out = cmd->add_option("--out", args.out_dir, "output directory");
        if (needs_out) out->required();
        cmd->add_option("--jobs", args.jobs, "worker threads for per-anchor calibration");
        cmd->add_flag("--strict-paper", args.strict_paper,
                      "zero prior mean, no outlier filter");
        cmd->add_flag("--trace", args.trace, "write per-iteration trace CSV");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic scene dataset");
    sim->add_option("--scene", scene_path, "scene file")->required();
    sim->add_option("--kind", kind, "trajectory kind: lawnmower|loop|random-walk");
    add_common(sim, true);

    CLI::App* cal = app.add_subcommand("calibrate", "estimate anchor positions");
    cal->add_option("--poses", poses_path, "pose CSV")->required();
    cal->add_option("--ranges", ranges_path, "range CSV")->required();
    add_common(cal, true);

    CLI::App* loc = app.add_subcommand("localize", "range-gated descriptor matching");
    loc->add_option("--store", store_path, "descriptor store CSV")->required();
    loc->add_option("--anchors", anchors_path, "anchor or estimate CSV")->required();
    loc->add_option("--queries", queries_path, "query descriptor CSV")->required();
    loc->add_option("--query-log", qlog_path, "query log CSV (t,anchor_id,d_j)")->required();
    add_common(loc, true);

    CLI::App* eva = app.add_subcommand("evaluate", "calibration APE against ground truth");
    eva->add_option("--estimates", estimates_path, "estimate CSV")->required();
    eva->add_option("--truth", truth_path, "ground truth anchor CSV")->required();
    eva->add_option("--scene", eval_scene, "scene file for the failure threshold diagonal");
    add_common(eva, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(args, scene_path, kind);
        if (cal->parsed()) return cmd_calibrate(args, poses_path, ranges_path);
        if (loc->parsed()) return cmd_localize(args, store_path, anchors_path, queries_path,
                                               qlog_path);
        if (eva->parsed()) return cmd_evaluate(args, estimates_path, truth_path, eval_scene);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
