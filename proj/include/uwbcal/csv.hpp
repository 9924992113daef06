#pragma once

#include "uwbcal/calibration.hpp"
#include "uwbcal/simulator.hpp"
#include "uwbcal/types.hpp"
#include "uwbcal/zones.hpp"

#include <map>
#include <string>
#include <vector>

namespace uwbcal {

// All interchange files are comma-separated UTF-8 with a fixed header row,
// '.' decimal separator, quaternions in Hamilton convention (qx,qy,qz,qw).
// Readers throw ParseError with the offending line number.

std::string format_double(double v);  // shortest round-trippable form used everywhere

// header: t,x,y,z,qx,qy,qz,qw
std::vector<Pose> read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, const std::vector<Pose>& poses);

// header: t,anchor_id,range
std::vector<RangeSample> read_range_csv(const std::string& path);
void write_range_csv(const std::string& path, const std::vector<RangeSample>& ranges);

// header: t,anchor_id,range,x,y,z
void write_paired_csv(const std::string& path, const std::vector<InterpolatedSample>& samples);

// header: anchor_id,x,y,z
std::map<int, Vec3> read_anchor_csv(const std::string& path);
void write_anchor_csv(const std::string& path, const std::map<int, Vec3>& anchors);

// header: anchor_id,x,y,z,converged,n_samples,residual_rms
void write_estimate_csv(const std::string& path, const std::map<int, AnchorEstimate>& estimates);
std::map<int, Vec3> read_estimate_csv(const std::string& path);

// header: anchor_id,iter,cx,cy,cz,ex,ey,ez,pred_range
void write_trace_csv(const std::string& path, const std::map<int, AnchorEstimate>& estimates);

// header: id,x,y,z,qx,qy,qz,qw,v0..v{D-1}
std::vector<Descriptor> read_descriptor_csv(const std::string& path);
void write_descriptor_csv(const std::string& path, const std::vector<Descriptor>& descriptors);

// header: t,anchor_id,d_j ; rows grouped by t, here keyed by integer-valued t.
std::map<int, std::map<int, double>> read_query_log_csv(const std::string& path);
void write_query_log_csv(const std::string& path,
                         const std::map<int, std::map<int, double>>& log);

struct MatchRow {
    int query_id = 0;
    bool matched = false;
    int match_id = 0;
    double score = 0.0;
    Pose pose;
};

// header: query_id,matched,match_id,score,x,y,z,qx,qy,qz,qw
// Latency statistics live in the evaluation report, which keeps this file
// byte-deterministic for a fixed seed.
void write_match_csv(const std::string& path, const std::vector<MatchRow>& rows);

}  // namespace uwbcal
