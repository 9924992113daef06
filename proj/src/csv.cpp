#include "uwbcal/csv.hpp"

#include "uwbcal/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace uwbcal {

std::string format_double(double v) {
    char buf[40];
    // %.17g always round-trips but is noisy; try shorter forms first.
    for (int prec = 10; prec <= 17; prec += 7) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace {

class CsvReader {
public:
    CsvReader(const std::string& path, const std::string& expected_header)
        : path_(path), in_(path) {
        if (!in_) throw ParseError(path + ": cannot open file");
        std::string header;
        if (!std::getline(in_, header)) throw ParseError(path + ": empty file");
        if (!header.empty() && header.back() == '\r') header.pop_back();
        ++line_no_;
        if (header != expected_header)
            throw ParseError(path + ":1: expected header '" + expected_header + "', got '" +
                             header + "'");
    }

    // Next non-empty data line split on commas; false at EOF.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields.clear();
            std::size_t start = 0;
            for (;;) {
                const std::size_t pos = line.find(',', start);
                if (pos == std::string::npos) {
                    fields.push_back(line.substr(start));
                    break;
                }
                fields.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
            return true;
        }
        return false;
    }

    double num(const std::vector<std::string>& fields, std::size_t idx) const {
        if (idx >= fields.size())
            throw ParseError(where() + ": missing column " + std::to_string(idx + 1));
        const std::string& s = fields[idx];
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw ParseError(where() + ": bad number '" + s + "'");
        return v;
    }

    int integer(const std::vector<std::string>& fields, std::size_t idx) const {
        const double v = num(fields, idx);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ParseError(where() + ": expected integer, got '" + fields[idx] + "'");
        return i;
    }

    void require_columns(const std::vector<std::string>& fields, std::size_t n) const {
        if (fields.size() != n)
            throw ParseError(where() + ": expected " + std::to_string(n) + " columns, got " +
                             std::to_string(fields.size()));
    }

    std::string where() const { return path_ + ":" + std::to_string(line_no_); }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // fixed '\n' endings everywhere
    if (!out) throw Error("cannot open " + path + " for writing");
    return out;
}

}  // namespace

std::vector<Pose> read_pose_csv(const std::string& path) {
    CsvReader r(path, "t,x,y,z,qx,qy,qz,qw");
    std::vector<Pose> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 8);
        Pose p;
        p.t = r.num(f, 0);
        p.position = Vec3(r.num(f, 1), r.num(f, 2), r.num(f, 3));
        p.orientation = Quat(r.num(f, 7), r.num(f, 4), r.num(f, 5), r.num(f, 6));
        if (std::abs(p.orientation.norm() - 1.0) > 1e-3)
            throw ParseError(r.where() + ": quaternion is not normalized");
        p.orientation.normalize();
        out.push_back(p);
    }
    return out;
}

void write_pose_csv(const std::string& path, const std::vector<Pose>& poses) {
    auto out = open_out(path);
    out << "t,x,y,z,qx,qy,qz,qw\n";
    for (const Pose& p : poses) {
        out << format_double(p.t) << ',' << format_double(p.position.x()) << ','
            << format_double(p.position.y()) << ',' << format_double(p.position.z()) << ','
            << format_double(p.orientation.x()) << ',' << format_double(p.orientation.y()) << ','
            << format_double(p.orientation.z()) << ',' << format_double(p.orientation.w()) << '\n';
    }
}

std::vector<RangeSample> read_range_csv(const std::string& path) {
    CsvReader r(path, "t,anchor_id,range");
    std::vector<RangeSample> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 3);
        out.push_back({r.num(f, 0), r.integer(f, 1), r.num(f, 2)});
    }
    return out;
}

void write_range_csv(const std::string& path, const std::vector<RangeSample>& ranges) {
    auto out = open_out(path);
    out << "t,anchor_id,range\n";
    for (const RangeSample& s : ranges)
        out << format_double(s.t) << ',' << s.anchor_id << ',' << format_double(s.range) << '\n';
}

void write_paired_csv(const std::string& path, const std::vector<InterpolatedSample>& samples) {
    auto out = open_out(path);
    out << "t,anchor_id,range,x,y,z\n";
    for (const InterpolatedSample& s : samples) {
        out << format_double(s.t) << ',' << s.anchor_id << ',' << format_double(s.range) << ','
            << format_double(s.position.x()) << ',' << format_double(s.position.y()) << ','
            << format_double(s.position.z()) << '\n';
    }
}

std::map<int, Vec3> read_anchor_csv(const std::string& path) {
    CsvReader r(path, "anchor_id,x,y,z");
    std::map<int, Vec3> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 4);
        const int id = r.integer(f, 0);
        if (!out.emplace(id, Vec3(r.num(f, 1), r.num(f, 2), r.num(f, 3))).second)
            throw ParseError(r.where() + ": duplicate anchor id " + std::to_string(id));
    }
    return out;
}

void write_anchor_csv(const std::string& path, const std::map<int, Vec3>& anchors) {
    auto out = open_out(path);
    out << "anchor_id,x,y,z\n";
    for (const auto& [id, p] : anchors)
        out << id << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
            << format_double(p.z()) << '\n';
}

void write_estimate_csv(const std::string& path, const std::map<int, AnchorEstimate>& estimates) {
    auto out = open_out(path);
    out << "anchor_id,x,y,z,converged,n_samples,residual_rms\n";
    for (const auto& [id, e] : estimates) {
        out << id << ',' << format_double(e.position.x()) << ',' << format_double(e.position.y())
            << ',' << format_double(e.position.z()) << ',' << (e.converged ? 1 : 0) << ','
            << e.n_samples_used << ',' << format_double(e.residual_rms) << '\n';
    }
}

std::map<int, Vec3> read_estimate_csv(const std::string& path) {
    CsvReader r(path, "anchor_id,x,y,z,converged,n_samples,residual_rms");
    std::map<int, Vec3> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 7);
        out.emplace(r.integer(f, 0), Vec3(r.num(f, 1), r.num(f, 2), r.num(f, 3)));
    }
    return out;
}

void write_trace_csv(const std::string& path, const std::map<int, AnchorEstimate>& estimates) {
    auto out = open_out(path);
    out << "anchor_id,iter,cx,cy,cz,ex,ey,ez,pred_range\n";
    for (const auto& [id, e] : estimates) {
        int iter = 0;
        for (const IterationRecord& rec : e.iterations) {
            out << id << ',' << iter++ << ',' << format_double(rec.best_candidate.x()) << ','
                << format_double(rec.best_candidate.y()) << ','
                << format_double(rec.best_candidate.z()) << ','
                << format_double(rec.averaged_estimate.x()) << ','
                << format_double(rec.averaged_estimate.y()) << ','
                << format_double(rec.averaged_estimate.z()) << ','
                << format_double(rec.predicted_range) << '\n';
        }
    }
}

std::vector<Descriptor> read_descriptor_csv(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw ParseError(path + ": cannot open file");
    std::string header;
    if (!std::getline(probe, header)) throw ParseError(path + ": empty file");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    probe.close();

    const std::string prefix = "id,x,y,z,qx,qy,qz,qw";
    if (header.compare(0, prefix.size(), prefix) != 0)
        throw ParseError(path + ":1: descriptor header must start with '" + prefix + "'");
    std::size_t dim = 0;
    for (std::size_t i = prefix.size(); i < header.size();) {
        if (header[i] != ',') throw ParseError(path + ":1: malformed descriptor header");
        const std::string expect = "v" + std::to_string(dim);
        if (header.compare(i + 1, expect.size(), expect) != 0)
            throw ParseError(path + ":1: expected column '" + expect + "'");
        i += 1 + expect.size();
        ++dim;
    }
    if (dim == 0) throw ParseError(path + ":1: descriptor store has no vector columns");

    CsvReader r(path, header);
    std::vector<Descriptor> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 8 + dim);
        Descriptor d;
        d.id = r.integer(f, 0);
        d.pose.position = Vec3(r.num(f, 1), r.num(f, 2), r.num(f, 3));
        d.pose.orientation = Quat(r.num(f, 7), r.num(f, 4), r.num(f, 5), r.num(f, 6));
        d.pose.orientation.normalize();
        d.vec.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) d.vec[i] = r.num(f, 8 + i);
        out.push_back(std::move(d));
    }
    return out;
}

void write_descriptor_csv(const std::string& path, const std::vector<Descriptor>& descriptors) {
    auto out = open_out(path);
    const std::size_t dim = descriptors.empty() ? 0 : descriptors.front().vec.size();
    out << "id,x,y,z,qx,qy,qz,qw";
    for (std::size_t i = 0; i < dim; ++i) out << ",v" << i;
    out << '\n';
    for (const Descriptor& d : descriptors) {
        out << d.id << ',' << format_double(d.pose.position.x()) << ','
            << format_double(d.pose.position.y()) << ',' << format_double(d.pose.position.z())
            << ',' << format_double(d.pose.orientation.x()) << ','
            << format_double(d.pose.orientation.y()) << ','
            << format_double(d.pose.orientation.z()) << ','
            << format_double(d.pose.orientation.w());
        for (const double v : d.vec) out << ',' << format_double(v);
        out << '\n';
    }
}

std::map<int, std::map<int, double>> read_query_log_csv(const std::string& path) {
    CsvReader r(path, "t,anchor_id,d_j");
    std::map<int, std::map<int, double>> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.require_columns(f, 3);
        const int t = r.integer(f, 0);
        const int aid = r.integer(f, 1);
        const double d = r.num(f, 2);
        if (d < 0.0) throw ParseError(r.where() + ": negative distance");
        out[t][aid] = d;
    }
    return out;
}

void write_query_log_csv(const std::string& path,
                         const std::map<int, std::map<int, double>>& log) {
    auto out = open_out(path);
    out << "t,anchor_id,d_j\n";
    for (const auto& [t, per_anchor] : log)
        for (const auto& [aid, d] : per_anchor)
            out << t << ',' << aid << ',' << format_double(d) << '\n';
}

void write_match_csv(const std::string& path, const std::vector<MatchRow>& rows) {
    auto out = open_out(path);
    out << "query_id,matched,match_id,score,x,y,z,qx,qy,qz,qw\n";
    for (const MatchRow& m : rows) {
        out << m.query_id << ',' << (m.matched ? 1 : 0) << ',' << m.match_id << ','
            << format_double(m.score) << ',' << format_double(m.pose.position.x()) << ','
            << format_double(m.pose.position.y()) << ',' << format_double(m.pose.position.z())
            << ',' << format_double(m.pose.orientation.x()) << ','
            << format_double(m.pose.orientation.y()) << ','
            << format_double(m.pose.orientation.z()) << ','
            << format_double(m.pose.orientation.w()) << '\n';
    }
}

}  // namespace uwbcal
