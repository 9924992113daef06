#include "uwbcal/zones.hpp"

#include "uwbcal/errors.hpp"
#include "uwbcal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uwbcal {

namespace {

double descriptor_dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

ZoneIndex::ZoneIndex(std::vector<Descriptor> descriptors, const std::map<int, Vec3>& anchors,
                     double zone_width, int n_zones, double delta)
    : store_(std::move(descriptors)),
      anchors_(anchors),
      zone_width_(zone_width),
      n_zones_(n_zones),
      delta_(delta) {
    if (anchors_.empty()) throw EmptyAnchors("zone index needs at least one anchor");
    if (!(zone_width_ > 0.0)) throw Error("zone width must be > 0");
    if (n_zones_ < 1) throw Error("need at least one zone");
    if (!(delta_ >= 0.0)) throw Error("boundary bias delta must be >= 0");

    dim_ = store_.empty() ? 0 : static_cast<int>(store_.front().vec.size());
    for (const Descriptor& d : store_)
        if (static_cast<int>(d.vec.size()) != dim_)
            throw DimensionMismatch("descriptor " + std::to_string(d.id) +
                                    " has dimension " + std::to_string(d.vec.size()) +
                                    ", index dimension is " + std::to_string(dim_));

    for (const auto& [aid, pos] : anchors_) {
        std::vector<double> radii(n_zones_);
        for (int i = 0; i < n_zones_; ++i) radii[i] = (i + 1) * zone_width_;
        radii_[aid] = radii;
        buckets_[aid] = std::vector<std::vector<int>>(n_zones_);
    }

    const double outer = n_zones_ * zone_width_ + delta_;
    for (std::size_t idx = 0; idx < store_.size(); ++idx) {
        const Descriptor& d = store_[idx];
        by_id_[d.id] = idx;
        all_ids_.push_back(d.id);
        bool zoned = false;
        for (const auto& [aid, pos] : anchors_) {
            const double dist = (d.pose.position - pos).norm();
            if (dist >= outer) continue;
            for (int i = 0; i < n_zones_; ++i) {
                const double lo = i * zone_width_ - delta_;
                const double hi = (i + 1) * zone_width_ + delta_;
                if (dist >= lo && dist < hi) {
                    buckets_[aid][i].push_back(d.id);
                    zoned = true;
                }
            }
        }
        if (!zoned) unzoned_.push_back(d.id);
    }
    std::sort(all_ids_.begin(), all_ids_.end());
    for (auto& [aid, zones] : buckets_)
        for (auto& b : zones) std::sort(b.begin(), b.end());

    // Default acceptance threshold: 95th percentile of intra-store nearest
    // neighbor distances, estimated on a capped subset for large stores.
    if (store_.size() >= 2) {
        const std::size_t cap = 2000;
        Rng rng(0x5eedu);
        std::vector<std::size_t> probes;
        if (store_.size() <= cap) {
            probes.resize(store_.size());
            for (std::size_t i = 0; i < probes.size(); ++i) probes[i] = i;
        } else {
            probes = rng.sample_indices(store_.size(), cap);
            std::sort(probes.begin(), probes.end());
        }
        std::vector<double> nn;
        nn.reserve(probes.size());
        for (const std::size_t i : probes) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < store_.size(); ++j) {
                if (j == i) continue;
                best = std::min(best, descriptor_dist2(store_[i].vec, store_[j].vec));
            }
            nn.push_back(std::sqrt(best));
        }
        std::sort(nn.begin(), nn.end());
        const std::size_t k = static_cast<std::size_t>(0.95 * (nn.size() - 1));
        tau_ = nn[k];
    }
}

const std::vector<double>& ZoneIndex::radii(int anchor_id) const {
    const auto it = radii_.find(anchor_id);
    if (it == radii_.end()) throw UnknownAnchorId("anchor " + std::to_string(anchor_id));
    return it->second;
}

const std::vector<int>& ZoneIndex::bucket(int anchor_id, int zone) const {
    const auto it = buckets_.find(anchor_id);
    if (it == buckets_.end()) throw UnknownAnchorId("anchor " + std::to_string(anchor_id));
    if (zone < 1 || zone > n_zones_) throw Error("zone index out of range");
    return it->second[zone - 1];
}

std::size_t ZoneIndex::max_bucket_size() const {
    std::size_t m = 0;
    for (const auto& [aid, zones] : buckets_)
        for (const auto& b : zones) m = std::max(m, b.size());
    return m;
}

CandidateSet ZoneIndex::candidates(const std::map<int, double>& measured,
                                   bool allow_fallback) const {
    if (measured.empty()) throw EmptyInput("no measured distances");
    for (const auto& [aid, d] : measured) {
        if (buckets_.find(aid) == buckets_.end())
            throw UnknownAnchorId("anchor " + std::to_string(aid) + " not in index");
        if (!(d >= 0.0)) throw Error("measured distance must be >= 0");
    }

    const double outer = n_zones_ * zone_width_ + delta_;
    CandidateSet out;
    std::vector<int> acc;
    bool first = true;
    std::vector<std::vector<int>> per_anchor;
    for (const auto& [aid, d] : measured) {
        if (d >= outer) continue;  // treated as not reporting
        std::vector<int> set;
        for (int i = 0; i < n_zones_; ++i) {
            const double lo = i * zone_width_ - delta_;
            const double hi = (i + 1) * zone_width_ + delta_;
            if (d >= lo && d < hi) {
                const auto& b = buckets_.at(aid)[i];
                std::vector<int> merged;
                std::set_union(set.begin(), set.end(), b.begin(), b.end(),
                               std::back_inserter(merged));
                set = std::move(merged);
            }
        }
        ++out.reporting_anchors;
        per_anchor.push_back(std::move(set));
        if (first) {
            acc = per_anchor.back();
            first = false;
        } else {
            std::vector<int> inter;
            std::set_intersection(acc.begin(), acc.end(), per_anchor.back().begin(),
                                  per_anchor.back().end(), std::back_inserter(inter));
            acc = std::move(inter);
        }
    }

    if (out.reporting_anchors == 0) {
        out.ids = all_ids_;
        out.used_fallback = true;
        return out;
    }
    if (acc.empty() && out.reporting_anchors > 1 && allow_fallback) {
        std::vector<int> uni;
        for (const auto& s : per_anchor) {
            std::vector<int> merged;
            std::set_union(uni.begin(), uni.end(), s.begin(), s.end(), std::back_inserter(merged));
            uni = std::move(merged);
        }
        acc = std::move(uni);
        out.used_fallback = true;
    }
    out.ids = std::move(acc);
    return out;
}

std::optional<MatchResult> ZoneIndex::best_over(const std::vector<int>& ids,
                                                const Descriptor& query) const {
    if (static_cast<int>(query.vec.size()) != dim_)
        throw DimensionMismatch("query dimension " + std::to_string(query.vec.size()) +
                                " does not match index dimension " + std::to_string(dim_));
    double best = std::numeric_limits<double>::infinity();
    const Descriptor* best_d = nullptr;
    for (const int id : ids) {
        const Descriptor& d = store_[by_id_.at(id)];
        const double dist2 = descriptor_dist2(query.vec, d.vec);
        if (dist2 < best) {
            best = dist2;
            best_d = &d;
        }
    }
    if (!best_d) return std::nullopt;
    const double dist = std::sqrt(best);
    if (dist > tau_) return std::nullopt;
    return MatchResult{best_d->id, -dist, best_d->pose, false};
}

std::optional<MatchResult> ZoneIndex::match(const Descriptor& query,
                                            const std::map<int, double>& measured,
                                            bool allow_fallback) const {
    const CandidateSet cs = candidates(measured, allow_fallback);
    auto r = best_over(cs.ids, query);
    if (r) r->gated_fallback = cs.used_fallback;
    return r;
}

std::optional<MatchResult> ZoneIndex::match_ungated(const Descriptor& query) const {
    return best_over(all_ids_, query);
}

LocalizationReport evaluate(const std::vector<QueryEval>& results) {
    LocalizationReport rep;
    rep.attempts = results.size();
    double err_sum = 0.0;
    double lat_sum = 0.0;
    for (const QueryEval& q : results) {
        lat_sum += q.latency_ms;
        if (!q.matched) continue;
        ++rep.matches;
        const double pos_err = (q.predicted.position - q.truth.position).norm();
        const double ang_err = angular_error_deg(q.predicted.orientation, q.truth.orientation);
        if (pos_err < 8.5 && ang_err < 10.0) {
            ++rep.successes;
            err_sum += pos_err;
        }
    }
    rep.success_rate = rep.attempts == 0 ? 0.0 : static_cast<double>(rep.successes) / rep.attempts;
    rep.ape = rep.successes == 0 ? 0.0 : err_sum / rep.successes;
    rep.mean_latency_ms = rep.attempts == 0 ? 0.0 : lat_sum / rep.attempts;
    return rep;
}

}  // namespace uwbcal
