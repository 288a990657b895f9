#pragma once

// Range-only instantiation of the consistency function: group-4 checks for
// GkCM and pairwise circle checks for the PCM baseline, evaluated against a
// dead-reckoned trajectory.

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gkcm/consistency.hpp"
#include "gkcm/geometry.hpp"

namespace gkcm {

enum class RangeCheck { group4, pairwise };

struct RangeConsistencyConfig {
  RangeCheck check = RangeCheck::group4;
  double gamma = 3.841458820694124;  // 95% chi-square, one degree of freedom
  // Tuples mixing beacon ids are skipped without evaluation.
  bool known_association = true;
  TrilaterationTolerance tolerance;
};

class RangeConsistency {
 public:
  RangeConsistency(std::vector<RangeMeasurement> measurements, std::shared_ptr<const TrajectoryContext> ctx,
                   RangeConsistencyConfig cfg = {})
      : m_(std::move(measurements)), ctx_(std::move(ctx)), cfg_(cfg) {
    for (const auto& r : m_)
      if (r.pose_id < 0 || static_cast<std::size_t>(r.pose_id) >= ctx_->size())
        throw std::invalid_argument("RangeConsistency: measurement references unknown pose");
  }

  std::size_t arity() const { return cfg_.check == RangeCheck::group4 ? 4 : 2; }
  std::size_t size() const { return m_.size(); }
  double threshold() const { return cfg_.gamma; }
  int group_of(std::size_t i) const { return cfg_.known_association ? m_[i].beacon_id : 0; }

  const std::vector<RangeMeasurement>& measurements() const { return m_; }
  const TrajectoryContext& context() const { return *ctx_; }
  const RangeConsistencyConfig& config() const { return cfg_; }

  // Measurements sharing a pose cannot both be ranges to one beacon, so such
  // tuples score +inf.
  std::optional<double> evaluate(std::span<const VertexId> t) const {
    if (t.size() != arity()) throw std::invalid_argument("RangeConsistency: tuple size does not match arity");
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = i + 1; j < t.size(); ++j)
        if (m_[t[i]].pose_id == m_[t[j]].pose_id) return std::numeric_limits<double>::infinity();
    if (t.size() == 2) return pairwise_range_check(m_[t[0]], m_[t[1]], *ctx_);
    const std::array<RangeMeasurement, 4> quad{m_[t[0]], m_[t[1]], m_[t[2]], m_[t[3]]};
    GroupCheckOptions opt;
    opt.tolerance = cfg_.tolerance;
    opt.early_exit_above = cfg_.gamma;
    return consistency_check_group4(quad, *ctx_, opt);
  }

 private:
  std::vector<RangeMeasurement> m_;
  std::shared_ptr<const TrajectoryContext> ctx_;
  RangeConsistencyConfig cfg_;
};

static_assert(GroupedConsistencyFunction<RangeConsistency>);

}  // namespace gkcm
