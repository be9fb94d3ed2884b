#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdlab/dist_core.hpp"

namespace sdlab {

// Probabilities are clamped to this before any log-ratio.
inline constexpr double kLogFloor = 1e-12;

struct GroupAdvantages {
  std::vector<double> values;  // one per rollout
  double pass_rate = 0.0;
  bool degenerate = false;  // all rewards equal; values are all zero
};

// Per-outcome advantage at one position, over the K buckets then the tail.
struct TokenAdvantage {
  std::vector<double> per_bucket;

  double bucket(std::size_t i) const { return per_bucket[i]; }
  double tail() const { return per_bucket.back(); }
};

// Group-relative advantage (r - mean) / popstd. Zero when the group is
// degenerate. Throws ParameterError for G < 2 or non-binary rewards.
GroupAdvantages grpo_advantages(std::span<const double> rewards);

// Sum of |advantage| over the group; equals 2G sqrt(p(1-p)).
double grpo_total_magnitude(std::span<const double> rewards);

// log(teacher / student) per outcome (reverse-KL form).
TokenAdvantage sdpo_token_advantage(const TruncatedDist& student, const TruncatedDist& teacher);

// 1/2 log(student / M), M the student/teacher mixture. Bounded above by 1/2 ln 2.
TokenAdvantage jsd_token_advantage(const TruncatedDist& student, const TruncatedDist& teacher);

namespace detail {
void sdpo_advantage_terms(std::span<const double> student, std::span<const double> teacher,
                          std::span<double> out);
void jsd_advantage_terms(std::span<const double> student, std::span<const double> teacher,
                         std::span<double> out);
}  // namespace detail

}  // namespace sdlab
