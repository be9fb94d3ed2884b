#include "sdlab/advantage.hpp"

#include <algorithm>
#include <cmath>

#include "sdlab/error.hpp"

namespace sdlab {

GroupAdvantages grpo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ParameterError("grpo_advantages: group size must be >= 2");
  const double g = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) {
    if (r != 0.0 && r != 1.0) throw ParameterError("grpo_advantages: rewards must be 0 or 1");
    sum += r;
  }
  const double mean = sum / g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double popstd = std::sqrt(var / g);

  GroupAdvantages out;
  out.pass_rate = mean;
  out.values.assign(rewards.size(), 0.0);
  if (popstd == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - mean) / popstd;
  return out;
}

double grpo_total_magnitude(std::span<const double> rewards) {
  const GroupAdvantages adv = grpo_advantages(rewards);
  double total = 0.0;
  for (double a : adv.values) total += std::abs(a);
  return total;
}

namespace detail {

void sdpo_advantage_terms(std::span<const double> student, std::span<const double> teacher,
                          std::span<double> out) {
  for (std::size_t i = 0; i < student.size(); ++i)
    out[i] = std::log(std::max(teacher[i], kLogFloor) / std::max(student[i], kLogFloor));
}

void jsd_advantage_terms(std::span<const double> student, std::span<const double> teacher,
                         std::span<double> out) {
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double m = 0.5 * (student[i] + teacher[i]);
    if (m == 0.0) {
      out[i] = 0.0;
      continue;
    }
    out[i] = 0.5 * std::log(std::max(student[i], kLogFloor) / std::max(m, kLogFloor));
  }
}

}  // namespace detail

TokenAdvantage sdpo_token_advantage(const TruncatedDist& student, const TruncatedDist& teacher) {
  if (!student.same_support_as(teacher))
    throw ShapeMismatch("sdpo_token_advantage: index sets differ");
  const auto s = student.outcomes();
  const auto t = teacher.outcomes();
  TokenAdvantage adv{std::vector<double>(s.size())};
  detail::sdpo_advantage_terms(s, t, adv.per_bucket);
  return adv;
}

TokenAdvantage jsd_token_advantage(const TruncatedDist& student, const TruncatedDist& teacher) {
  if (!student.same_support_as(teacher))
    throw ShapeMismatch("jsd_token_advantage: index sets differ");
  const auto s = student.outcomes();
  const auto t = teacher.outcomes();
  TokenAdvantage adv{std::vector<double>(s.size())};
  detail::jsd_advantage_terms(s, t, adv.per_bucket);
  return adv;
}

}  // namespace sdlab
