#include "sdlab/dist_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sdlab/error.hpp"

namespace sdlab {
namespace {

void check_masses(std::span<const double> m, const char* what) {
  for (double x : m)
    if (!std::isfinite(x) || x < 0.0)
      throw InvalidDistribution(std::string(what) + ": entries must be finite and non-negative");
}

}  // namespace

ProbVector::ProbVector(std::vector<double> mass) : mass_(std::move(mass)) {
  if (mass_.empty()) throw InvalidDistribution("ProbVector: empty");
  check_masses(mass_, "ProbVector");
  const double total = std::accumulate(mass_.begin(), mass_.end(), 0.0);
  if (std::abs(total - 1.0) > kMassTolerance)
    throw InvalidDistribution("ProbVector: mass sums to " + std::to_string(total));
}

TruncatedDist::TruncatedDist(std::vector<std::size_t> indices, std::vector<double> bucket_mass,
                             double tail_mass)
    : indices_(std::move(indices)), bucket_mass_(std::move(bucket_mass)), tail_mass_(tail_mass) {
  if (indices_.size() != bucket_mass_.size())
    throw InvalidDistribution("TruncatedDist: index/bucket length mismatch");
  if (indices_.empty()) throw InvalidDistribution("TruncatedDist: needs at least one bucket");
  std::vector<std::size_t> sorted = indices_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidDistribution("TruncatedDist: duplicate index");
  check_masses(bucket_mass_, "TruncatedDist");
  check_masses(std::span<const double>(&tail_mass_, 1), "TruncatedDist tail");
  const double total = std::accumulate(bucket_mass_.begin(), bucket_mass_.end(), tail_mass_);
  if (std::abs(total - 1.0) > kMassTolerance)
    throw InvalidDistribution("TruncatedDist: mass sums to " + std::to_string(total));
}

std::vector<double> TruncatedDist::outcomes() const {
  std::vector<double> out(bucket_mass_);
  out.push_back(tail_mass_);
  return out;
}

bool TruncatedDist::same_support_as(const TruncatedDist& other) const {
  return std::equal(indices_.begin(), indices_.end(), other.indices_.begin(), other.indices_.end());
}

ProbVector normalize(std::span<const double> raw) {
  if (raw.empty()) throw InvalidDistribution("normalize: empty input");
  check_masses(raw, "normalize");
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  if (!(total > 0.0)) throw InvalidDistribution("normalize: all-zero input");
  std::vector<double> out(raw.begin(), raw.end());
  for (double& x : out) x /= total;
  return ProbVector(std::move(out));
}

namespace detail {

double kl_terms(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw SupportMismatch("kl_divergence: p(y) > 0 where q(y) = 0");
    s += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative for p ~= q.
  return std::max(s, 0.0);
}

double jsd_terms(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? 0.5 * p[i] * std::log(p[i] / m) : 0.0;
    const double b = q[i] > 0.0 ? 0.5 * q[i] * std::log(q[i] / m) : 0.0;
    s += a + b;  // per-outcome pairing keeps jsd(p, q) == jsd(q, p) bitwise
  }
  return std::max(s, 0.0);
}

}  // namespace detail

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ShapeMismatch("kl_divergence: vocabulary sizes differ");
  return detail::kl_terms(p.mass(), q.mass());
}

double kl_divergence(const TruncatedDist& p, const TruncatedDist& q) {
  if (!p.same_support_as(q)) throw ShapeMismatch("kl_divergence: truncated index sets differ");
  return detail::kl_terms(p.outcomes(), q.outcomes());
}

double jsd(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ShapeMismatch("jsd: vocabulary sizes differ");
  return detail::jsd_terms(p.mass(), q.mass());
}

double jsd(const TruncatedDist& p, const TruncatedDist& q) {
  if (!p.same_support_as(q)) throw ShapeMismatch("jsd: truncated index sets differ");
  return detail::jsd_terms(p.outcomes(), q.outcomes());
}

TruncatedDist truncate_top_k(const ProbVector& p, std::size_t k) {
  if (k < 1 || k > p.size())
    throw ParameterError("truncate_top_k: k must be in [1, V], got " + std::to_string(k));
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return p[a] > p[b] || (p[a] == p[b] && a < b);
                    });
  // Tail is the sum of the excluded entries, so it is exactly 0 when k == V.
  double tail = 0.0;
  for (std::size_t i = k; i < order.size(); ++i) tail += p[order[i]];
  order.resize(k);
  std::vector<double> buckets(k);
  for (std::size_t i = 0; i < k; ++i) buckets[i] = p[order[i]];
  return TruncatedDist(std::move(order), std::move(buckets), tail);
}

TruncatedDist project_onto(const ProbVector& p, const TruncatedDist& templ) {
  std::vector<std::size_t> idx(templ.indices().begin(), templ.indices().end());
  std::vector<double> buckets(idx.size());
  std::vector<bool> kept(p.size(), false);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= p.size()) throw ShapeMismatch("project_onto: template index out of range");
    buckets[i] = p[idx[i]];
    kept[idx[i]] = true;
  }
  double tail = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v)
    if (!kept[v]) tail += p[v];
  return TruncatedDist(std::move(idx), std::move(buckets), tail);
}

}  // namespace sdlab
