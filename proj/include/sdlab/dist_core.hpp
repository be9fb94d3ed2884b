#pragma once

// Probability vectors over a finite vocabulary, KL and Jensen-Shannon
// divergences, and top-K truncation with a tail bucket.
//
// Conventions: all arithmetic is double precision; terms with p(y) == 0
// contribute 0 to a divergence. On a TruncatedDist the tail bucket is an
// ordinary outcome.

#include <cstddef>
#include <span>
#include <vector>

namespace sdlab {

inline constexpr double kMassTolerance = 1e-9;

class ProbVector {
 public:
  // Validates: entries finite and >= 0, sum within kMassTolerance of 1.
  explicit ProbVector(std::vector<double> mass);

  std::size_t size() const { return mass_.size(); }
  double operator[](std::size_t i) const { return mass_[i]; }
  std::span<const double> mass() const { return mass_; }

 private:
  std::vector<double> mass_;
};

// Mass on an ordered set of K token ids plus one bucket for everything else.
class TruncatedDist {
 public:
  TruncatedDist(std::vector<std::size_t> indices, std::vector<double> bucket_mass,
                double tail_mass);

  std::size_t k() const { return indices_.size(); }
  std::span<const std::size_t> indices() const { return indices_; }
  std::span<const double> bucket_mass() const { return bucket_mass_; }
  double tail_mass() const { return tail_mass_; }

  // K buckets followed by the tail: the K+1 outcomes divergences range over.
  std::vector<double> outcomes() const;

  bool same_support_as(const TruncatedDist& other) const;

 private:
  std::vector<std::size_t> indices_;
  std::vector<double> bucket_mass_;
  double tail_mass_;
};

// Rescale non-negative weights to sum to 1.
ProbVector normalize(std::span<const double> raw);

double kl_divergence(const ProbVector& p, const ProbVector& q);
double kl_divergence(const TruncatedDist& p, const TruncatedDist& q);

double jsd(const ProbVector& p, const ProbVector& q);
double jsd(const TruncatedDist& p, const TruncatedDist& q);

// Keep the k most probable tokens, ties to the lower token id.
TruncatedDist truncate_top_k(const ProbVector& p, std::size_t k);

// Gather p on the template's index set; the rest goes to the tail.
TruncatedDist project_onto(const ProbVector& p, const TruncatedDist& templ);

namespace detail {
// Unchecked kernels over aligned outcome arrays, shared with the trainer.
double kl_terms(std::span<const double> p, std::span<const double> q);
double jsd_terms(std::span<const double> p, std::span<const double> q);
}  // namespace detail

}  // namespace sdlab
