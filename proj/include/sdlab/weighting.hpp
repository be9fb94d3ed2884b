#pragma once

// Question-level weights from empirical pass rates: the [p(1-p)]^alpha raw
// weight, batch-adaptive normalization to unit mean over informative
// questions, and the baseline schemes (hard filter, frozen table).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace sdlab {

struct PassRateEstimate {
  std::size_t k = 0;  // successes
  std::size_t g = 0;  // group size
  double p_hat = 0.0;
};

struct WeightVector {
  std::vector<double> raw;
  std::vector<double> normalized;
  std::vector<std::size_t> active_set;  // indices with raw > 0
  double alpha = 0.0;  // 0 when the raw weights did not come from raw_weight()
};

PassRateEstimate pass_rate(std::span<const double> rewards);

double raw_weight(double p_hat, double alpha);

// w_j / mean(w over active set) on the active set, 0 elsewhere.
WeightVector normalize_batch(std::span<const double> raw);

// Convenience: raw_weight over a batch of pass rates, then normalize_batch.
WeightVector batch_weights(std::span<const double> pass_rates, double alpha);

// 1 when lo <= p_hat <= hi, else 0. Bounds inclusive.
double hard_filter_weight(double p_hat, double lo, double hi);

using QuestionId = std::int64_t;

// Pass-rate weights estimated once before training and never updated.
// Normalized over the nonzero entries of the whole table.
class FrozenWeightTable {
 public:
  FrozenWeightTable() = default;
  FrozenWeightTable(const std::map<QuestionId, double>& initial_pass_rates, double alpha);

  // Throws ConfigError for an unknown id.
  double weight(QuestionId id) const;
  const std::map<QuestionId, double>& weights() const { return weights_; }
  double alpha() const { return alpha_; }

  void save_json(const std::filesystem::path& path) const;
  static FrozenWeightTable load_json(const std::filesystem::path& path);

 private:
  std::map<QuestionId, double> weights_;
  double alpha_ = 1.0;
};

FrozenWeightTable frozen_weight_table(const std::map<QuestionId, double>& initial_pass_rates,
                                      double alpha);

}  // namespace sdlab
