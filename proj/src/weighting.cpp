#include "sdlab/weighting.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sdlab/error.hpp"

namespace sdlab {

PassRateEstimate pass_rate(std::span<const double> rewards) {
  if (rewards.empty()) throw ParameterError("pass_rate: empty group");
  PassRateEstimate est;
  est.g = rewards.size();
  for (double r : rewards) {
    if (r != 0.0 && r != 1.0) throw ParameterError("pass_rate: rewards must be 0 or 1");
    if (r == 1.0) ++est.k;
  }
  est.p_hat = static_cast<double>(est.k) / static_cast<double>(est.g);
  return est;
}

double raw_weight(double p_hat, double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("raw_weight: alpha must be > 0");
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw ParameterError("raw_weight: p_hat outside [0, 1]");
  const double var = p_hat * (1.0 - p_hat);
  if (var == 0.0) return 0.0;
  return std::pow(var, alpha);
}

WeightVector normalize_batch(std::span<const double> raw) {
  WeightVector w;
  w.raw.assign(raw.begin(), raw.end());
  w.normalized.assign(raw.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!(raw[j] >= 0.0) || !std::isfinite(raw[j]))
      throw ParameterError("normalize_batch: raw weights must be finite and >= 0");
    if (raw[j] > 0.0) {
      w.active_set.push_back(j);
      sum += raw[j];
    }
  }
  if (w.active_set.empty()) return w;
  const double mean = sum / static_cast<double>(w.active_set.size());
  for (std::size_t j : w.active_set) w.normalized[j] = raw[j] / mean;
  return w;
}

WeightVector batch_weights(std::span<const double> pass_rates, double alpha) {
  std::vector<double> raw(pass_rates.size());
  for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = raw_weight(pass_rates[j], alpha);
  WeightVector w = normalize_batch(raw);
  w.alpha = alpha;
  return w;
}

double hard_filter_weight(double p_hat, double lo, double hi) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
    throw ParameterError("hard_filter_weight: need 0 <= lo <= hi <= 1");
  return (p_hat >= lo && p_hat <= hi) ? 1.0 : 0.0;
}

FrozenWeightTable::FrozenWeightTable(const std::map<QuestionId, double>& initial_pass_rates,
                                     double alpha)
    : alpha_(alpha) {
  std::vector<double> raw;
  raw.reserve(initial_pass_rates.size());
  for (const auto& [id, p] : initial_pass_rates) raw.push_back(raw_weight(p, alpha));
  const WeightVector w = normalize_batch(raw);
  std::size_t j = 0;
  for (const auto& [id, p] : initial_pass_rates) weights_[id] = w.normalized[j++];
}

double FrozenWeightTable::weight(QuestionId id) const {
  auto it = weights_.find(id);
  if (it == weights_.end())
    throw ConfigError("frozen weight table has no entry for question " + std::to_string(id));
  return it->second;
}

void FrozenWeightTable::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["alpha"] = alpha_;
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [id, v] : weights_) w[std::to_string(id)] = v;
  j["weights"] = std::move(w);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

FrozenWeightTable FrozenWeightTable::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    FrozenWeightTable t;
    t.alpha_ = j.at("alpha").get<double>();
    for (const auto& [key, v] : j.at("weights").items())
      t.weights_[std::stoll(key)] = v.get<double>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

FrozenWeightTable frozen_weight_table(const std::map<QuestionId, double>& initial_pass_rates,
                                      double alpha) {
  return FrozenWeightTable(initial_pass_rates, alpha);
}

}  // namespace sdlab
