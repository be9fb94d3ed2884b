#include "sdlab/learnability.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdlab/error.hpp"

namespace sdlab {
namespace {

constexpr double kResidualFloor = 1e-15;

void check_p(double p, const char* fn) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError(std::string(fn) + ": p must lie strictly inside (0, 1)");
}

void check_beta(double beta, const char* fn) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw DomainError(std::string(fn) + ": beta must be positive and finite");
}

}  // namespace

BernoulliReward::BernoulliReward(double p_, double beta_) : p(p_), beta(beta_) {
  check_p(p, "BernoulliReward");
  check_beta(beta, "BernoulliReward");
}

StandardizedSupport standardized_support(double p) {
  check_p(p, "standardized_support");
  return {std::sqrt((1.0 - p) / p), -std::sqrt(p / (1.0 - p))};
}

double two_point_log_mgf(double p, double a, double b) {
  const double hi = std::max(a, b);
  if (hi <= 1.0 && std::min(a, b) >= -1.0) {
    // E[e^X] - 1 without cancellation, then log1p.
    return std::log1p(p * std::expm1(a) + (1.0 - p) * std::expm1(b));
  }
  return hi + std::log(p * std::exp(a - hi) + (1.0 - p) * std::exp(b - hi));
}

double exact_kl_normalized(double p, double beta) {
  check_beta(beta, "exact_kl_normalized");
  const StandardizedSupport s = standardized_support(p);
  return std::max(0.0, two_point_log_mgf(p, s.value_success / beta, s.value_fail / beta));
}

double exact_kl_raw(double p, double beta) {
  check_p(p, "exact_kl_raw");
  check_beta(beta, "exact_kl_raw");
  return std::max(0.0, two_point_log_mgf(p, (1.0 - p) / beta, -p / beta));
}

double leading_term_normalized(double beta) {
  check_beta(beta, "leading_term_normalized");
  return 1.0 / (2.0 * beta * beta);
}

ExpansionReport verify_expansion(double p, std::span<const double> betas) {
  check_p(p, "verify_expansion");
  if (betas.size() < 4) throw ParameterError("verify_expansion: need at least 4 beta values");
  ExpansionReport rep;
  rep.p = p;
  for (double beta : betas) {
    if (!(beta >= 10.0)) throw ParameterError("verify_expansion: every beta must be >= 10");
    const double r = exact_kl_normalized(p, beta) - leading_term_normalized(beta);
    if (std::abs(r) < kResidualFloor) {
      rep.dropped.push_back(beta);
      continue;
    }
    rep.betas.push_back(beta);
    rep.residuals.push_back(r);
  }
  const std::size_t n = rep.betas.size();
  if (n < 2) throw ParameterError("verify_expansion: fewer than 2 points above precision floor");

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(rep.betas[i]);
    my += std::log(std::abs(rep.residuals[i]));
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(rep.betas[i]) - mx;
    sxy += dx * (std::log(std::abs(rep.residuals[i])) - my);
    sxx += dx * dx;
  }
  rep.slope = sxy / sxx;
  return rep;
}

}  // namespace sdlab
