#pragma once

// Learnability of a Bernoulli reward under KL regularization, via the
// cumulant generating function K(t) = log E[exp(t Z)] of the centred reward
// evaluated at t = 1/beta. Raw rewards give a leading term p(1-p)/(2 beta^2);
// standardized rewards give 1/(2 beta^2) for every p.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace sdlab {

struct BernoulliReward {
  double p;
  double beta;

  // Throws DomainError unless 0 < p < 1 and beta > 0.
  BernoulliReward(double p, double beta);
};

struct StandardizedSupport {
  double value_success;  // sqrt((1-p)/p)
  double value_fail;     // -sqrt(p/(1-p))
};

StandardizedSupport standardized_support(double p);

double exact_kl_normalized(double p, double beta);
double exact_kl_raw(double p, double beta);
double leading_term_normalized(double beta);

// log(p e^a + (1-p) e^b), accurate both for tiny arguments (returns values
// far below 1 without cancellation) and for large ones (no overflow).
double two_point_log_mgf(double p, double a, double b);

struct ExpansionReport {
  double p = 0.0;
  std::vector<double> betas;      // grid actually used in the fit
  std::vector<double> residuals;  // exact_kl_normalized - 1/(2 beta^2)
  std::vector<double> dropped;    // betas whose |residual| fell below 1e-15
  double slope = 0.0;             // least-squares slope of log|residual| vs log beta
};

// Requires every beta >= 10 and at least four of them.
ExpansionReport verify_expansion(double p, std::span<const double> betas);

}  // namespace sdlab
