#include "sdlab/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "sdlab/error.hpp"
#include "sdlab/simd/kernels.hpp"

namespace sdlab {

AdamW::AdamW(AdamWConfig cfg, std::size_t size) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {
  if (!(cfg_.learning_rate > 0.0)) throw ParameterError("AdamW: learning rate must be > 0");
}

double AdamW::current_lr() const {
  if (cfg_.warmup_steps == 0) return cfg_.learning_rate;
  const double ramp = std::min(1.0, static_cast<double>(t_ + 1) /
                                        static_cast<double>(cfg_.warmup_steps));
  return cfg_.learning_rate * ramp;
}

void AdamW::step(Matrix& params, const Matrix& grad) {
  if (params.data.size() != m_.size() || grad.data.size() != m_.size())
    throw ShapeMismatch("AdamW: parameter size changed");
  simd::AdamCoeffs c;
  c.lr = current_lr();
  ++t_;
  c.beta1 = cfg_.beta1;
  c.beta2 = cfg_.beta2;
  c.eps = cfg_.eps;
  c.weight_decay = cfg_.weight_decay;
  c.bias_correction1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  c.bias_correction2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  simd::adamw_step(c, grad.data, params.data, m_, v_);
}

}  // namespace sdlab
