#pragma once

#include <cstdint>
#include <vector>

#include "sdlab/matrix.hpp"

namespace sdlab {

struct AdamWConfig {
  double learning_rate = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled
  std::uint64_t warmup_steps = 10;  // linear ramp of the learning rate
};

// Adam with decoupled weight decay and linear warmup. One instance per
// parameter matrix.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::size_t size);

  void step(Matrix& params, const Matrix& grad);

  std::uint64_t steps_taken() const { return t_; }
  double current_lr() const;  // learning rate the next step will use

 private:
  AdamWConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

}  // namespace sdlab
