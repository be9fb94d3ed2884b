#include <cmath>

#include "sdlab/simd/kernels.hpp"

namespace sdlab::simd::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_squares(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void lerp(double rate, const double* x, double* y, std::size_t n) {
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < n; ++i) y[i] = keep * y[i] + rate * x[i];
}

void scale(double a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void adamw_step(const AdamCoeffs& c, const double* g, double* w, double* m, double* v,
                std::size_t n) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    w[i] = w[i] - c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * w[i]);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::Scalar, dot, sum_squares, axpy, lerp, scale, adamw_step};
  return t;
}

}  // namespace sdlab::simd::scalar
