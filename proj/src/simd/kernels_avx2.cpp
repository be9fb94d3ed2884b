// Compiled with -mavx2. Only reached after a CPUID check.
#include <immintrin.h>

#include <cmath>

#include "sdlab/simd/kernels.hpp"

namespace sdlab::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1,
                         _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_squares(const double* a, std::size_t n) { return dot(a, a, n); }

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void lerp(double rate, const double* x, double* y, std::size_t n) {
  const double keep = 1.0 - rate;
  const __m256d vk = _mm256_set1_pd(keep);
  const __m256d vr = _mm256_set1_pd(rate);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_add_pd(_mm256_mul_pd(vk, _mm256_loadu_pd(y + i)),
                               _mm256_mul_pd(vr, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = keep * y[i] + rate * x[i];
}

void scale(double a, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] *= a;
}

void adamw_step(const AdamCoeffs& c, const double* g, double* w, double* m, double* v,
                std::size_t n) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
  const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d wd = _mm256_set1_pd(c.weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d vw = _mm256_loadu_pd(w + i);
    const __m256d vm = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1, vg));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(vm, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d dir = _mm256_add_pd(_mm256_div_pd(m_hat, _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps)),
                                      _mm256_mul_pd(wd, vw));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(vw, _mm256_mul_pd(lr, dir)));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    w[i] = w[i] - c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * w[i]);
  }
}

}  // namespace

const KernelTable* table() {
  static const KernelTable t{Isa::Avx2, dot, sum_squares, axpy, lerp, scale, adamw_step};
  return &t;
}

}  // namespace sdlab::simd::avx2
