#pragma once

// Data-parallel inner loops of the policy and optimizer.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant chosen at runtime from CPUID. Elementwise kernels (axpy, lerp,
// adamw_step, scale) perform the same IEEE operations per lane as the scalar
// loop and are bitwise identical to it; reductions (dot, sum_squares) use a
// different summation order and agree to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace sdlab::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

struct AdamCoeffs {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = (1 - rate) * y + rate * x
  void (*lerp)(double rate, const double* x, double* y, std::size_t n);
  // y *= a
  void (*scale)(double a, double* y, std::size_t n);
  // Decoupled-weight-decay Adam update of w in place.
  void (*adamw_step)(const AdamCoeffs& c, const double* g, double* w, double* m, double* v,
                     std::size_t n);
};

bool isa_supported(Isa isa);

// Best ISA the host supports.
Isa detect_isa();

const KernelTable& kernels_for(Isa isa);

// Table used by the free functions below. Defaults to detect_isa().
const KernelTable& active();

// Throws ParameterError if the host lacks the ISA. Not thread-safe with
// concurrent kernel calls; meant for process start-up and tests.
void set_active_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
double sum_squares(std::span<const double> a);
void axpy(double a, std::span<const double> x, std::span<double> y);
void lerp(double rate, std::span<const double> x, std::span<double> y);
void scale(double a, std::span<double> y);
void adamw_step(const AdamCoeffs& c, std::span<const double> g, std::span<double> w,
                std::span<double> m, std::span<double> v);

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// nullptr when the build has no AVX2 translation unit.
const KernelTable* table();
}

}  // namespace sdlab::simd
