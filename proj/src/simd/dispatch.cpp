#include <atomic>
#include <cassert>

#include "sdlab/error.hpp"
#include "sdlab/simd/kernels.hpp"

namespace sdlab::simd {

#ifndef SDLAB_HAVE_AVX2
namespace avx2 {
const KernelTable* table() { return nullptr; }
}  // namespace avx2
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(SDLAB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return avx2::table() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa))
    throw ParameterError("ISA not supported on this host: " + std::string(isa_name(isa)));
  if (isa == Isa::Avx2) return *avx2::table();
  return scalar::table();
}

namespace {
std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&kernels_for(detect_isa())};
  return slot;
}
}  // namespace

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) { active_slot().store(&kernels_for(isa), std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double sum_squares(std::span<const double> a) { return active().sum_squares(a.data(), a.size()); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(a, x.data(), y.data(), y.size());
}

void lerp(double rate, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().lerp(rate, x.data(), y.data(), y.size());
}

void scale(double a, std::span<double> y) { active().scale(a, y.data(), y.size()); }

void adamw_step(const AdamCoeffs& c, std::span<const double> g, std::span<double> w,
                std::span<double> m, std::span<double> v) {
  assert(g.size() == w.size() && m.size() == w.size() && v.size() == w.size());
  active().adamw_step(c, g.data(), w.data(), m.data(), v.data(), w.size());
}

}  // namespace sdlab::simd
