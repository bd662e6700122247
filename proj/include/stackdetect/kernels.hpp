#pragma once

// Dense double-precision kernels used by the gradient trainers.
//
// Every kernel has a scalar reference implementation; vector variants are
// selected once at startup from the CPU's capabilities. `axpy` and `scale`
// are bit-identical across variants (no FMA contraction). `dot` and
// `sum_squares` reassociate the sum, so results agree with the scalar
// reference only to rounding.
//
// Setting STACKDETECT_ISA=scalar in the environment forces the reference
// path, which makes trained models byte-identical across machines.

#include <cstddef>
#include <span>
#include <string_view>

namespace stackdetect::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);

/// ISA currently used by the dispatching entry points.
Isa active_isa();

/// True when `isa` can run on this CPU (and was compiled in).
bool isa_available(Isa isa);

/// Overrides dispatch; throws std::invalid_argument if unavailable. Not thread-safe.
void force_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);  // y += alpha * x
void scale(double alpha, std::span<double> y);                              // y *= alpha
double sum_squares(std::span<const double> x);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace neon
#endif

}  // namespace stackdetect::kernels
