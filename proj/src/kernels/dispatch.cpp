#include <cstdlib>
#include <stdexcept>
#include <string>

#include "stackdetect/kernels.hpp"

namespace stackdetect::kernels {

namespace {

struct Table {
    Isa isa;
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    double (*sum_squares)(const double*, std::size_t);
};

constexpr Table kScalar{Isa::Scalar, scalar::dot, scalar::axpy, scalar::scale, scalar::sum_squares};
#if defined(__x86_64__) || defined(_M_X64)
constexpr Table kAvx2{Isa::Avx2, avx2::dot, avx2::axpy, avx2::scale, avx2::sum_squares};
#endif
#if defined(__aarch64__)
constexpr Table kNeon{Isa::Neon, neon::dot, neon::axpy, neon::scale, neon::sum_squares};
#endif

const Table* table_for(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return &kScalar;
        case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return &kAvx2;
#else
            return nullptr;
#endif
        case Isa::Neon:
#if defined(__aarch64__)
            return &kNeon;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

const Table* detect() {
    if (const char* env = std::getenv("STACKDETECT_ISA"); env != nullptr && std::string(env) == "scalar") {
        return &kScalar;
    }
#if defined(__aarch64__)
    return &kNeon;
#elif (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2")) return &kAvx2;
    return &kScalar;
#else
    return &kScalar;
#endif
}

const Table*& current() {
    static const Table* table = detect();
    return table;
}

void check_sizes(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument("kernel operands differ in length");
}

}  // namespace

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return "scalar";
        case Isa::Avx2:
            return "avx2";
        case Isa::Neon:
            return "neon";
    }
    return "unknown";
}

Isa active_isa() { return current()->isa; }

bool isa_available(Isa isa) {
    if (table_for(isa) == nullptr) return false;
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
    if (isa == Isa::Avx2) {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2");
    }
#endif
    return true;
}

void force_isa(Isa isa) {
    if (!isa_available(isa)) {
        throw std::invalid_argument("ISA " + std::string(to_string(isa)) + " is not available on this machine");
    }
    current() = table_for(isa);
}

double dot(std::span<const double> a, std::span<const double> b) {
    check_sizes(a.size(), b.size());
    return current()->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    check_sizes(x.size(), y.size());
    current()->axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> y) { current()->scale(alpha, y.data(), y.size()); }

double sum_squares(std::span<const double> x) { return current()->sum_squares(x.data(), x.size()); }

}  // namespace stackdetect::kernels
