#include <doctest.h>

#include <cmath>
#include <vector>

#include "stackdetect/kernels.hpp"
#include "stackdetect/optim.hpp"

using namespace stackdetect;
namespace k = stackdetect::kernels;

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    double (*sum_squares)(const double*, std::size_t);
};

std::vector<std::pair<k::Isa, Table>> vector_tables() {
    std::vector<std::pair<k::Isa, Table>> out;
#if defined(__x86_64__) || defined(_M_X64)
    if (k::isa_available(k::Isa::Avx2)) {
        out.push_back({k::Isa::Avx2, {k::avx2::dot, k::avx2::axpy, k::avx2::scale, k::avx2::sum_squares}});
    }
#endif
#if defined(__aarch64__)
    if (k::isa_available(k::Isa::Neon)) {
        out.push_back({k::Isa::Neon, {k::neon::dot, k::neon::axpy, k::neon::scale, k::neon::sum_squares}});
    }
#endif
    return out;
}

std::vector<double> random_vector(SplitMix64& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = (rng.uniform() - 0.5) * std::ldexp(1.0, static_cast<int>(rng.below(20)) - 10);
    return v;
}

}  // namespace

TEST_CASE("vector kernels agree with the scalar reference") {
    const auto tables = vector_tables();
    if (tables.empty()) MESSAGE("no vector ISA available; only the scalar path is exercised");
    SplitMix64 rng(42);
    for (const auto& [isa, t] : tables) {
        CAPTURE(k::to_string(isa));
        for (int trial = 0; trial < 400; ++trial) {
            const std::size_t n = rng.below(260);
            const std::size_t off = rng.below(4);  // misaligned starts
            auto a = random_vector(rng, n + off);
            auto b = random_vector(rng, n + off);
            const double alpha = rng.uniform() * 4.0 - 2.0;

            const double ref_dot = k::scalar::dot(a.data() + off, b.data() + off, n);
            double abs_sum = 0.0;
            for (std::size_t i = off; i < n + off; ++i) abs_sum += std::abs(a[i] * b[i]);
            CHECK(std::abs(t.dot(a.data() + off, b.data() + off, n) - ref_dot) <= 1e-13 * abs_sum + 1e-300);

            const double ref_ss = k::scalar::sum_squares(a.data() + off, n);
            CHECK(std::abs(t.sum_squares(a.data() + off, n) - ref_ss) <= 1e-13 * ref_ss + 1e-300);

            auto y_ref = b, y = b;
            k::scalar::axpy(alpha, a.data() + off, y_ref.data() + off, n);
            t.axpy(alpha, a.data() + off, y.data() + off, n);
            CHECK(y == y_ref);

            auto s_ref = a, s = a;
            k::scalar::scale(alpha, s_ref.data() + off, n);
            t.scale(alpha, s.data() + off, n);
            CHECK(s == s_ref);
        }
    }
}

TEST_CASE("scalar reference matches a naive loop") {
    SplitMix64 rng(3);
    const auto a = random_vector(rng, 37);
    const auto b = random_vector(rng, 37);
    double naive = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) naive += a[i] * b[i];
    CHECK(k::scalar::dot(a.data(), b.data(), a.size()) == doctest::Approx(naive).epsilon(1e-14));
    CHECK(k::scalar::dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("dispatch entry points") {
    const k::Isa original = k::active_isa();
    CHECK(k::isa_available(k::Isa::Scalar));
    std::vector<double> a{1, 2, 3}, b{4, 5, 6}, c{1, 2};
    CHECK_THROWS_AS(k::dot(a, c), std::invalid_argument);
    CHECK_THROWS_AS(k::axpy(1.0, a, c), std::invalid_argument);

    k::force_isa(k::Isa::Scalar);
    CHECK(k::active_isa() == k::Isa::Scalar);
    CHECK(k::dot(a, b) == 32.0);
    CHECK(k::sum_squares(a) == 14.0);
    k::axpy(2.0, a, b);
    CHECK(b == std::vector<double>{6, 9, 12});
    k::scale(0.5, b);
    CHECK(b == std::vector<double>{3, 4.5, 6});

    for (k::Isa isa : {k::Isa::Avx2, k::Isa::Neon}) {
        if (!k::isa_available(isa)) CHECK_THROWS_AS(k::force_isa(isa), std::invalid_argument);
    }
    k::force_isa(original);
}
