#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stackdetect/common.hpp"

namespace stackdetect {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Logistic loss of a logit against a {0,1} target; also valid for fractional targets.
inline double logistic_loss(double logit, double target) {
    return target * log1pexp(-logit) + (1.0 - target) * log1pexp(logit);
}

/// Smoothed targets from Platt (1999): positives (N+ + 1)/(N+ + 2), negatives 1/(N- + 2).
std::vector<double> platt_targets(std::span<const Label> labels);

/// p_ai = sigmoid(slope * x + intercept).
struct LogisticMap {
    double slope = 0.0;
    double intercept = 0.0;

    double operator()(double x) const { return sigmoid(slope * x + intercept); }
};

/// Fits a 1-D logistic map by damped Newton iterations on
///   mean_i logistic_loss(slope*x_i + intercept, t_i) + slope_l2/2 * slope^2.
/// The intercept is never penalised. Constant inputs give slope 0 and the prior logit.
LogisticMap fit_logistic_1d(std::span<const double> x, std::span<const double> targets, double slope_l2 = 1e-3,
                            int max_iter = 100);

/// Deterministic 64-bit generator (splitmix64); used where a stream must depend only on its seed.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound) by rejection; bound > 0.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % bound;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Fisher-Yates with SplitMix64.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace stackdetect
