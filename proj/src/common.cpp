#include "stackdetect/common.hpp"

#include <cmath>
#include <cstdio>

namespace stackdetect {

std::string_view to_string(Label label) { return label == Label::Human ? "human" : "ai"; }

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Label parse_label(std::string_view text) {
    if (text == "human") return Label::Human;
    if (text == "ai") return Label::AI;
    throw ValidationError("unknown label value '" + std::string(text) + "' (expected \"human\" or \"ai\")");
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "test") return Split::Test;
    throw ValidationError("unknown split value '" + std::string(text) + "' (expected \"train\" or \"test\")");
}

void ProbVector::validate(double tol) const {
    if (!std::isfinite(p_human) || !std::isfinite(p_ai) || p_human < 0.0 || p_ai < 0.0 || p_human > 1.0 ||
        p_ai > 1.0) {
        throw ValidationError("probability entries must lie in [0,1], got [" + std::to_string(p_human) + ", " +
                              std::to_string(p_ai) + "]");
    }
    if (std::abs(p_human + p_ai - 1.0) > tol) {
        throw ValidationError("probabilities must sum to 1, got [" + std::to_string(p_human) + ", " +
                              std::to_string(p_ai) + "]");
    }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace stackdetect
