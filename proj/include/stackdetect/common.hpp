#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stackdetect {

/// Raised when input data or configuration violates a documented contract.
/// The CLI maps this to exit code 2; every other exception maps to 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { Human = 0, AI = 1 };
enum class Split : std::uint8_t { Train = 0, Test = 1 };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);  // "human" | "ai"
Split parse_split(std::string_view text);  // "train" | "test"

/// Two-class probability vector, p_human + p_ai == 1.
struct ProbVector {
    double p_human = 0.5;
    double p_ai = 0.5;

    static ProbVector from_ai(double p_ai) { return {1.0 - p_ai, p_ai}; }

    /// Throws ValidationError if either entry leaves [0,1] or the sum is off by more than tol.
    void validate(double tol = 1e-9) const;

    bool operator==(const ProbVector&) const = default;
};

/// 64-bit FNV-1a. Used for feature hashing and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

}  // namespace stackdetect
