#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "stackdetect/corpus.hpp"
#include "stackdetect/ensemble.hpp"
#include "stackdetect/optim.hpp"

namespace synth {

/// Standard normal draw (Box-Muller on SplitMix64).
double gaussian(stackdetect::SplitMix64& rng);

/// Corpus with the AuText per-generator train/test counts; texts are placeholders.
stackdetect::Corpus table2_corpus();

/// AI-labelled train-only corpus of `n` samples attributed to `generator`.
stackdetect::Corpus replacement_corpus(const std::string& name, std::size_t n, const std::string& generator);

/// Balanced corpus whose classes differ by a planted set of marker words.
/// `signal` is the per-token probability of drawing a class marker.
stackdetect::Corpus planted_corpus(std::size_t n, std::uint64_t seed, double signal = 0.15, double test_fraction = 0.25);

/// Zero-shot corpus shaped like a small essay set: 394 human / 352 ai with domain categories.
stackdetect::Corpus essay_corpus(std::uint64_t seed);

/// Stacked features from `scorers` emulated scorers: 2*scorers Gaussian columns with class
/// means -mean / +mean and std sigma; half human, half ai, interleaved.
stackdetect::StackedFeatures blobs(std::size_t n, std::uint64_t seed, std::size_t scorers = 2, double mean = 0.3,
                                   double sigma = 0.15);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace synth
