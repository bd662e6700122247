#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stackdetect/common.hpp"
#include "stackdetect/corpus.hpp"
#include "stackdetect/optim.hpp"

namespace stackdetect {

/// A constituent detector: maps a sample to [p_human, p_ai].
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual const std::string& id() const = 0;
    virtual std::string_view kind() const = 0;

    /// False for scorers that can only look samples up by id.
    virtual bool scores_text() const { return true; }

    virtual ProbVector score(std::string_view text) const = 0;
    virtual ProbVector score_sample(const Sample& s) const { return score(s.text); }

    /// Batch form; the default loops over score_sample. Output order matches input order.
    virtual std::vector<ProbVector> score_samples(std::span<const Sample* const> samples) const;

    /// Ids among `samples` this scorer cannot score (empty for text scorers).
    virtual std::vector<std::string> missing(std::span<const Sample* const> samples) const;

    /// Self-describing serialized form ("kind" and "id" keys plus parameters).
    virtual nlohmann::json to_json() const = 0;
};

/// Plain whitespace tokenization on raw text; casing is preserved.
std::vector<std::string_view> split_whitespace(std::string_view text);

// ---------------------------------------------------------------------------
// n-gram logistic detector

struct NgramLrConfig {
    std::size_t buckets = std::size_t{1} << 18;      // hash space
    std::size_t max_features = std::size_t{1} << 18;  // most frequent buckets kept
    double l2 = 1e-4;
    double lr = 2.0;
    int epochs = 300;
    std::uint64_t seed = 0;  // salts the feature hash
};

struct SparseRow {
    std::vector<std::uint32_t> index;
    std::vector<double> value;
};

/// Mean logistic loss plus l2/2 * |w|^2 over sparse rows; gradients are written when non-null.
double sparse_logistic_objective(std::span<const SparseRow> rows, std::span<const double> targets,
                                 std::span<const double> weights, double bias, double l2,
                                 std::vector<double>* grad_w, double* grad_b);

class NgramLrScorer final : public Scorer {
public:
    NgramLrScorer(std::string id, NgramLrConfig cfg, std::vector<std::uint32_t> vocabulary, std::vector<double> idf,
                  std::vector<double> weights, double bias);

    const std::string& id() const override { return id_; }
    std::string_view kind() const override { return "ngram_lr"; }
    ProbVector score(std::string_view text) const override;
    nlohmann::json to_json() const override;
    static NgramLrScorer from_json(const nlohmann::json& j);

    /// Unnormalised bucket counts of char 2-4-grams and word unigrams.
    static std::unordered_map<std::uint32_t, double> bucket_counts(std::string_view text, const NgramLrConfig& cfg);

    /// tf-idf row over the kept vocabulary, L2-normalised.
    SparseRow featurize(std::string_view text) const;
    double decision(std::string_view text) const;

    const std::vector<std::uint32_t>& vocabulary() const { return vocabulary_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& idf() const { return idf_; }
    double bias() const { return bias_; }
    const NgramLrConfig& config() const { return cfg_; }

private:
    std::string id_;
    NgramLrConfig cfg_;
    std::vector<std::uint32_t> vocabulary_;  // bucket id per feature index, ascending
    std::unordered_map<std::uint32_t, std::uint32_t> feature_of_;
    std::vector<double> idf_;
    std::vector<double> weights_;
    double bias_ = 0.0;
};

/// Trains on the given samples (all of them, whatever their split).
NgramLrScorer train_ngram_lr(std::string id, std::span<const Sample* const> train, const NgramLrConfig& cfg = {});
/// Trains on the Train split of `corpus`.
NgramLrScorer train_ngram_lr(std::string id, const Corpus& corpus, const NgramLrConfig& cfg = {});

// ---------------------------------------------------------------------------
// n-gram language-model perplexity detector

struct PerplexityConfig {
    int order = 3;
    double k = 0.5;  // add-k smoothing, must be > 0

    static constexpr std::size_t kCalibrationFolds = 5;
};

/// Token n-gram LM with add-k smoothing over an open vocabulary (id 0 is UNK).
class NgramLanguageModel {
public:
    static constexpr std::uint32_t kUnk = 0;
    static constexpr std::uint32_t kBos = 1;
    static constexpr std::uint32_t kEos = 2;

    NgramLanguageModel() = default;
    NgramLanguageModel(int order, double k);

    void add_text(std::string_view text);

    /// Average negative log-likelihood per predicted token (EOS included).
    double log_perplexity(std::string_view text) const;
    double log_prob(const std::vector<std::string_view>& tokens) const;

    int order() const { return order_; }
    double k() const { return k_; }
    std::size_t vocab_size() const { return words_.size(); }

    nlohmann::json to_json() const;
    static NgramLanguageModel from_json(const nlohmann::json& j);

private:
    std::uint32_t lookup(std::string_view token) const;
    std::vector<std::uint32_t> encode(const std::vector<std::string_view>& tokens) const;
    static std::string pack(const std::uint32_t* ids, std::size_t n);

    int order_ = 3;
    double k_ = 0.5;
    std::vector<std::string> words_;  // index = token id
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::unordered_map<std::string, std::uint64_t> ngrams_;
    std::unordered_map<std::string, std::uint64_t> contexts_;
};

class PerplexityScorer final : public Scorer {
public:
    PerplexityScorer(std::string id, NgramLanguageModel lm, LogisticMap calibration);

    const std::string& id() const override { return id_; }
    std::string_view kind() const override { return "perplexity"; }
    ProbVector score(std::string_view text) const override;
    nlohmann::json to_json() const override;
    static PerplexityScorer from_json(const nlohmann::json& j);

    const NgramLanguageModel& lm() const { return lm_; }
    const LogisticMap& calibration() const { return calibration_; }

    /// Clamp applied to calibrated outputs so both entries stay inside (0,1).
    static constexpr double kEdge = 1e-12;

private:
    std::string id_;
    NgramLanguageModel lm_;
    LogisticMap calibration_;
};

/// LM built from human-labelled samples only. The calibration is fit on every sample's
/// log-perplexity under an LM that excluded the sample's fold (sample i is in fold i mod 5).
PerplexityScorer train_perplexity_scorer(std::string id, std::span<const Sample* const> train,
                                         const PerplexityConfig& cfg = {});
PerplexityScorer train_perplexity_scorer(std::string id, const Corpus& corpus, const PerplexityConfig& cfg = {});

/// Maps log-perplexity values to p_ai with Platt-smoothed targets.
LogisticMap fit_perplexity_calibration(std::span<const double> log_ppl, std::span<const Label> labels);

// ---------------------------------------------------------------------------
// precomputed probabilities

class FileScorer final : public Scorer {
public:
    FileScorer(std::string id, std::filesystem::path source = {});

    const std::string& id() const override { return id_; }
    std::string_view kind() const override { return "file"; }
    bool scores_text() const override { return false; }
    ProbVector score(std::string_view text) const override;  // always throws
    ProbVector score_sample(const Sample& s) const override { return score_by_id(s.id); }
    std::vector<std::string> missing(std::span<const Sample* const> samples) const override;
    nlohmann::json to_json() const override;

    ProbVector score_by_id(const std::string& sample_id) const;
    bool contains(const std::string& sample_id) const { return table_.contains(sample_id); }
    std::size_t size() const { return order_.size(); }

    /// Throws ValidationError on a duplicate id.
    void insert(const std::string& sample_id, ProbVector p);

    /// Rows in insertion order.
    std::vector<std::pair<std::string, ProbVector>> rows() const;

    const std::filesystem::path& source() const { return source_; }

private:
    std::string id_;
    std::filesystem::path source_;
    std::unordered_map<std::string, ProbVector> table_;
    std::vector<std::string> order_;
};

/// Keeps rows whose "scorer" equals `scorer_id`; rows must sum to 1 within 1e-6.
FileScorer load_prob_file(const std::filesystem::path& path, const std::string& scorer_id);
FileScorer parse_prob_file(std::istream& in, const std::string& scorer_id, const std::string& source_name);
void save_prob_file(const FileScorer& scorer, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// remote inference

struct RemoteConfig {
    std::string endpoint;  // http://host:port/path
    std::size_t max_batch = 32;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds timeout{30000};
};

/// Raised when the endpoint cannot be reached after all retry attempts.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One POST of {"texts": [...]}; expects {"probs": [[p_human, p_ai], ...]} in request order.
std::vector<ProbVector> remote_score(const RemoteConfig& cfg, std::span<const std::string> texts);

/// Validates a decoded response body against the request size.
std::vector<ProbVector> parse_remote_response(const nlohmann::json& body, std::size_t expected);

class RemoteScorer final : public Scorer {
public:
    RemoteScorer(std::string id, RemoteConfig cfg);

    const std::string& id() const override { return id_; }
    std::string_view kind() const override { return "remote"; }
    ProbVector score(std::string_view text) const override;
    std::vector<ProbVector> score_samples(std::span<const Sample* const> samples) const override;
    nlohmann::json to_json() const override;

    const RemoteConfig& config() const { return cfg_; }

private:
    std::string id_;
    RemoteConfig cfg_;
};

/// Rebuilds any scorer from its to_json() form. File scorers reload their source file.
std::unique_ptr<Scorer> scorer_from_json(const nlohmann::json& j);

}  // namespace stackdetect
