#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackdetect/common.hpp"
#include "stackdetect/corpus.hpp"
#include "stackdetect/optim.hpp"
#include "stackdetect/scorers.hpp"

namespace stackdetect {

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    void append_row(std::span<const double> values);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Per-sample concatenation of constituent probability vectors:
/// row = [p_human^1, p_ai^1, ..., p_human^k, p_ai^k] in manifest order.
struct StackedFeatures {
    std::vector<std::string> manifest;
    std::vector<std::string> ids;
    Matrix rows;
    std::vector<Label> labels;

    std::size_t width() const { return 2 * manifest.size(); }
    std::size_t size() const { return ids.size(); }

    /// Checks shape, range and pairwise sum-to-one; throws ValidationError.
    void validate() const;

    nlohmann::json to_json() const;
    static StackedFeatures from_json(const nlohmann::json& j);

    bool operator==(const StackedFeatures&) const = default;
};

/// Stacks the given samples. Coverage of every scorer is checked before any scoring.
StackedFeatures stack_samples(std::span<const Sample* const> samples, std::span<const Scorer* const> scorers);

/// Stacks one split of a corpus; errors on an empty split.
StackedFeatures stack_features(const Corpus& corpus, std::span<const Scorer* const> scorers, Split split);

// ---------------------------------------------------------------------------
// meta-learners

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero-variance features get 1

    static Standardizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
    void apply(std::span<const double> in, std::span<double> out) const;
};

struct LogisticConfig {
    double lr = 0.1;
    int epochs = 500;
    double l2 = 1e-4;
};

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> loss_history;  // objective before each epoch and after the last; not serialized

    double decision(std::span<const double> x) const;
    double predict_ai(std::span<const double> x) const { return sigmoid(decision(x)); }
};

/// Mean logistic loss + l2/2 * |w|^2 (bias unpenalised). Gradients written when non-null.
double logistic_objective(const Matrix& x, std::span<const double> targets, std::span<const double> weights, double bias,
                          double l2, std::vector<double>* grad_w, double* grad_b);

/// Full-batch gradient descent from zero. A step that raises the objective by more than 1e-9
/// is retried at half the step size.
LogisticModel fit_logistic(const Matrix& x, std::span<const Label> labels, const LogisticConfig& cfg = {});

struct GaussianNb {
    std::array<double, 2> prior{};  // indexed by Label
    std::array<std::vector<double>, 2> mean;
    std::array<std::vector<double>, 2> var;  // already floored
    double eps = 1e-9;

    double predict_ai(std::span<const double> x) const;
};

/// Per-class mean/variance; variances floored at eps * (largest feature variance of x).
GaussianNb fit_gnb(const Matrix& x, std::span<const Label> labels, double eps = 1e-9);

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 1;
    int mtry = 0;  // 0 means ceil(sqrt(d))
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double p_ai = 0.0;  // leaf class distribution
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    double predict_ai(std::span<const double> x) const;
};

struct RandomForest {
    std::vector<DecisionTree> trees;

    double predict_ai(std::span<const double> x) const;
};

/// Gini-split trees on bootstrap resamples; tree t draws from a stream seeded by (seed, t) only.
RandomForest fit_random_forest(const Matrix& x, std::span<const Label> labels, const ForestConfig& cfg = {});

struct SvmConfig {
    double lambda = 1e-4;
    int epochs = 20;
    std::uint64_t seed = 0;
};

struct LinearSvm {
    std::vector<double> weights;
    double bias = 0.0;
    LogisticMap platt;

    double decision(std::span<const double> x) const;
    double predict_ai(std::span<const double> x) const { return platt(decision(x)); }
};

/// lambda/2 * (|w|^2 + b^2) + mean hinge loss, labels as +-1 (AI = +1). Subgradient written when non-null.
double svm_objective(const Matrix& x, std::span<const Label> labels, std::span<const double> weights, double bias,
                     double lambda, std::vector<double>* grad_w, double* grad_b);

/// Pegasos on the objective above, then Platt scaling of the training decision values.
LinearSvm fit_linear_svm(const Matrix& x, std::span<const Label> labels, const SvmConfig& cfg = {});

// ---------------------------------------------------------------------------

struct EnsembleConfig {
    std::uint64_t seed = 0;
    LogisticConfig lr;
    ForestConfig rf;
    SvmConfig svm;
    double gnb_eps = 1e-9;

    nlohmann::json to_json() const;
    static EnsembleConfig from_json(const nlohmann::json& j);
};

enum class Learner : std::uint8_t { LR = 0, GNB = 1, RF = 2, SVM = 3 };
inline constexpr std::array<const char*, 4> kLearnerNames{"lr", "gnb", "rf", "svm"};

struct Verdict {
    Label label = Label::Human;
    ProbVector prob;
    std::array<ProbVector, 4> per_learner;  // indexed by Learner
};

/// Soft vote: arithmetic mean of the learners' vectors; AI only when p_ai > p_human strictly.
Verdict soft_vote(const std::array<ProbVector, 4>& per_learner);

class EnsembleModel {
public:
    std::vector<std::string> manifest;
    EnsembleConfig config;
    Standardizer standardizer;
    LogisticModel lr;
    GaussianNb gnb;
    RandomForest rf;
    LinearSvm svm;
    std::string fingerprint;  // of the experiment config that produced the model, if any

    std::size_t width() const { return 2 * manifest.size(); }

    /// Throws ValidationError on a width mismatch.
    Verdict predict(std::span<const double> row) const;

    nlohmann::json to_json() const;
    static EnsembleModel from_json(const nlohmann::json& j);

    void save(const std::filesystem::path& path) const;
    static EnsembleModel load(const std::filesystem::path& path);
};

/// LR and SVM see standardized rows; GNB and RF see raw rows.
EnsembleModel fit_ensemble(const StackedFeatures& train, const EnsembleConfig& cfg = {});

/// Same fit on an arbitrary finite feature matrix (columns need not be probabilities).
/// Used for learner sanity checks on synthetic features.
EnsembleModel fit_ensemble(const Matrix& x, std::span<const Label> labels, std::vector<std::string> manifest,
                           const EnsembleConfig& cfg = {});

}  // namespace stackdetect
