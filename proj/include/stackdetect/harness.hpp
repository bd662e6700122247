#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackdetect/corpus.hpp"
#include "stackdetect/ensemble.hpp"
#include "stackdetect/metrics.hpp"
#include "stackdetect/scorers.hpp"

namespace stackdetect {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct ScorerDecl {
    std::string id;
    std::string kind;  // ngram_lr | perplexity | file | remote
    nlohmann::json params = nlohmann::json::object();
    std::filesystem::path path;  // file scorers
};

struct CurationStep {
    enum class Op { Remove, Substitute };
    struct Replacement {
        std::set<std::string> generators;
        std::filesystem::path path;
    };

    Op op = Op::Remove;
    std::set<std::string> generators;  // remove
    std::set<Split> splits{Split::Train};
    bool strict = false;
    std::vector<Replacement> replacements;  // substitute
    bool allow_count_mismatch = false;
};

struct ZeroShotDecl {
    std::string name;
    std::filesystem::path path;
    std::optional<CategoryField> category_field;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    std::vector<std::filesystem::path> corpus_paths;
    bool strict_keys = false;
    std::vector<CurationStep> curation;
    std::vector<ScorerDecl> scorers;
    EnsembleConfig ensemble;
    int oof_folds = 5;  // train-split features of trainable scorers come from k-fold refits; 0 = in-sample
    std::optional<CategoryField> category_field;
    std::vector<ZeroShotDecl> zero_shot;

    std::string fingerprint;  // hash of config bytes plus applied overrides

    /// Relative paths are resolved against `base_dir`.
    static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

    /// Referenced files exist, scorer ids are unique, settings are in range. Throws ValidationError.
    void validate() const;
};

/// Applies `key.path=value` overrides (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file; STACKDETECT_SEED (when set) replaces the seed after overrides.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

struct RunManifest {
    std::string fingerprint;
    std::vector<std::string> artifacts;
    std::map<std::string, double> timings_ms;
    std::string library_version = kLibraryVersion;

    nlohmann::json to_json() const;
};

/// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path lockfile_;
};

// Artifact layout under the output directory.
namespace artifact {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kScorerDir = "scorers";
inline constexpr const char* kScorerIndex = "index.json";
inline constexpr const char* kTrainFeatures = "features_train.json";
inline constexpr const char* kTestFeatures = "features_test.json";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kReportTable = "report.txt";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kLock = ".lock";
}  // namespace artifact

nlohmann::json stats_to_json(const StatsTable& stats);
std::string render_stats(const Corpus& corpus, const StatsTable& stats);

/// Builds one scorer from its declaration. Trainable kinds are fit on `train`.
std::unique_ptr<Scorer> build_scorer(const ScorerDecl& decl, std::span<const Sample* const> train, std::uint64_t seed);

/// Writes scorers/<id>.json plus an ordered index.
void save_scorers(const std::vector<std::unique_ptr<Scorer>>& scorers, const std::filesystem::path& dir);
std::vector<std::unique_ptr<Scorer>> load_scorers(const std::filesystem::path& dir);
std::unique_ptr<Scorer> load_scorer_file(const std::filesystem::path& file);

std::vector<const Scorer*> raw_pointers(const std::vector<std::unique_ptr<Scorer>>& scorers);

/// Train-split stacking with k-fold out-of-fold outputs for trainable scorers (k >= 2).
StackedFeatures stack_out_of_fold(std::span<const Sample* const> train, const std::vector<ScorerDecl>& decls,
                                  const std::vector<std::unique_ptr<Scorer>>& full_scorers, int folds,
                                  std::uint64_t seed);

// Pipeline stages. Each reads its inputs from, and writes its outputs to, cfg.output_dir.
Corpus stage_curate(const ExperimentConfig& cfg);
void stage_train_scorers(const ExperimentConfig& cfg);
void stage_score(const ExperimentConfig& cfg);
void stage_train_ensemble(const ExperimentConfig& cfg);
nlohmann::json stage_evaluate(const ExperimentConfig& cfg);

struct ExperimentResult {
    nlohmann::json report;
    RunManifest manifest;
};

/// Runs every stage under an output-directory lock and writes manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Picks the breakdown field: `requested` if given (every sample must carry it),
/// otherwise domain when every sample has one.
std::optional<CategoryField> choose_category_field(const Corpus& corpus, std::optional<CategoryField> requested);

/// Scores every sample of `corpus`, predicts and evaluates. No fitting.
EvalReport evaluate_corpus(const EnsembleModel& model, const Corpus& corpus, std::span<const Scorer* const> scorers,
                           std::optional<CategoryField> category_field, std::vector<Verdict>* verdicts = nullptr);

/// Manifest of the model must equal the scorer ids, in order.
void check_manifest(const EnsembleModel& model, std::span<const Scorer* const> scorers);

EvalReport zero_shot_eval(const std::filesystem::path& model_path, const std::filesystem::path& corpus_path,
                          std::span<const Scorer* const> scorers,
                          std::optional<CategoryField> category_field = std::nullopt);

nlohmann::json verdict_to_json(const Verdict& v);

/// Scores raw text with text-capable scorers and returns the verdict.
Verdict detect(const EnsembleModel& model, std::span<const Scorer* const> scorers, std::string_view text);

}  // namespace stackdetect
