// Command-line front end for the stacking detector.
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stackdetect/harness.hpp"

namespace fs = std::filesystem;
using namespace stackdetect;

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("config", args.path, "experiment config (JSON)")->required();
    cmd->add_option("--set", args.overrides, "override a config key, e.g. --set ensemble.rf.n_trees=50");
}

std::vector<std::unique_ptr<Scorer>> collect_scorers(const std::string& dir, const std::vector<std::string>& files) {
    std::vector<std::unique_ptr<Scorer>> scorers;
    if (!dir.empty()) scorers = load_scorers(dir);
    for (const auto& f : files) scorers.push_back(load_scorer_file(f));
    if (scorers.empty()) throw ValidationError("no scorers given (use --scorers <dir> or --scorer <file>)");
    return scorers;
}

std::optional<CategoryField> category_arg(const std::string& value) {
    if (value.empty()) return std::nullopt;
    return parse_category_field(value);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stackdetect: probability-stacking detector for machine-generated text"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kLibraryVersion));

    std::string stats_path;
    bool stats_json = false;
    auto* stats = app.add_subcommand("stats", "print label and generator counts per split");
    stats->add_option("corpus", stats_path, "dataset JSONL")->required();
    stats->add_flag("--json", stats_json, "emit JSON instead of a table");

    ConfigArgs curate_args, train_scorer_args, score_args, train_ens_args, evaluate_args, run_args;
    auto* curate = app.add_subcommand("curate", "load corpora and apply curation steps");
    add_config_args(curate, curate_args);
    auto* train_scorer = app.add_subcommand("train-scorer", "fit or load every declared scorer");
    add_config_args(train_scorer, train_scorer_args);
    auto* score = app.add_subcommand("score", "build stacked train/test features");
    add_config_args(score, score_args);
    auto* train_ens = app.add_subcommand("train-ensemble", "fit the soft-voting meta-classifier");
    add_config_args(train_ens, train_ens_args);
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate on the test split and write reports");
    add_config_args(evaluate_cmd, evaluate_args);
    auto* run = app.add_subcommand("run", "run every stage in order");
    add_config_args(run, run_args);

    std::string zs_model, zs_corpus, zs_dir, zs_field;
    std::vector<std::string> zs_files;
    bool zs_table = false;
    auto* zero_shot = app.add_subcommand("zero-shot", "evaluate a saved model on a whole corpus without refitting");
    zero_shot->add_option("model", zs_model, "model.json")->required();
    zero_shot->add_option("corpus", zs_corpus, "dataset JSONL")->required();
    zero_shot->add_option("--scorers", zs_dir, "directory written by train-scorer");
    zero_shot->add_option("--scorer", zs_files, "single scorer file, repeatable, in manifest order");
    zero_shot->add_option("--category-field", zs_field, "domain or generator");
    zero_shot->add_flag("--table", zs_table, "print the plain-text table instead of JSON");

    std::string det_model, det_text, det_dir;
    std::vector<std::string> det_files;
    std::string det_input;
    auto* detect_cmd = app.add_subcommand("detect", "classify one text");
    detect_cmd->add_option("model", det_model, "model.json")->required();
    detect_cmd->add_option("--scorers", det_dir, "directory written by train-scorer (default: next to the model)");
    detect_cmd->add_option("--scorer", det_files, "single scorer file, repeatable, in manifest order");
    auto* text_opt = detect_cmd->add_option("--text", det_text, "text to classify");
    detect_cmd->add_option("input", det_input, "'-' reads the text from stdin (the default without --text)")
        ->check(CLI::IsMember({"-"}))
        ->excludes(text_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*stats) {
            const Corpus corpus = load_corpus(stats_path);
            const StatsTable table = corpus_stats(corpus);
            if (stats_json) std::cout << stats_to_json(table).dump(2) << '\n';
            else std::cout << render_stats(corpus, table);
        } else if (*curate) {
            const auto cfg = load_config(curate_args.path, curate_args.overrides);
            OutputLock lock(cfg.output_dir);
            const Corpus c = stage_curate(cfg);
            std::cout << render_stats(c, corpus_stats(c));
        } else if (*train_scorer) {
            const auto cfg = load_config(train_scorer_args.path, train_scorer_args.overrides);
            OutputLock lock(cfg.output_dir);
            stage_train_scorers(cfg);
        } else if (*score) {
            const auto cfg = load_config(score_args.path, score_args.overrides);
            OutputLock lock(cfg.output_dir);
            stage_score(cfg);
        } else if (*train_ens) {
            const auto cfg = load_config(train_ens_args.path, train_ens_args.overrides);
            OutputLock lock(cfg.output_dir);
            stage_train_ensemble(cfg);
        } else if (*evaluate_cmd) {
            const auto cfg = load_config(evaluate_args.path, evaluate_args.overrides);
            OutputLock lock(cfg.output_dir);
            stage_evaluate(cfg);
            std::ifstream table(cfg.output_dir / artifact::kReportTable);
            std::cout << table.rdbuf();
        } else if (*run) {
            const auto cfg = load_config(run_args.path, run_args.overrides);
            run_experiment(cfg);
            std::ifstream table(cfg.output_dir / artifact::kReportTable);
            std::cout << table.rdbuf();
        } else if (*zero_shot) {
            if (zs_dir.empty() && zs_files.empty()) zs_dir = (fs::path(zs_model).parent_path() / artifact::kScorerDir).string();
            const auto scorers = collect_scorers(zs_dir, zs_files);
            const auto ptrs = raw_pointers(scorers);
            const EvalReport r = zero_shot_eval(zs_model, zs_corpus, ptrs, category_arg(zs_field));
            if (zs_table) {
                const TableRow row{fs::path(zs_corpus).stem().string(), r.acc, r.f_macro, r.precision_macro,
                                   r.recall_macro};
                std::cout << render_table(std::span<const TableRow>(&row, 1));
            } else {
                std::cout << r.to_json().dump(2) << '\n';
            }
        } else if (*detect_cmd) {
            if (det_dir.empty() && det_files.empty()) det_dir = (fs::path(det_model).parent_path() / artifact::kScorerDir).string();
            std::string text = det_text;
            if (text_opt->count() == 0) {
                text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
            }
            const EnsembleModel model = EnsembleModel::load(det_model);
            const auto scorers = collect_scorers(det_dir, det_files);
            std::cout << verdict_to_json(detect(model, raw_pointers(scorers), text)).dump() << '\n';
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
