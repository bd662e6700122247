#include "stackdetect/harness.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stackdetect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void require_artifact(const fs::path& path, const char* producer) {
    if (!fs::exists(path)) {
        throw ValidationError("missing artifact " + path.string() + " (run `" + producer + "` first)");
    }
}

std::set<std::string> string_set(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw ValidationError(std::string(what) + " must be a non-empty array of strings");
    std::set<std::string> out;
    for (const auto& v : j) out.insert(v.get<std::string>());
    return out;
}

bool trainable(const std::string& kind) { return kind == "ngram_lr" || kind == "perplexity"; }

std::string safe_filename(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

std::vector<Label> labels_of(const Corpus& c) {
    std::vector<Label> out;
    out.reserve(c.size());
    for (const auto& s : c) out.push_back(s.label);
    return out;
}

EvalReport build_report(const Corpus& corpus, std::span<const Label> preds, std::optional<CategoryField> field) {
    const auto truth = labels_of(corpus);
    EvalReport r = evaluate(truth, preds);
    if (field) {
        r.category_field = std::string(to_string(*field));
        r.per_category = category_accuracy(corpus, preds, *field);
    }
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    const auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q.lexically_normal() : (base_dir / q).lexically_normal();
    };

    ExperimentConfig cfg;
    cfg.name = doc.value("name", cfg.name);
    cfg.seed = doc.value("seed", cfg.seed);
    if (!doc.contains("output_dir")) throw ValidationError("config: 'output_dir' is required");
    cfg.output_dir = resolve(doc["output_dir"].get<std::string>());

    if (!doc.contains("corpus")) throw ValidationError("config: 'corpus' is required");
    const auto& corpus = doc["corpus"];
    if (corpus.is_string()) {
        cfg.corpus_paths.push_back(resolve(corpus.get<std::string>()));
    } else {
        if (corpus.contains("paths")) {
            for (const auto& p : corpus["paths"]) cfg.corpus_paths.push_back(resolve(p.get<std::string>()));
        }
        for (const char* key : {"train", "test"}) {
            if (corpus.contains(key)) cfg.corpus_paths.push_back(resolve(corpus[key].get<std::string>()));
        }
        cfg.strict_keys = corpus.value("strict_keys", false);
    }

    for (const auto& step : doc.value("curation", json::array())) {
        CurationStep cs;
        const auto op = step.at("op").get<std::string>();
        if (op == "remove") {
            cs.op = CurationStep::Op::Remove;
            cs.generators = string_set(step.at("generators"), "remove.generators");
            if (step.contains("splits")) {
                cs.splits.clear();
                for (const auto& s : step["splits"]) cs.splits.insert(parse_split(s.get<std::string>()));
            }
            cs.strict = step.value("strict", false);
        } else if (op == "substitute") {
            cs.op = CurationStep::Op::Substitute;
            for (const auto& r : step.at("replacements")) {
                cs.replacements.push_back(
                    {string_set(r.at("generators"), "substitute.generators"), resolve(r.at("path").get<std::string>())});
            }
            cs.allow_count_mismatch = step.value("allow_count_mismatch", false);
        } else {
            throw ValidationError("config: unknown curation op '" + op + "'");
        }
        cfg.curation.push_back(std::move(cs));
    }

    if (!doc.contains("scorers") || !doc["scorers"].is_array()) throw ValidationError("config: 'scorers' array is required");
    for (const auto& s : doc["scorers"]) {
        ScorerDecl d;
        d.id = s.at("id").get<std::string>();
        d.kind = s.at("kind").get<std::string>();
        if (s.contains("path")) d.path = resolve(s["path"].get<std::string>());
        d.params = s.value("params", json::object());
        for (const auto& [key, value] : s.items()) {
            if (key != "id" && key != "kind" && key != "path" && key != "params") d.params[key] = value;
        }
        cfg.scorers.push_back(std::move(d));
    }

    const json ens = doc.value("ensemble", json::object());
    cfg.ensemble = EnsembleConfig::from_json(ens);
    cfg.ensemble.seed = cfg.seed;
    cfg.oof_folds = ens.value("oof", cfg.oof_folds);

    if (doc.contains("evaluation") && doc["evaluation"].contains("category_field")) {
        cfg.category_field = parse_category_field(doc["evaluation"]["category_field"].get<std::string>());
    }
    for (const auto& z : doc.value("zero_shot", json::array())) {
        ZeroShotDecl zd;
        zd.name = z.at("name").get<std::string>();
        zd.path = resolve(z.at("path").get<std::string>());
        if (z.contains("category_field")) zd.category_field = parse_category_field(z["category_field"].get<std::string>());
        cfg.zero_shot.push_back(std::move(zd));
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    const auto need = [](const fs::path& p, const std::string& what) {
        if (!fs::is_regular_file(p)) throw ValidationError("config: " + what + " not found: " + p.string());
    };
    if (corpus_paths.empty()) throw ValidationError("config: no corpus paths");
    for (const auto& p : corpus_paths) need(p, "corpus file");
    for (const auto& step : curation) {
        for (const auto& r : step.replacements) need(r.path, "replacement corpus");
    }
    if (scorers.empty()) throw ValidationError("config: at least one scorer is required");
    std::set<std::string> ids;
    for (const auto& s : scorers) {
        if (s.id.empty()) throw ValidationError("config: scorer id must be non-empty");
        if (!ids.insert(s.id).second) throw ValidationError("config: duplicate scorer id '" + s.id + "'");
        if (s.kind == "file") {
            if (s.path.empty()) throw ValidationError("config: file scorer '" + s.id + "' needs a 'path'");
            need(s.path, "probability file for scorer '" + s.id + "'");
        } else if (s.kind == "remote") {
            if (!s.params.contains("endpoint")) throw ValidationError("config: remote scorer '" + s.id + "' needs an 'endpoint'");
        } else if (!trainable(s.kind)) {
            throw ValidationError("config: scorer '" + s.id + "' has unknown kind '" + s.kind + "'");
        }
    }
    if (oof_folds < 0 || oof_folds == 1) throw ValidationError("config: ensemble.oof must be 0 or >= 2");
    for (const auto& z : zero_shot) need(z.path, "zero-shot corpus '" + z.name + "'");
    if (output_dir.empty()) throw ValidationError("config: output_dir is empty");
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* at = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ValidationError("override has an empty path segment: " + assignment);
        json* next;
        if (at->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(part);
            } catch (const std::exception&) {
                throw ValidationError("override indexes an array with '" + part + "'");
            }
            if (idx >= at->size()) throw ValidationError("override index out of range: " + assignment);
            next = &(*at)[idx];
        } else {
            if (!at->is_object()) *at = json::object();
            next = &(*at)[part];
        }
        if (dot == std::string::npos) {
            *next = std::move(value);
            return;
        }
        at = next;
        start = dot + 1;
    }
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
    const std::string bytes = read_file(path);
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    std::uint64_t h = fnv1a64(bytes);
    for (const auto& o : overrides) {
        apply_override(doc, o);
        h = fnv1a64("\n" + o, h);
    }
    if (const char* env = std::getenv("STACKDETECT_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        errno = 0;
        const unsigned long long seed = std::strtoull(env, &end, 10);
        if (errno != 0 || end == env || *end != '\0') throw ValidationError("STACKDETECT_SEED must be an unsigned integer");
        doc["seed"] = static_cast<std::uint64_t>(seed);
        h = fnv1a64(std::string("\nSTACKDETECT_SEED=") + env, h);
    }
    try {
        ExperimentConfig cfg = ExperimentConfig::from_json(doc, fs::absolute(path).parent_path());
        cfg.fingerprint = hex64(h);
        return cfg;
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
}

json RunManifest::to_json() const {
    return json{{"config_fingerprint", fingerprint},
                {"artifacts", artifacts},
                {"timings_ms", timings_ms},
                {"library_version", library_version}};
}

OutputLock::OutputLock(const fs::path& dir) : lockfile_(dir / artifact::kLock) {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(lockfile_.c_str(), "wx");
    if (f == nullptr) {
        const int err = errno;
        lockfile_.clear();
        if (err == EEXIST) {
            throw std::runtime_error("output directory " + dir.string() +
                                     " is locked by another run (delete .lock if it is stale)");
        }
        throw std::runtime_error("cannot create lock file in " + dir.string() + ": " + std::strerror(err));
    }
    std::fclose(f);
}

OutputLock::~OutputLock() {
    if (!lockfile_.empty()) {
        std::error_code ec;
        fs::remove(lockfile_, ec);
    }
}

// ---------------------------------------------------------------------------
// reporting helpers

json stats_to_json(const StatsTable& stats) {
    json out = json::object();
    for (Split sp : {Split::Train, Split::Test}) {
        json gens = json::object();
        for (const auto& [key, n] : stats.by_generator) {
            if (key.first == sp) gens[key.second] = n;
        }
        out[std::string(to_string(sp))] = {{"human", stats.count(sp, Label::Human)},
                                           {"ai", stats.count(sp, Label::AI)},
                                           {"total", stats.split_size(sp)},
                                           {"generators", gens}};
    }
    out["total"] = stats.total();
    return out;
}

std::string render_stats(const Corpus& corpus, const StatsTable& stats) {
    std::ostringstream out;
    out << "corpus: " << corpus.name() << "  samples: " << corpus.size() << "\n\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %10s %10s %10s\n", "split", "human", "ai", "total");
    out << line;
    for (Split sp : {Split::Train, Split::Test}) {
        std::snprintf(line, sizeof line, "%-6s %10zu %10zu %10zu\n", std::string(to_string(sp)).c_str(),
                      stats.count(sp, Label::Human), stats.count(sp, Label::AI), stats.split_size(sp));
        out << line;
    }
    std::size_t width = 9;
    for (const auto& [key, _] : stats.by_generator) width = std::max(width, key.second.size());
    std::snprintf(line, sizeof line, "\n%-6s %-*s %10s\n", "split", static_cast<int>(width), "generator", "count");
    out << line;
    for (const auto& [key, n] : stats.by_generator) {
        std::snprintf(line, sizeof line, "%-6s %-*s %10zu\n", std::string(to_string(key.first)).c_str(),
                      static_cast<int>(width), key.second.c_str(), n);
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// scorers

std::unique_ptr<Scorer> build_scorer(const ScorerDecl& decl, std::span<const Sample* const> train, std::uint64_t seed) {
    const auto& p = decl.params;
    try {
        if (decl.kind == "ngram_lr") {
            NgramLrConfig c;
            c.buckets = p.value("buckets", c.buckets);
            c.max_features = p.value("max_features", c.max_features);
            c.l2 = p.value("l2", c.l2);
            c.lr = p.value("lr", c.lr);
            c.epochs = p.value("epochs", c.epochs);
            c.seed = p.value("seed", seed);
            return std::make_unique<NgramLrScorer>(train_ngram_lr(decl.id, train, c));
        }
        if (decl.kind == "perplexity") {
            PerplexityConfig c;
            c.order = p.value("order", c.order);
            c.k = p.value("k", c.k);
            return std::make_unique<PerplexityScorer>(train_perplexity_scorer(decl.id, train, c));
        }
        if (decl.kind == "file") return std::make_unique<FileScorer>(load_prob_file(decl.path, decl.id));
        if (decl.kind == "remote") {
            json j = p;
            j["kind"] = "remote";
            j["id"] = decl.id;
            return scorer_from_json(j);
        }
    } catch (const json::exception& e) {
        throw ValidationError("scorer '" + decl.id + "': bad parameter: " + e.what());
    }
    throw ValidationError("scorer '" + decl.id + "': unknown kind '" + decl.kind + "'");
}

void save_scorers(const std::vector<std::unique_ptr<Scorer>>& scorers, const fs::path& dir) {
    fs::create_directories(dir);
    json index = json::array();
    for (const auto& s : scorers) {
        const std::string file = safe_filename(s->id()) + ".json";
        write_file(dir / file, s->to_json().dump() + "\n");
        index.push_back({{"id", s->id()}, {"kind", s->kind()}, {"file", file}});
    }
    write_file(dir / artifact::kScorerIndex, json{{"scorers", index}}.dump(2) + "\n");
}

std::unique_ptr<Scorer> load_scorer_file(const fs::path& file) {
    try {
        return scorer_from_json(read_json(file));
    } catch (const json::exception& e) {
        throw ValidationError("scorer file " + file.string() + ": " + e.what());
    }
}

std::vector<std::unique_ptr<Scorer>> load_scorers(const fs::path& dir) {
    const fs::path index_path = dir / artifact::kScorerIndex;
    require_artifact(index_path, "train-scorer");
    std::vector<std::unique_ptr<Scorer>> out;
    const json index = read_json(index_path);
    for (const auto& entry : index.at("scorers")) {
        out.push_back(load_scorer_file(dir / entry.at("file").get<std::string>()));
    }
    return out;
}

std::vector<const Scorer*> raw_pointers(const std::vector<std::unique_ptr<Scorer>>& scorers) {
    std::vector<const Scorer*> out;
    out.reserve(scorers.size());
    for (const auto& s : scorers) out.push_back(s.get());
    return out;
}

StackedFeatures stack_out_of_fold(std::span<const Sample* const> train, const std::vector<ScorerDecl>& decls,
                                  const std::vector<std::unique_ptr<Scorer>>& full_scorers, int folds,
                                  std::uint64_t seed) {
    if (folds < 2) throw ValidationError("out-of-fold stacking needs at least 2 folds");
    if (decls.size() != full_scorers.size()) throw std::invalid_argument("stack_out_of_fold: scorer count mismatch");
    if (train.size() < static_cast<std::size_t>(folds)) throw ValidationError("out-of-fold stacking: fewer samples than folds");

    std::vector<std::size_t> perm(train.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    SplitMix64 rng(seed ^ 0x0f0f0f0f0f0f0f0fULL);
    shuffle(perm, rng);
    std::vector<int> fold_of(train.size());
    for (std::size_t p = 0; p < perm.size(); ++p) fold_of[perm[p]] = static_cast<int>(p % static_cast<std::size_t>(folds));

    // coverage of non-trainable scorers first, so nothing is fit before a coverage error
    std::vector<const Scorer*> plain;
    for (std::size_t k = 0; k < decls.size(); ++k) {
        if (!trainable(decls[k].kind)) plain.push_back(full_scorers[k].get());
    }
    for (const Scorer* s : plain) {
        if (!s->missing(train).empty()) {
            // stack_samples reports the missing ids
            stack_samples(train, std::span<const Scorer* const>(&s, 1));
        }
    }

    StackedFeatures out;
    for (const auto& s : full_scorers) out.manifest.push_back(s->id());
    out.rows = Matrix(train.size(), out.width());
    for (std::size_t k = 0; k < decls.size(); ++k) {
        std::vector<ProbVector> probs(train.size());
        if (!trainable(decls[k].kind)) {
            probs = full_scorers[k]->score_samples(train);
        } else {
            for (int f = 0; f < folds; ++f) {
                std::vector<const Sample*> fit_on, held_out;
                std::vector<std::size_t> held_idx;
                for (std::size_t i = 0; i < train.size(); ++i) {
                    if (fold_of[i] == f) {
                        held_out.push_back(train[i]);
                        held_idx.push_back(i);
                    } else {
                        fit_on.push_back(train[i]);
                    }
                }
                const auto scorer = build_scorer(decls[k], fit_on, seed);
                const auto fold_probs = scorer->score_samples(held_out);
                for (std::size_t h = 0; h < held_idx.size(); ++h) probs[held_idx[h]] = fold_probs[h];
            }
        }
        for (std::size_t i = 0; i < train.size(); ++i) {
            out.rows(i, 2 * k) = probs[i].p_human;
            out.rows(i, 2 * k + 1) = probs[i].p_ai;
        }
    }
    for (const Sample* s : train) {
        out.ids.push_back(s->id);
        out.labels.push_back(s->label);
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// stages

Corpus stage_curate(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<Sample> samples;
    std::vector<std::string> provenance;
    for (const auto& path : cfg.corpus_paths) {
        Corpus part = load_corpus(path, {cfg.strict_keys});
        provenance.push_back("load " + path.filename().string() + " samples=" + std::to_string(part.size()));
        samples.insert(samples.end(), part.samples().begin(), part.samples().end());
    }
    Corpus corpus(cfg.name, std::move(samples), std::move(provenance));

    for (const auto& step : cfg.curation) {
        if (step.op == CurationStep::Op::Remove) {
            corpus = remove_generators(corpus, step.generators, step.splits, {step.strict});
        } else {
            std::vector<Substitution> mapping;
            for (const auto& r : step.replacements) mapping.push_back({r.generators, load_corpus(r.path, {cfg.strict_keys})});
            auto result = substitute_generators(corpus, mapping, {step.allow_count_mismatch});
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
            corpus = std::move(result.corpus);
        }
    }

    fs::create_directories(cfg.output_dir);
    save_corpus(corpus, cfg.output_dir / artifact::kCorpus);
    json stats{{"name", corpus.name()}, {"provenance", corpus.provenance()}, {"stats", stats_to_json(corpus_stats(corpus))}};
    write_file(cfg.output_dir / artifact::kStats, stats.dump(2) + "\n");
    return corpus;
}

namespace {

Corpus load_curated(const ExperimentConfig& cfg) {
    const fs::path corpus_path = cfg.output_dir / artifact::kCorpus;
    const fs::path stats_path = cfg.output_dir / artifact::kStats;
    require_artifact(corpus_path, "curate");
    require_artifact(stats_path, "curate");
    const Corpus loaded = load_corpus(corpus_path);
    const json stats = read_json(stats_path);
    return Corpus(stats.at("name").get<std::string>(), loaded.samples(),
                  stats.at("provenance").get<std::vector<std::string>>());
}

void check_scorer_ids(const ExperimentConfig& cfg, const std::vector<std::unique_ptr<Scorer>>& scorers) {
    bool same = scorers.size() == cfg.scorers.size();
    for (std::size_t i = 0; same && i < scorers.size(); ++i) same = scorers[i]->id() == cfg.scorers[i].id;
    if (!same) {
        std::string have, want;
        for (const auto& s : scorers) have += (have.empty() ? "" : ", ") + s->id();
        for (const auto& d : cfg.scorers) want += (want.empty() ? "" : ", ") + d.id;
        throw ValidationError("trained scorers [" + have + "] do not match the config's scorer list [" + want +
                              "] (rerun `train-scorer`)");
    }
}

}  // namespace

void stage_train_scorers(const ExperimentConfig& cfg) {
    cfg.validate();
    const Corpus corpus = load_curated(cfg);
    const auto train = corpus.split(Split::Train);
    if (train.empty()) throw ValidationError("train-scorer: the curated corpus has no train samples");
    std::vector<std::unique_ptr<Scorer>> scorers;
    for (const auto& decl : cfg.scorers) scorers.push_back(build_scorer(decl, train, cfg.seed));
    save_scorers(scorers, cfg.output_dir / artifact::kScorerDir);
}

void stage_score(const ExperimentConfig& cfg) {
    cfg.validate();
    const Corpus corpus = load_curated(cfg);
    const auto scorers = load_scorers(cfg.output_dir / artifact::kScorerDir);
    check_scorer_ids(cfg, scorers);
    const auto ptrs = raw_pointers(scorers);

    const auto train = corpus.split(Split::Train);
    const auto test = corpus.split(Split::Test);
    if (train.empty()) throw ValidationError("score: train split is empty");
    if (test.empty()) throw ValidationError("score: test split is empty");
    const StackedFeatures train_features = cfg.oof_folds >= 2
                                               ? stack_out_of_fold(train, cfg.scorers, scorers, cfg.oof_folds, cfg.seed)
                                               : stack_samples(train, ptrs);
    const StackedFeatures test_features = stack_samples(test, ptrs);
    write_file(cfg.output_dir / artifact::kTrainFeatures, train_features.to_json().dump() + "\n");
    write_file(cfg.output_dir / artifact::kTestFeatures, test_features.to_json().dump() + "\n");
}

void stage_train_ensemble(const ExperimentConfig& cfg) {
    const fs::path path = cfg.output_dir / artifact::kTrainFeatures;
    require_artifact(path, "score");
    const StackedFeatures train = StackedFeatures::from_json(read_json(path));
    EnsembleModel model = fit_ensemble(train, cfg.ensemble);
    model.fingerprint = cfg.fingerprint;
    model.save(cfg.output_dir / artifact::kModel);
}

json stage_evaluate(const ExperimentConfig& cfg) {
    const fs::path model_path = cfg.output_dir / artifact::kModel;
    const fs::path features_path = cfg.output_dir / artifact::kTestFeatures;
    require_artifact(model_path, "train-ensemble");
    require_artifact(features_path, "score");
    const EnsembleModel model = EnsembleModel::load(model_path);
    const StackedFeatures test = StackedFeatures::from_json(read_json(features_path));
    if (test.manifest != model.manifest) throw ValidationError("evaluate: test features and model disagree on the scorer manifest");
    const Corpus corpus = load_curated(cfg);
    const Corpus test_corpus = corpus.filter_split(Split::Test);
    if (test_corpus.size() != test.size()) throw ValidationError("evaluate: test features are stale (rerun `score`)");

    std::vector<Label> preds;
    std::string predictions;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.ids[i] != test_corpus.samples()[i].id) throw ValidationError("evaluate: test features are stale (rerun `score`)");
        const Verdict v = model.predict(test.rows.row(i));
        preds.push_back(v.label);
        predictions += json{{"id", test.ids[i]},
                            {"label", to_string(test.labels[i])},
                            {"pred", to_string(v.label)},
                            {"p_human", v.prob.p_human},
                            {"p_ai", v.prob.p_ai}}
                           .dump() +
                       "\n";
    }
    EvalReport test_report = build_report(test_corpus, preds, choose_category_field(test_corpus, cfg.category_field));
    test_report.fingerprint = model.fingerprint;

    std::vector<TableRow> table{{cfg.name, test_report.acc, test_report.f_macro, test_report.precision_macro,
                                 test_report.recall_macro}};
    json zero_shot = json::object();
    if (!cfg.zero_shot.empty()) {
        const auto scorers = load_scorers(cfg.output_dir / artifact::kScorerDir);
        const auto ptrs = raw_pointers(scorers);
        for (const auto& z : cfg.zero_shot) {
            const Corpus zc = load_corpus(z.path, {cfg.strict_keys});
            const EvalReport r = evaluate_corpus(model, zc, ptrs, choose_category_field(zc, z.category_field));
            zero_shot[z.name] = r.to_json();
            table.push_back({z.name + " (zero-shot)", r.acc, r.f_macro, r.precision_macro, r.recall_macro});
        }
    }

    json report{{"format_version", "1"},
                {"experiment", cfg.name},
                {"config_fingerprint", cfg.fingerprint},
                {"seed", cfg.seed},
                {"voting", "soft-equal-weight"},
                {"tie_rule", "exact probability ties are labelled human"},
                {"manifest", model.manifest},
                {"oof_folds", cfg.oof_folds},
                {"provenance", corpus.provenance()},
                {"corpus_stats", stats_to_json(corpus_stats(corpus))},
                {"test", test_report.to_json()},
                {"zero_shot", zero_shot},
                {"notes",
                 {"constituent scorers are reused unchanged for zero-shot corpora",
                  "Pre/Rec are macro-averaged over the human and ai classes"}}};
    write_file(cfg.output_dir / artifact::kReport, report.dump(2) + "\n");
    write_file(cfg.output_dir / artifact::kReportTable, render_table(table));
    write_file(cfg.output_dir / artifact::kPredictions, predictions);
    return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    OutputLock lock(cfg.output_dir);
    ExperimentResult result;
    result.manifest.fingerprint = cfg.fingerprint;

    const auto timed = [&](const char* stage, auto&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(stage) + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(stage) + ": " + e.what());
        }
        const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - start;
        result.manifest.timings_ms[stage] = took.count();
    };
    timed("curate", [&] { stage_curate(cfg); });
    timed("train-scorer", [&] { stage_train_scorers(cfg); });
    timed("score", [&] { stage_score(cfg); });
    timed("train-ensemble", [&] { stage_train_ensemble(cfg); });
    timed("evaluate", [&] { result.report = stage_evaluate(cfg); });

    result.manifest.artifacts = {artifact::kCorpus,         artifact::kStats,         std::string(artifact::kScorerDir) + "/",
                                 artifact::kTrainFeatures,  artifact::kTestFeatures,  artifact::kModel,
                                 artifact::kReport,         artifact::kReportTable,   artifact::kPredictions};
    write_file(cfg.output_dir / artifact::kManifest, result.manifest.to_json().dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------
// inference surfaces

std::optional<CategoryField> choose_category_field(const Corpus& corpus, std::optional<CategoryField> requested) {
    if (requested) return requested;
    if (corpus.empty()) return std::nullopt;
    const bool all_domains = std::all_of(corpus.begin(), corpus.end(), [](const Sample& s) { return s.domain.has_value(); });
    return all_domains ? std::optional<CategoryField>(CategoryField::Domain) : std::nullopt;
}

void check_manifest(const EnsembleModel& model, std::span<const Scorer* const> scorers) {
    std::vector<std::string> provided;
    for (const Scorer* s : scorers) provided.push_back(s->id());
    if (provided == model.manifest) return;
    const auto list = [](const std::vector<std::string>& ids) {
        std::string out = "[";
        for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? ", " : "") + ids[i];
        return out + "]";
    };
    throw ValidationError("scorer manifest mismatch: model expects " + list(model.manifest) + " but got " + list(provided));
}

EvalReport evaluate_corpus(const EnsembleModel& model, const Corpus& corpus, std::span<const Scorer* const> scorers,
                           std::optional<CategoryField> category_field, std::vector<Verdict>* verdicts) {
    check_manifest(model, scorers);
    std::vector<const Sample*> samples;
    for (const auto& s : corpus) samples.push_back(&s);
    const StackedFeatures features = stack_samples(samples, scorers);
    std::vector<Label> preds;
    preds.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        Verdict v = model.predict(features.rows.row(i));
        preds.push_back(v.label);
        if (verdicts) verdicts->push_back(std::move(v));
    }
    EvalReport r = build_report(corpus, preds, category_field);
    r.fingerprint = model.fingerprint;
    return r;
}

EvalReport zero_shot_eval(const fs::path& model_path, const fs::path& corpus_path, std::span<const Scorer* const> scorers,
                          std::optional<CategoryField> category_field) {
    const EnsembleModel model = EnsembleModel::load(model_path);
    check_manifest(model, scorers);
    const Corpus corpus = load_corpus(corpus_path);
    return evaluate_corpus(model, corpus, scorers, choose_category_field(corpus, category_field));
}

json verdict_to_json(const Verdict& v) {
    json per = json::object();
    for (std::size_t i = 0; i < v.per_learner.size(); ++i) {
        per[kLearnerNames[i]] = {v.per_learner[i].p_human, v.per_learner[i].p_ai};
    }
    return json{{"label", to_string(v.label)}, {"prob", {v.prob.p_human, v.prob.p_ai}}, {"per_learner", per}};
}

Verdict detect(const EnsembleModel& model, std::span<const Scorer* const> scorers, std::string_view text) {
    check_manifest(model, scorers);
    for (const Scorer* s : scorers) {
        if (!s->scores_text()) {
            throw ValidationError("scorer '" + s->id() + "' (" + std::string(s->kind()) +
                                  ") cannot score raw text; detect needs text-capable scorers");
        }
    }
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; })) {
        throw ValidationError("input error: text is empty");
    }
    std::vector<double> row;
    row.reserve(model.width());
    for (const Scorer* s : scorers) {
        const ProbVector p = s->score(text);
        row.push_back(p.p_human);
        row.push_back(p.p_ai);
    }
    return model.predict(row);
}

}  // namespace stackdetect
