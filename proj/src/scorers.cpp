#include "stackdetect/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "stackdetect/kernels.hpp"

namespace stackdetect {

using nlohmann::json;

std::vector<ProbVector> Scorer::score_samples(std::span<const Sample* const> samples) const {
    std::vector<ProbVector> out;
    out.reserve(samples.size());
    for (const Sample* s : samples) out.push_back(score_sample(*s));
    return out;
}

std::vector<std::string> Scorer::missing(std::span<const Sample* const>) const { return {}; }

std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

// ---------------------------------------------------------------------------
// n-gram logistic detector

namespace {

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

std::uint64_t hash_salt(std::uint64_t seed) { return SplitMix64(seed).next(); }

std::uint32_t bucket_of(char tag, std::string_view gram, std::uint64_t salt, std::size_t buckets) {
    const char prefix[1] = {tag};
    std::uint64_t h = fnv1a64(std::string_view(prefix, 1), kFnvBasis ^ salt);
    h = fnv1a64(gram, h);
    return static_cast<std::uint32_t>(h % buckets);
}

void validate(const NgramLrConfig& cfg) {
    if (cfg.buckets == 0 || cfg.buckets > (std::size_t{1} << 32)) {
        throw ValidationError("ngram_lr: buckets must be in [1, 2^32]");
    }
    if (cfg.max_features == 0) throw ValidationError("ngram_lr: max_features must be positive");
    if (!(cfg.l2 > 0.0) || !(cfg.lr > 0.0) || cfg.epochs <= 0) {
        throw ValidationError("ngram_lr: l2, lr and epochs must be positive");
    }
}

}  // namespace

double sparse_logistic_objective(std::span<const SparseRow> rows, std::span<const double> targets,
                                 std::span<const double> weights, double bias, double l2,
                                 std::vector<double>* grad_w, double* grad_b) {
    const double n = static_cast<double>(rows.size());
    double loss = 0.0;
    if (grad_w) {
        grad_w->assign(weights.begin(), weights.end());
        kernels::scale(l2, *grad_w);
    }
    double gb = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        double z = bias;
        for (std::size_t k = 0; k < r.index.size(); ++k) z += weights[r.index[k]] * r.value[k];
        loss += logistic_loss(z, targets[i]);
        const double resid = (sigmoid(z) - targets[i]) / n;
        gb += resid;
        if (grad_w) {
            for (std::size_t k = 0; k < r.index.size(); ++k) (*grad_w)[r.index[k]] += resid * r.value[k];
        }
    }
    if (grad_b) *grad_b = gb;
    return loss / n + 0.5 * l2 * kernels::sum_squares(weights);
}

NgramLrScorer::NgramLrScorer(std::string id, NgramLrConfig cfg, std::vector<std::uint32_t> vocabulary,
                             std::vector<double> idf, std::vector<double> weights, double bias)
    : id_(std::move(id)),
      cfg_(cfg),
      vocabulary_(std::move(vocabulary)),
      idf_(std::move(idf)),
      weights_(std::move(weights)),
      bias_(bias) {
    if (vocabulary_.size() != idf_.size() || vocabulary_.size() != weights_.size()) {
        throw ValidationError("ngram_lr: vocabulary, idf and weights differ in length");
    }
    if (!std::isfinite(bias_) || !std::all_of(weights_.begin(), weights_.end(), [](double v) { return std::isfinite(v); }) ||
        !std::all_of(idf_.begin(), idf_.end(), [](double v) { return std::isfinite(v); })) {
        throw ValidationError("ngram_lr: non-finite parameters");
    }
    feature_of_.reserve(vocabulary_.size());
    for (std::size_t j = 0; j < vocabulary_.size(); ++j) feature_of_.emplace(vocabulary_[j], static_cast<std::uint32_t>(j));
}

std::unordered_map<std::uint32_t, double> NgramLrScorer::bucket_counts(std::string_view text, const NgramLrConfig& cfg) {
    std::unordered_map<std::uint32_t, double> counts;
    const std::uint64_t salt = hash_salt(cfg.seed);

    // code point boundaries, so multi-byte characters are never split
    std::vector<std::size_t> starts;
    starts.reserve(text.size() + 1);
    for (std::size_t i = 0; i < text.size(); ++i) {
        if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
    }
    starts.push_back(text.size());
    const std::size_t chars = starts.size() - 1;
    for (std::size_t n = 2; n <= 4; ++n) {
        const char tag = static_cast<char>('0' + n);
        for (std::size_t i = 0; i + n <= chars; ++i) {
            counts[bucket_of(tag, text.substr(starts[i], starts[i + n] - starts[i]), salt, cfg.buckets)] += 1.0;
        }
    }
    for (auto word : split_whitespace(text)) counts[bucket_of('w', word, salt, cfg.buckets)] += 1.0;
    return counts;
}

SparseRow NgramLrScorer::featurize(std::string_view text) const {
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (const auto& [bucket, tf] : bucket_counts(text, cfg_)) {
        if (auto it = feature_of_.find(bucket); it != feature_of_.end()) {
            entries.emplace_back(it->second, tf * idf_[it->second]);
        }
    }
    std::sort(entries.begin(), entries.end());
    double norm = 0.0;
    for (const auto& e : entries) norm += e.second * e.second;
    norm = std::sqrt(norm);
    SparseRow row;
    row.index.reserve(entries.size());
    row.value.reserve(entries.size());
    for (const auto& [j, v] : entries) {
        row.index.push_back(j);
        row.value.push_back(norm > 0.0 ? v / norm : 0.0);
    }
    return row;
}

double NgramLrScorer::decision(std::string_view text) const {
    const SparseRow row = featurize(text);
    double z = bias_;
    for (std::size_t k = 0; k < row.index.size(); ++k) z += weights_[row.index[k]] * row.value[k];
    return z;
}

ProbVector NgramLrScorer::score(std::string_view text) const { return ProbVector::from_ai(sigmoid(decision(text))); }

json NgramLrScorer::to_json() const {
    return json{{"kind", "ngram_lr"},
                {"id", id_},
                {"config",
                 {{"buckets", cfg_.buckets},
                  {"max_features", cfg_.max_features},
                  {"l2", cfg_.l2},
                  {"lr", cfg_.lr},
                  {"epochs", cfg_.epochs},
                  {"seed", cfg_.seed}}},
                {"vocabulary", vocabulary_},
                {"idf", idf_},
                {"weights", weights_},
                {"bias", bias_}};
}

NgramLrScorer NgramLrScorer::from_json(const json& j) {
    NgramLrConfig cfg;
    const auto& c = j.at("config");
    cfg.buckets = c.at("buckets").get<std::size_t>();
    cfg.max_features = c.at("max_features").get<std::size_t>();
    cfg.l2 = c.at("l2").get<double>();
    cfg.lr = c.at("lr").get<double>();
    cfg.epochs = c.at("epochs").get<int>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    return NgramLrScorer(j.at("id").get<std::string>(), cfg, j.at("vocabulary").get<std::vector<std::uint32_t>>(),
                         j.at("idf").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>(),
                         j.at("bias").get<double>());
}

NgramLrScorer train_ngram_lr(std::string id, std::span<const Sample* const> train, const NgramLrConfig& cfg) {
    validate(cfg);
    std::size_t n_ai = 0;
    for (const Sample* s : train) n_ai += s->label == Label::AI;
    if (n_ai == 0 || n_ai == train.size()) {
        throw ValidationError("ngram_lr '" + id + "': training data must contain both human and ai samples");
    }

    std::vector<std::unordered_map<std::uint32_t, double>> docs;
    docs.reserve(train.size());
    std::unordered_map<std::uint32_t, std::uint32_t> df;
    for (const Sample* s : train) {
        docs.push_back(NgramLrScorer::bucket_counts(s->text, cfg));
        for (const auto& entry : docs.back()) ++df[entry.first];
    }

    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranked(df.begin(), df.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (ranked.size() > cfg.max_features) ranked.resize(cfg.max_features);
    std::sort(ranked.begin(), ranked.end());

    const double n_docs = static_cast<double>(train.size());
    std::vector<std::uint32_t> vocabulary;
    std::vector<double> idf;
    vocabulary.reserve(ranked.size());
    idf.reserve(ranked.size());
    for (const auto& [bucket, count] : ranked) {
        vocabulary.push_back(bucket);
        idf.push_back(std::log((1.0 + n_docs) / (1.0 + count)) + 1.0);
    }

    NgramLrScorer shape(id, cfg, vocabulary, idf, std::vector<double>(vocabulary.size(), 0.0), 0.0);
    std::vector<SparseRow> rows;
    rows.reserve(train.size());
    for (const Sample* s : train) rows.push_back(shape.featurize(s->text));
    docs.clear();

    std::vector<double> targets;
    targets.reserve(train.size());
    for (const Sample* s : train) targets.push_back(s->label == Label::AI ? 1.0 : 0.0);

    std::vector<double> w(vocabulary.size(), 0.0);
    std::vector<double> grad;
    double b = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double gb = 0.0;
        sparse_logistic_objective(rows, targets, w, b, cfg.l2, &grad, &gb);
        kernels::axpy(-cfg.lr, grad, w);
        b -= cfg.lr * gb;
    }
    return NgramLrScorer(std::move(id), cfg, std::move(vocabulary), std::move(idf), std::move(w), b);
}

NgramLrScorer train_ngram_lr(std::string id, const Corpus& corpus, const NgramLrConfig& cfg) {
    const auto train = corpus.split(Split::Train);
    return train_ngram_lr(std::move(id), train, cfg);
}

// ---------------------------------------------------------------------------
// perplexity detector

NgramLanguageModel::NgramLanguageModel(int order, double k) : order_(order), k_(k) {
    if (order < 1) throw ValidationError("perplexity: order must be >= 1");
    if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("perplexity: smoothing k must be > 0");
    words_ = {"<unk>", "<s>", "</s>"};
}

std::string NgramLanguageModel::pack(const std::uint32_t* ids, std::size_t n) {
    std::string key(n * sizeof(std::uint32_t), '\0');
    std::memcpy(key.data(), ids, key.size());
    return key;
}

std::uint32_t NgramLanguageModel::lookup(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::uint32_t> NgramLanguageModel::encode(const std::vector<std::string_view>& tokens) const {
    std::vector<std::uint32_t> seq(static_cast<std::size_t>(order_ - 1), kBos);
    for (auto t : tokens) seq.push_back(lookup(t));
    seq.push_back(kEos);
    return seq;
}

void NgramLanguageModel::add_text(std::string_view text) {
    const auto tokens = split_whitespace(text);
    for (auto t : tokens) {
        std::string key(t);
        if (!ids_.contains(key)) {
            ids_.emplace(key, static_cast<std::uint32_t>(words_.size()));
            words_.push_back(std::move(key));
        }
    }
    const auto seq = encode(tokens);
    const std::size_t ctx = static_cast<std::size_t>(order_ - 1);
    for (std::size_t i = ctx; i < seq.size(); ++i) {
        ++ngrams_[pack(&seq[i - ctx], ctx + 1)];
        ++contexts_[pack(&seq[i - ctx], ctx)];
    }
}

double NgramLanguageModel::log_prob(const std::vector<std::string_view>& tokens) const {
    const auto seq = encode(tokens);
    const std::size_t ctx = static_cast<std::size_t>(order_ - 1);
    const double v = static_cast<double>(words_.size() - 1);  // BOS is never predicted
    double lp = 0.0;
    for (std::size_t i = ctx; i < seq.size(); ++i) {
        auto ng = ngrams_.find(pack(&seq[i - ctx], ctx + 1));
        auto cx = contexts_.find(pack(&seq[i - ctx], ctx));
        const double c_ng = ng == ngrams_.end() ? 0.0 : static_cast<double>(ng->second);
        const double c_cx = cx == contexts_.end() ? 0.0 : static_cast<double>(cx->second);
        lp += std::log((c_ng + k_) / (c_cx + k_ * v));
    }
    return lp;
}

double NgramLanguageModel::log_perplexity(std::string_view text) const {
    const auto tokens = split_whitespace(text);
    return -log_prob(tokens) / static_cast<double>(tokens.size() + 1);
}

json NgramLanguageModel::to_json() const {
    std::vector<std::vector<std::uint64_t>> grams;
    grams.reserve(ngrams_.size());
    const std::size_t width = static_cast<std::size_t>(order_);
    for (const auto& [key, count] : ngrams_) {
        std::vector<std::uint32_t> ids(width);
        std::memcpy(ids.data(), key.data(), key.size());
        std::vector<std::uint64_t> row(ids.begin(), ids.end());
        row.push_back(count);
        grams.push_back(std::move(row));
    }
    std::sort(grams.begin(), grams.end());
    return json{{"order", order_},
                {"k", k_},
                {"words", std::vector<std::string>(words_.begin() + 3, words_.end())},
                {"ngrams", grams}};
}

NgramLanguageModel NgramLanguageModel::from_json(const json& j) {
    NgramLanguageModel lm(j.at("order").get<int>(), j.at("k").get<double>());
    for (const auto& w : j.at("words")) {
        auto word = w.get<std::string>();
        lm.ids_.emplace(word, static_cast<std::uint32_t>(lm.words_.size()));
        lm.words_.push_back(std::move(word));
    }
    const std::size_t width = static_cast<std::size_t>(lm.order_);
    for (const auto& row : j.at("ngrams")) {
        if (row.size() != width + 1) throw ValidationError("perplexity: malformed n-gram row");
        std::vector<std::uint32_t> ids(width);
        for (std::size_t i = 0; i < width; ++i) ids[i] = row[i].get<std::uint32_t>();
        const auto count = row[width].get<std::uint64_t>();
        lm.ngrams_[pack(ids.data(), width)] += count;
        lm.contexts_[pack(ids.data(), width - 1)] += count;
    }
    return lm;
}

PerplexityScorer::PerplexityScorer(std::string id, NgramLanguageModel lm, LogisticMap calibration)
    : id_(std::move(id)), lm_(std::move(lm)), calibration_(calibration) {
    if (!std::isfinite(calibration_.slope) || !std::isfinite(calibration_.intercept)) {
        throw ValidationError("perplexity: calibration must be finite");
    }
}

ProbVector PerplexityScorer::score(std::string_view text) const {
    const double p = std::clamp(calibration_(lm_.log_perplexity(text)), kEdge, 1.0 - kEdge);
    return ProbVector::from_ai(p);
}

json PerplexityScorer::to_json() const {
    return json{{"kind", "perplexity"},
                {"id", id_},
                {"lm", lm_.to_json()},
                {"calibration", {{"slope", calibration_.slope}, {"intercept", calibration_.intercept}}}};
}

PerplexityScorer PerplexityScorer::from_json(const json& j) {
    const auto& c = j.at("calibration");
    return PerplexityScorer(j.at("id").get<std::string>(), NgramLanguageModel::from_json(j.at("lm")),
                            LogisticMap{c.at("slope").get<double>(), c.at("intercept").get<double>()});
}

LogisticMap fit_perplexity_calibration(std::span<const double> log_ppl, std::span<const Label> labels) {
    const auto targets = platt_targets(labels);
    return fit_logistic_1d(log_ppl, targets);
}

PerplexityScorer train_perplexity_scorer(std::string id, std::span<const Sample* const> train,
                                         const PerplexityConfig& cfg) {
    NgramLanguageModel lm(cfg.order, cfg.k);
    std::size_t humans = 0;
    for (const Sample* s : train) {
        if (s->label == Label::Human) {
            lm.add_text(s->text);
            ++humans;
        }
    }
    if (humans == 0) throw ValidationError("perplexity '" + id + "': training data has no human samples");

    // Calibration inputs are cross-fitted: sample i is scored by an LM that never saw
    // fold(i). In-sample perplexities of human text are far lower than on unseen text.
    const std::size_t folds = std::min<std::size_t>(PerplexityConfig::kCalibrationFolds, humans);
    std::vector<double> lp(train.size());
    std::vector<Label> labels;
    labels.reserve(train.size());
    for (const Sample* s : train) labels.push_back(s->label);
    if (folds < 2) {
        for (std::size_t i = 0; i < train.size(); ++i) lp[i] = lm.log_perplexity(train[i]->text);
    } else {
        for (std::size_t f = 0; f < folds; ++f) {
            NgramLanguageModel partial(cfg.order, cfg.k);
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (train[i]->label == Label::Human && i % folds != f) partial.add_text(train[i]->text);
            }
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (i % folds == f) lp[i] = partial.log_perplexity(train[i]->text);
            }
        }
    }
    return PerplexityScorer(std::move(id), std::move(lm), fit_perplexity_calibration(lp, labels));
}

PerplexityScorer train_perplexity_scorer(std::string id, const Corpus& corpus, const PerplexityConfig& cfg) {
    const auto train = corpus.split(Split::Train);
    return train_perplexity_scorer(std::move(id), train, cfg);
}

// ---------------------------------------------------------------------------
// precomputed probabilities

FileScorer::FileScorer(std::string id, std::filesystem::path source) : id_(std::move(id)), source_(std::move(source)) {
    if (id_.empty()) throw ValidationError("file scorer id must be non-empty");
}

ProbVector FileScorer::score(std::string_view) const {
    throw ValidationError("file scorer '" + id_ + "' cannot score raw text; it only looks samples up by id");
}

ProbVector FileScorer::score_by_id(const std::string& sample_id) const {
    auto it = table_.find(sample_id);
    if (it == table_.end()) {
        throw ValidationError("file scorer '" + id_ + "' has no probabilities for sample id '" + sample_id + "'");
    }
    return it->second;
}

std::vector<std::string> FileScorer::missing(std::span<const Sample* const> samples) const {
    std::vector<std::string> out;
    for (const Sample* s : samples) {
        if (!contains(s->id)) out.push_back(s->id);
    }
    return out;
}

void FileScorer::insert(const std::string& sample_id, ProbVector p) {
    p.validate();
    if (!table_.emplace(sample_id, p).second) {
        throw ValidationError("duplicate probability row for (" + sample_id + ", " + id_ + ")");
    }
    order_.push_back(sample_id);
}

std::vector<std::pair<std::string, ProbVector>> FileScorer::rows() const {
    std::vector<std::pair<std::string, ProbVector>> out;
    out.reserve(order_.size());
    for (const auto& id : order_) out.emplace_back(id, table_.at(id));
    return out;
}

json FileScorer::to_json() const { return json{{"kind", "file"}, {"id", id_}, {"path", source_.string()}}; }

FileScorer parse_prob_file(std::istream& in, const std::string& scorer_id, const std::string& source_name) {
    FileScorer scorer(scorer_id, source_name);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; })) continue;
        const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
        try {
            const json row = json::parse(line);
            if (!row.is_object()) throw ValidationError("row is not a JSON object");
            for (const char* key : {"id", "scorer"}) {
                if (!row.contains(key) || !row[key].is_string()) {
                    throw ValidationError(std::string("key '") + key + "' must be a string");
                }
            }
            for (const char* key : {"p_human", "p_ai"}) {
                if (!row.contains(key) || !row[key].is_number()) {
                    throw ValidationError(std::string("key '") + key + "' must be a number");
                }
            }
            if (row["scorer"].get<std::string>() != scorer_id) continue;
            ProbVector p{row["p_human"].get<double>(), row["p_ai"].get<double>()};
            p.validate(1e-6);
            const double sum = p.p_human + p.p_ai;
            if (sum != 1.0) p = ProbVector::from_ai(p.p_ai / sum);
            scorer.insert(row["id"].get<std::string>(), p);
        } catch (const json::exception& e) {
            throw ValidationError(where + "parse error: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + e.what());
        }
    }
    return scorer;
}

FileScorer load_prob_file(const std::filesystem::path& path, const std::string& scorer_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open probability file " + path.string());
    return parse_prob_file(in, scorer_id, path.string());
}

void save_prob_file(const FileScorer& scorer, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write probability file " + path.string());
    for (const auto& [id, p] : scorer.rows()) {
        out << json{{"id", id}, {"scorer", scorer.id()}, {"p_human", p.p_human}, {"p_ai", p.p_ai}}.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------

std::unique_ptr<Scorer> scorer_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ngram_lr") return std::make_unique<NgramLrScorer>(NgramLrScorer::from_json(j));
    if (kind == "perplexity") return std::make_unique<PerplexityScorer>(PerplexityScorer::from_json(j));
    if (kind == "file") {
        return std::make_unique<FileScorer>(load_prob_file(j.at("path").get<std::string>(), j.at("id").get<std::string>()));
    }
    if (kind == "remote") {
        RemoteConfig cfg;
        cfg.endpoint = j.at("endpoint").get<std::string>();
        cfg.max_batch = j.value("max_batch", cfg.max_batch);
        cfg.max_attempts = j.value("max_attempts", cfg.max_attempts);
        cfg.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 200));
        cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
        return std::make_unique<RemoteScorer>(j.at("id").get<std::string>(), cfg);
    }
    throw ValidationError("unknown scorer kind '" + kind + "'");
}

}  // namespace stackdetect
