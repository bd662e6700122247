#include "stackdetect/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace stackdetect {

using nlohmann::json;

namespace {

constexpr const char* kFormatVersion = "1";

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return SplitMix64(seed ^ (0xd1b54a32d192ed03ULL * stream)).next();
}

void require_finite(const Matrix& x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (double v : x.row(i)) {
            if (!std::isfinite(v)) throw ValidationError("fit_ensemble: non-finite feature in row " + std::to_string(i));
        }
    }
}

json tree_to_json(const DecisionTree& t) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, p_ai;
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        p_ai.push_back(n.p_ai);
    }
    return json{{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"p_ai", p_ai}};
}

DecisionTree tree_from_json(const json& j) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto p_ai = j.at("p_ai").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || p_ai.size() != n) {
        throw ValidationError("model: malformed decision tree");
    }
    DecisionTree t;
    t.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.nodes[i] = {feature[i], threshold[i], left[i], right[i], p_ai[i]};
        if (feature[i] >= 0) {
            const int limit = static_cast<int>(n);
            if (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) || left[i] >= limit || right[i] >= limit) {
                throw ValidationError("model: decision tree child index out of range");
            }
        }
    }
    return t;
}

template <typename Range>
void require_finite_params(const Range& values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError(std::string("model: non-finite ") + what);
    }
}

}  // namespace

json EnsembleConfig::to_json() const {
    return json{{"seed", seed},
                {"lr", {{"lr", lr.lr}, {"epochs", lr.epochs}, {"l2", lr.l2}}},
                {"rf", {{"n_trees", rf.n_trees}, {"max_depth", rf.max_depth}, {"min_leaf", rf.min_leaf}, {"mtry", rf.mtry}}},
                {"svm", {{"lambda", svm.lambda}, {"epochs", svm.epochs}}},
                {"gnb_eps", gnb_eps}};
}

EnsembleConfig EnsembleConfig::from_json(const json& j) {
    EnsembleConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("lr")) {
        const auto& l = j["lr"];
        c.lr.lr = l.value("lr", c.lr.lr);
        c.lr.epochs = l.value("epochs", c.lr.epochs);
        c.lr.l2 = l.value("l2", c.lr.l2);
    }
    if (j.contains("rf")) {
        const auto& r = j["rf"];
        c.rf.n_trees = r.value("n_trees", c.rf.n_trees);
        c.rf.max_depth = r.value("max_depth", c.rf.max_depth);
        c.rf.min_leaf = r.value("min_leaf", c.rf.min_leaf);
        c.rf.mtry = r.value("mtry", c.rf.mtry);
    }
    if (j.contains("svm")) {
        const auto& s = j["svm"];
        c.svm.lambda = s.value("lambda", c.svm.lambda);
        c.svm.epochs = s.value("epochs", c.svm.epochs);
    }
    c.gnb_eps = j.value("gnb_eps", c.gnb_eps);
    return c;
}

Verdict soft_vote(const std::array<ProbVector, 4>& per_learner) {
    Verdict v;
    v.per_learner = per_learner;
    double human = 0.0, ai = 0.0;
    for (const auto& p : per_learner) {
        human += p.p_human;
        ai += p.p_ai;
    }
    v.prob = {human / 4.0, ai / 4.0};
    v.label = v.prob.p_ai > v.prob.p_human ? Label::AI : Label::Human;
    return v;
}

Verdict EnsembleModel::predict(std::span<const double> row) const {
    if (row.size() != width()) {
        throw ValidationError("predict: row has " + std::to_string(row.size()) + " features but the model expects " +
                              std::to_string(width()));
    }
    std::vector<double> z(row.size());
    standardizer.apply(row, z);
    std::array<ProbVector, 4> per;
    per[static_cast<int>(Learner::LR)] = ProbVector::from_ai(lr.predict_ai(z));
    per[static_cast<int>(Learner::GNB)] = ProbVector::from_ai(gnb.predict_ai(row));
    per[static_cast<int>(Learner::RF)] = ProbVector::from_ai(rf.predict_ai(row));
    per[static_cast<int>(Learner::SVM)] = ProbVector::from_ai(svm.predict_ai(z));
    return soft_vote(per);
}

EnsembleModel fit_ensemble(const StackedFeatures& train, const EnsembleConfig& cfg) {
    train.validate();
    return fit_ensemble(train.rows, train.labels, train.manifest, cfg);
}

EnsembleModel fit_ensemble(const Matrix& x, std::span<const Label> labels, std::vector<std::string> manifest,
                           const EnsembleConfig& cfg) {
    if (x.rows() != labels.size()) throw ValidationError("fit_ensemble: row and label counts differ");
    if (x.cols() != 2 * manifest.size()) throw ValidationError("fit_ensemble: width does not match the manifest");
    require_finite(x);
    std::size_t ai = 0;
    for (Label l : labels) ai += l == Label::AI;
    const std::size_t human = labels.size() - ai;
    if (human < 2 || ai < 2) {
        throw ValidationError("fit_ensemble: need at least 2 samples of each class, got " + std::to_string(human) +
                              " human / " + std::to_string(ai) + " ai");
    }

    EnsembleModel m;
    m.manifest = std::move(manifest);
    m.config = cfg;
    m.config.rf.seed = derive_seed(cfg.seed, 1);
    m.config.svm.seed = derive_seed(cfg.seed, 2);
    m.standardizer = Standardizer::fit(x);
    const Matrix z = m.standardizer.apply(x);
    m.lr = fit_logistic(z, labels, m.config.lr);
    m.gnb = fit_gnb(x, labels, m.config.gnb_eps);
    m.rf = fit_random_forest(x, labels, m.config.rf);
    m.svm = fit_linear_svm(z, labels, m.config.svm);
    return m;
}

json EnsembleModel::to_json() const {
    json trees = json::array();
    for (const auto& t : rf.trees) trees.push_back(tree_to_json(t));
    json j{{"format_version", kFormatVersion},
           {"voting", "soft-equal-weight"},
           {"manifest", manifest},
           {"seed", config.seed},
           {"config", config.to_json()},
           {"standardizer", {{"mean", standardizer.mean}, {"std", standardizer.stddev}}},
           {"lr", {{"weights", lr.weights}, {"bias", lr.bias}}},
           {"gnb",
            {{"eps", gnb.eps},
             {"prior", {gnb.prior[0], gnb.prior[1]}},
             {"mean", {gnb.mean[0], gnb.mean[1]}},
             {"var", {gnb.var[0], gnb.var[1]}}}},
           {"rf", {{"n_trees", rf.trees.size()}, {"seed", config.rf.seed}, {"trees", trees}}},
           {"svm",
            {{"weights", svm.weights},
             {"bias", svm.bias},
             {"seed", config.svm.seed},
             {"platt", {{"slope", svm.platt.slope}, {"intercept", svm.platt.intercept}}}}}};
    if (!fingerprint.empty()) j["config_fingerprint"] = fingerprint;
    return j;
}

EnsembleModel EnsembleModel::from_json(const json& j) {
    if (j.value("format_version", std::string{}) != kFormatVersion) {
        throw ValidationError("model: unsupported format_version (expected \"1\")");
    }
    EnsembleModel m;
    m.manifest = j.at("manifest").get<std::vector<std::string>>();
    m.config = EnsembleConfig::from_json(j.at("config"));
    m.config.rf.seed = j.at("rf").value("seed", std::uint64_t{0});
    m.config.svm.seed = j.at("svm").value("seed", std::uint64_t{0});
    m.fingerprint = j.value("config_fingerprint", std::string{});
    const std::size_t d = m.width();

    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.stddev = j.at("standardizer").at("std").get<std::vector<double>>();
    m.lr.weights = j.at("lr").at("weights").get<std::vector<double>>();
    m.lr.bias = j.at("lr").at("bias").get<double>();

    const auto& g = j.at("gnb");
    m.gnb.eps = g.at("eps").get<double>();
    const auto prior = g.at("prior").get<std::vector<double>>();
    const auto means = g.at("mean").get<std::vector<std::vector<double>>>();
    const auto vars = g.at("var").get<std::vector<std::vector<double>>>();
    if (prior.size() != 2 || means.size() != 2 || vars.size() != 2) throw ValidationError("model: malformed gnb block");
    for (int c = 0; c < 2; ++c) {
        m.gnb.prior[c] = prior[c];
        m.gnb.mean[c] = means[c];
        m.gnb.var[c] = vars[c];
    }

    for (const auto& t : j.at("rf").at("trees")) m.rf.trees.push_back(tree_from_json(t));
    if (m.rf.trees.size() != j.at("rf").at("n_trees").get<std::size_t>() || m.rf.trees.empty()) {
        throw ValidationError("model: random forest tree count mismatch");
    }

    const auto& s = j.at("svm");
    m.svm.weights = s.at("weights").get<std::vector<double>>();
    m.svm.bias = s.at("bias").get<double>();
    m.svm.platt = {s.at("platt").at("slope").get<double>(), s.at("platt").at("intercept").get<double>()};

    if (m.standardizer.mean.size() != d || m.standardizer.stddev.size() != d || m.lr.weights.size() != d ||
        m.gnb.mean[0].size() != d || m.gnb.mean[1].size() != d || m.gnb.var[0].size() != d ||
        m.gnb.var[1].size() != d || m.svm.weights.size() != d) {
        throw ValidationError("model: parameter widths do not match the manifest");
    }
    for (const auto& t : m.rf.trees) {
        for (const auto& n : t.nodes) {
            if (n.feature >= static_cast<int>(d)) throw ValidationError("model: tree split feature out of range");
        }
    }
    require_finite_params(m.standardizer.mean, "standardizer");
    require_finite_params(m.standardizer.stddev, "standardizer");
    require_finite_params(m.lr.weights, "lr weights");
    require_finite_params(m.svm.weights, "svm weights");
    for (int c = 0; c < 2; ++c) {
        require_finite_params(m.gnb.mean[c], "gnb mean");
        require_finite_params(m.gnb.var[c], "gnb variance");
    }
    return m;
}

void EnsembleModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << to_json().dump() << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ValidationError("model file " + path.string() + ": " + e.what());
    }
}

}  // namespace stackdetect
