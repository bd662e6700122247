#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stackdetect/ensemble.hpp"
#include "stackdetect/kernels.hpp"

namespace stackdetect {

namespace {

void check_shape(const Matrix& x, std::span<const Label> labels, const char* who) {
    if (x.rows() != labels.size()) throw std::invalid_argument(std::string(who) + ": rows and labels differ in count");
    if (x.rows() == 0) throw ValidationError(std::string(who) + ": no training rows");
}

void require_both_classes(std::span<const Label> labels, std::size_t min_per_class, const char* who) {
    std::size_t ai = 0;
    for (Label l : labels) ai += l == Label::AI;
    const std::size_t human = labels.size() - ai;
    if (human < min_per_class || ai < min_per_class) {
        throw ValidationError(std::string(who) + ": need at least " + std::to_string(min_per_class) +
                              " sample(s) of each class, got " + std::to_string(human) + " human / " +
                              std::to_string(ai) + " ai");
    }
}

std::vector<double> indicator(std::span<const Label> labels) {
    std::vector<double> t;
    t.reserve(labels.size());
    for (Label l : labels) t.push_back(l == Label::AI ? 1.0 : 0.0);
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    const std::size_t d = x.cols();
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    const double n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) kernels::axpy(1.0, x.row(i), s.mean);
    if (n > 0) kernels::scale(1.0 / n, s.mean);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x(i, j) - s.mean[j];
            s.stddev[j] += c * c;
        }
    }
    for (auto& v : s.stddev) {
        v = n > 0 ? std::sqrt(v / n) : 0.0;
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / stddev[j];
}

Matrix Standardizer::apply(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) apply(x.row(i), out.row(i));
    return out;
}

// ---------------------------------------------------------------------------
// logistic regression

double LogisticModel::decision(std::span<const double> x) const { return kernels::dot(weights, x) + bias; }

double logistic_objective(const Matrix& x, std::span<const double> targets, std::span<const double> weights, double bias,
                          double l2, std::vector<double>* grad_w, double* grad_b) {
    const double n = static_cast<double>(x.rows());
    if (grad_w) {
        grad_w->assign(weights.begin(), weights.end());
        kernels::scale(l2, *grad_w);
    }
    double loss = 0.0;
    double gb = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double z = kernels::dot(weights, x.row(i)) + bias;
        loss += logistic_loss(z, targets[i]);
        const double resid = (sigmoid(z) - targets[i]) / n;
        gb += resid;
        if (grad_w) kernels::axpy(resid, x.row(i), *grad_w);
    }
    if (grad_b) *grad_b = gb;
    return loss / n + 0.5 * l2 * kernels::sum_squares(weights);
}

LogisticModel fit_logistic(const Matrix& x, std::span<const Label> labels, const LogisticConfig& cfg) {
    check_shape(x, labels, "logistic regression");
    require_both_classes(labels, 1, "logistic regression");
    if (!(cfg.lr > 0.0) || cfg.epochs < 0 || cfg.l2 < 0.0) throw ValidationError("logistic regression: bad config");
    const auto targets = indicator(labels);

    LogisticModel m;
    m.weights.assign(x.cols(), 0.0);
    std::vector<double> grad;
    std::vector<double> trial;
    double gb = 0.0;
    double loss = logistic_objective(x, targets, m.weights, m.bias, cfg.l2, &grad, &gb);
    m.loss_history.push_back(loss);
    double step = cfg.lr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double trial_bias = 0.0;
        double trial_loss = loss;
        for (int retry = 0; retry < 60; ++retry) {
            trial = m.weights;
            kernels::axpy(-step, grad, trial);
            trial_bias = m.bias - step * gb;
            trial_loss = logistic_objective(x, targets, trial, trial_bias, cfg.l2, nullptr, nullptr);
            if (trial_loss <= loss + 1e-9) break;
            step *= 0.5;
        }
        if (trial_loss > loss + 1e-9) break;  // no descent possible at any tried step
        m.weights.swap(trial);
        m.bias = trial_bias;
        loss = logistic_objective(x, targets, m.weights, m.bias, cfg.l2, &grad, &gb);
        m.loss_history.push_back(loss);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

double GaussianNb::predict_ai(std::span<const double> x) const {
    std::array<double, 2> joint{};
    for (int c = 0; c < 2; ++c) {
        double lj = std::log(prior[c]);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double diff = x[j] - mean[c][j];
            lj -= 0.5 * std::log(2.0 * std::numbers::pi * var[c][j]) + diff * diff / (2.0 * var[c][j]);
        }
        joint[c] = lj;
    }
    return sigmoid(joint[1] - joint[0]);
}

GaussianNb fit_gnb(const Matrix& x, std::span<const Label> labels, double eps) {
    check_shape(x, labels, "gaussian naive bayes");
    require_both_classes(labels, 1, "gaussian naive bayes");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ValidationError("gaussian naive bayes: eps must be > 0");
    const std::size_t d = x.cols();

    GaussianNb nb;
    nb.eps = eps;
    std::array<double, 2> count{};
    for (int c = 0; c < 2; ++c) {
        nb.mean[c].assign(d, 0.0);
        nb.var[c].assign(d, 0.0);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const int c = static_cast<int>(labels[i]);
        count[c] += 1.0;
        kernels::axpy(1.0, x.row(i), nb.mean[c]);
    }
    for (int c = 0; c < 2; ++c) kernels::scale(1.0 / count[c], nb.mean[c]);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const int c = static_cast<int>(labels[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(i, j) - nb.mean[c][j];
            nb.var[c][j] += diff * diff;
        }
    }
    for (int c = 0; c < 2; ++c) kernels::scale(1.0 / count[c], nb.var[c]);

    const Standardizer overall = Standardizer::fit(x);
    double max_var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        // Standardizer maps zero spread to 1; recompute the raw variance here
        double v = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double diff = x(i, j) - overall.mean[j];
            v += diff * diff;
        }
        max_var = std::max(max_var, v / static_cast<double>(x.rows()));
    }
    const double floor = max_var > 0.0 ? eps * max_var : eps;
    for (int c = 0; c < 2; ++c) {
        for (auto& v : nb.var[c]) v = std::max(v, floor);
    }
    const double n = static_cast<double>(x.rows());
    nb.prior = {count[0] / n, count[1] / n};
    return nb;
}

// ---------------------------------------------------------------------------
// random forest

double DecisionTree::predict_ai(std::span<const double> x) const {
    int at = 0;
    while (nodes[at].feature >= 0) {
        const auto& node = nodes[at];
        at = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return nodes[at].p_ai;
}

double RandomForest::predict_ai(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict_ai(x);
    return sum / static_cast<double>(trees.size());
}

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const Label> labels, const ForestConfig& cfg, int mtry, SplitMix64& rng)
        : x_(x), labels_(labels), cfg_(cfg), mtry_(mtry), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::size_t ai = 0;
        for (auto r : rows) ai += labels_[r] == Label::AI;
        const double n = static_cast<double>(rows.size());
        tree_.nodes[id].p_ai = static_cast<double>(ai) / n;

        const bool pure = ai == 0 || ai == rows.size();
        if (pure || depth >= cfg_.max_depth || rows.size() < 2 * static_cast<std::size_t>(cfg_.min_leaf)) return id;

        const SplitChoice best = find_split(rows);
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree_.nodes[id].feature = best.feature;
        tree_.nodes[id].threshold = best.threshold;
        const int l = grow(left, depth + 1);
        tree_.nodes[id].left = l;
        const int r = grow(right, depth + 1);
        tree_.nodes[id].right = r;
        return id;
    }

    SplitChoice find_split(const std::vector<std::size_t>& rows) {
        std::vector<int> features(x_.cols());
        std::iota(features.begin(), features.end(), 0);
        shuffle(features, rng_);

        SplitChoice best;
        best.impurity = std::numeric_limits<double>::infinity();
        int evaluated = 0;
        std::vector<std::size_t> order(rows);
        const std::size_t total_ai =
            static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](auto r) { return labels_[r] == Label::AI; }));
        const std::size_t min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
        for (int f : features) {
            if (evaluated >= mtry_) break;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double va = x_(a, f), vb = x_(b, f);
                return va != vb ? va < vb : a < b;
            });
            if (x_(order.front(), f) == x_(order.back(), f)) continue;  // constant here; does not count
            ++evaluated;

            std::size_t left_ai = 0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                left_ai += labels_[order[i]] == Label::AI;
                const double here = x_(order[i], f), next = x_(order[i + 1], f);
                if (here == next) continue;
                const std::size_t nl = i + 1, nr = order.size() - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double imp = weighted_gini(nl, left_ai, nr, total_ai - left_ai);
                if (imp < best.impurity) {
                    double thr = here + (next - here) / 2.0;
                    if (!(thr < next)) thr = here;  // adjacent doubles
                    best = {f, thr, imp};
                }
            }
        }
        return best;
    }

    static double weighted_gini(std::size_t nl, std::size_t al, std::size_t nr, std::size_t ar) {
        const auto gini = [](double n, double a) {
            const double p = a / n;
            return 1.0 - p * p - (1.0 - p) * (1.0 - p);
        };
        const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
        return (dl * gini(dl, static_cast<double>(al)) + dr * gini(dr, static_cast<double>(ar))) / (dl + dr);
    }

    const Matrix& x_;
    std::span<const Label> labels_;
    const ForestConfig& cfg_;
    int mtry_;
    SplitMix64& rng_;
    DecisionTree tree_;
};

}  // namespace

RandomForest fit_random_forest(const Matrix& x, std::span<const Label> labels, const ForestConfig& cfg) {
    check_shape(x, labels, "random forest");
    if (cfg.n_trees < 1) throw ValidationError("random forest: n_trees must be >= 1");
    if (cfg.max_depth < 0 || cfg.min_leaf < 1) throw ValidationError("random forest: bad depth or leaf size");
    const int d = static_cast<int>(x.cols());
    const int mtry = cfg.mtry > 0 ? std::min(cfg.mtry, d) : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

    RandomForest forest;
    forest.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
    const std::size_t n = x.rows();
    for (int t = 0; t < cfg.n_trees; ++t) {
        SplitMix64 rng(SplitMix64(cfg.seed).next() ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(t + 1)));
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = rng.below(n);
        TreeBuilder builder(x, labels, cfg, mtry, rng);
        forest.trees.push_back(builder.build(std::move(rows)));
    }
    return forest;
}

// ---------------------------------------------------------------------------
// linear SVM

double LinearSvm::decision(std::span<const double> x) const { return kernels::dot(weights, x) + bias; }

double svm_objective(const Matrix& x, std::span<const Label> labels, std::span<const double> weights, double bias,
                     double lambda, std::vector<double>* grad_w, double* grad_b) {
    const double n = static_cast<double>(x.rows());
    if (grad_w) {
        grad_w->assign(weights.begin(), weights.end());
        kernels::scale(lambda, *grad_w);
    }
    double gb = lambda * bias;
    double hinge = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double y = labels[i] == Label::AI ? 1.0 : -1.0;
        const double margin = y * (kernels::dot(weights, x.row(i)) + bias);
        if (margin < 1.0) {
            hinge += 1.0 - margin;
            if (grad_w) kernels::axpy(-y / n, x.row(i), *grad_w);
            gb -= y / n;
        }
    }
    if (grad_b) *grad_b = gb;
    return 0.5 * lambda * (kernels::sum_squares(weights) + bias * bias) + hinge / n;
}

LinearSvm fit_linear_svm(const Matrix& x, std::span<const Label> labels, const SvmConfig& cfg) {
    check_shape(x, labels, "linear svm");
    require_both_classes(labels, 2, "linear svm");
    if (!(cfg.lambda > 0.0) || cfg.epochs < 1) throw ValidationError("linear svm: lambda and epochs must be positive");

    LinearSvm svm;
    svm.weights.assign(x.cols(), 0.0);
    SplitMix64 rng(cfg.seed);
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);
    const double radius = 1.0 / std::sqrt(cfg.lambda);
    std::uint64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (auto i : order) {
            ++t;
            const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
            const double y = labels[i] == Label::AI ? 1.0 : -1.0;
            const double margin = y * svm.decision(x.row(i));
            const double shrink = 1.0 - eta * cfg.lambda;
            kernels::scale(shrink, svm.weights);
            svm.bias *= shrink;
            if (margin < 1.0) {
                kernels::axpy(eta * y, x.row(i), svm.weights);
                svm.bias += eta * y;
            }
            const double norm = std::sqrt(kernels::sum_squares(svm.weights) + svm.bias * svm.bias);
            if (norm > radius) {
                kernels::scale(radius / norm, svm.weights);
                svm.bias *= radius / norm;
            }
        }
    }

    std::vector<double> decisions(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) decisions[i] = svm.decision(x.row(i));
    svm.platt = fit_logistic_1d(decisions, platt_targets(labels));
    return svm;
}

}  // namespace stackdetect
