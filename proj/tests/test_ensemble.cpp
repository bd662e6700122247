#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stackdetect/ensemble.hpp"
#include "stackdetect/kernels.hpp"
#include "support/synth.hpp"

using namespace stackdetect;
using nlohmann::json;

namespace {

Matrix random_matrix(SplitMix64& rng, std::size_t n, std::size_t d) {
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.uniform() * 2 - 1;
    }
    return x;
}

std::vector<Label> random_labels(SplitMix64& rng, std::size_t n) {
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = i < 2 ? static_cast<Label>(i) : static_cast<Label>(rng.below(2));
    return y;
}

double accuracy(const EnsembleModel& m, const StackedFeatures& f) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < f.size(); ++i) ok += m.predict(f.rows.row(i)).label == f.labels[i];
    return static_cast<double>(ok) / static_cast<double>(f.size());
}

StackedFeatures probability_features(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    StackedFeatures f;
    f.manifest = {"s0", "s1", "s2"};
    f.rows = Matrix(n, 6);
    for (std::size_t i = 0; i < n; ++i) {
        const Label y = i % 2 ? Label::AI : Label::Human;
        for (std::size_t k = 0; k < 3; ++k) {
            double p = std::clamp((y == Label::AI ? 0.6 : 0.4) + 0.25 * synth::gaussian(rng), 0.0, 1.0);
            f.rows(i, 2 * k) = 1 - p;
            f.rows(i, 2 * k + 1) = p;
        }
        f.ids.push_back("i" + std::to_string(i));
        f.labels.push_back(y);
    }
    return f;
}

}  // namespace

TEST_CASE("soft vote: mean of learners, ties go to human") {
    const ProbVector half{0.5, 0.5};
    const Verdict tie = soft_vote({half, half, half, half});
    CHECK(tie.label == Label::Human);
    CHECK(tie.prob == half);
    const Verdict v = soft_vote({ProbVector{0.1, 0.9}, ProbVector{0.6, 0.4}, ProbVector{0.5, 0.5}, ProbVector{0.7, 0.3}});
    CHECK(v.prob.p_ai == doctest::Approx(0.525));
    CHECK(v.label == Label::AI);
}

TEST_CASE("Gaussian NB two-point oracle") {
    Matrix x(2, 1);
    x(0, 0) = 0.0;
    x(1, 0) = 2.0;
    const std::vector<Label> y{Label::Human, Label::AI};
    // overall variance 1, so eps = 1 floors both class variances at 1
    const GaussianNb nb = fit_gnb(x, y, 1.0);
    const double at0 = 0.0, at1 = 1.0;
    CHECK(1 - nb.predict_ai(std::span(&at0, 1)) == doctest::Approx(1 / (1 + std::exp(-2.0))).epsilon(1e-14));
    CHECK(nb.predict_ai(std::span(&at1, 1)) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("random forest separates XOR") {
    Matrix x(0, 2);
    std::vector<Label> y;
    for (int rep = 0; rep < 10; ++rep) {
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                const double row[2]{static_cast<double>(a), static_cast<double>(b)};
                x.append_row(row);
                y.push_back(a != b ? Label::AI : Label::Human);
            }
        }
    }
    ForestConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = 3;
    const RandomForest rf = fit_random_forest(x, y, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK((rf.predict_ai(x.row(i)) > 0.5) == (y[i] == Label::AI));
    }
    // each tree depends only on (seed, index)
    ForestConfig fewer = cfg;
    fewer.n_trees = 5;
    const RandomForest head = fit_random_forest(x, y, fewer);
    for (std::size_t t = 0; t < 5; ++t) CHECK(head.trees[t].nodes.size() == rf.trees[t].nodes.size());
}

TEST_CASE("logistic gradient matches central differences") {
    SplitMix64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.below(20), n = 2 + rng.below(29);
        const Matrix x = random_matrix(rng, n, d);
        const auto labels = random_labels(rng, n);
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == Label::AI;
        std::vector<double> w(d);
        for (auto& v : w) v = rng.uniform() * 2 - 1;
        const double b = rng.uniform() - 0.5, l2 = 0.05;
        std::vector<double> gw;
        double gb = 0;
        logistic_objective(x, t, w, b, l2, &gw, &gb);
        const double h = 1e-6;
        for (std::size_t j = 0; j < d; ++j) {
            auto wp = w, wm = w;
            wp[j] += h;
            wm[j] -= h;
            const double fd = (logistic_objective(x, t, wp, b, l2, nullptr, nullptr) -
                               logistic_objective(x, t, wm, b, l2, nullptr, nullptr)) /
                              (2 * h);
            CHECK(std::abs(fd - gw[j]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
        const double fdb = (logistic_objective(x, t, w, b + h, l2, nullptr, nullptr) -
                            logistic_objective(x, t, w, b - h, l2, nullptr, nullptr)) /
                           (2 * h);
        CHECK(std::abs(fdb - gb) <= 1e-5 * std::max(1.0, std::abs(fdb)));
    }
}

TEST_CASE("svm subgradient matches central differences away from the hinge") {
    SplitMix64 rng(9);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 1 + rng.below(20), n = 2 + rng.below(29);
        const Matrix x = random_matrix(rng, n, d);
        const auto labels = random_labels(rng, n);
        std::vector<double> w(d);
        for (auto& v : w) v = rng.uniform() * 2 - 1;
        const double b = rng.uniform() - 0.5, lambda = 0.01, h = 1e-6;
        bool near_kink = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = labels[i] == Label::AI ? 1.0 : -1.0;
            double margin = b;
            for (std::size_t j = 0; j < d; ++j) margin += w[j] * x(i, j);
            near_kink |= std::abs(y * margin - 1.0) < 1e-3;
        }
        if (near_kink) continue;
        ++checked;
        std::vector<double> gw;
        double gb = 0;
        svm_objective(x, labels, w, b, lambda, &gw, &gb);
        for (std::size_t j = 0; j < d; ++j) {
            auto wp = w, wm = w;
            wp[j] += h;
            wm[j] -= h;
            const double fd = (svm_objective(x, labels, wp, b, lambda, nullptr, nullptr) -
                               svm_objective(x, labels, wm, b, lambda, nullptr, nullptr)) /
                              (2 * h);
            CHECK(std::abs(fd - gw[j]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
        const double fdb = (svm_objective(x, labels, w, b + h, lambda, nullptr, nullptr) -
                            svm_objective(x, labels, w, b - h, lambda, nullptr, nullptr)) /
                           (2 * h);
        CHECK(std::abs(fdb - gb) <= 1e-5 * std::max(1.0, std::abs(fdb)));
    }
    CHECK(checked >= 20);
}

TEST_CASE("logistic loss never rises") {
    const StackedFeatures f = synth::blobs(200, 4);
    const Matrix z = Standardizer::fit(f.rows).apply(f.rows);
    LogisticConfig cfg;
    cfg.lr = 5.0;  // large enough to force step halving
    const LogisticModel m = fit_logistic(z, f.labels, cfg);
    REQUIRE(m.loss_history.size() == static_cast<std::size_t>(cfg.epochs) + 1);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1] + 1e-9);
}

TEST_CASE("blob sanity per learner") {
    const StackedFeatures train = synth::blobs(400, 7), test = synth::blobs(400, 8);
    const EnsembleModel m = fit_ensemble(train.rows, train.labels, train.manifest, {});
    std::array<std::size_t, 4> ok{};
    std::size_t ens = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Verdict v = m.predict(test.rows.row(i));
        ens += v.label == test.labels[i];
        for (std::size_t l = 0; l < 4; ++l) ok[l] += (v.per_learner[l].p_ai > 0.5) == (test.labels[i] == Label::AI);
    }
    CHECK(ok[0] / 400.0 >= 0.95);
    CHECK(ok[1] / 400.0 >= 0.95);
    CHECK(ok[2] / 400.0 >= 0.93);
    CHECK(ok[3] / 400.0 >= 0.95);
    CHECK(ens / 400.0 >= 0.95);
}

TEST_CASE("fit_ensemble input checks") {
    StackedFeatures f = probability_features(20, 1);
    f.rows(0, 0) = 0.9;  // row no longer sums to one
    CHECK_THROWS_AS(fit_ensemble(f), ValidationError);
    StackedFeatures tiny = probability_features(3, 1);
    CHECK_THROWS_AS(fit_ensemble(tiny), ValidationError);
    const EnsembleModel m = fit_ensemble(probability_features(40, 2));
    const std::vector<double> narrow{0.5, 0.5};
    CHECK_THROWS_AS(m.predict(narrow), ValidationError);
}

TEST_CASE("GNB and LR are equivariant to manifest permutation") {
    const StackedFeatures f = probability_features(300, 5);
    StackedFeatures g = f;
    g.manifest = {"s2", "s0", "s1"};
    const std::array<std::size_t, 3> from{2, 0, 1};
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            g.rows(i, 2 * k) = f.rows(i, 2 * from[k]);
            g.rows(i, 2 * k + 1) = f.rows(i, 2 * from[k] + 1);
        }
    }
    const EnsembleModel a = fit_ensemble(f), b = fit_ensemble(g);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Verdict va = a.predict(f.rows.row(i)), vb = b.predict(g.rows.row(i));
        CHECK(va.per_learner[0].p_ai == doctest::Approx(vb.per_learner[0].p_ai).epsilon(1e-9));
        CHECK(va.per_learner[1].p_ai == doctest::Approx(vb.per_learner[1].p_ai).epsilon(1e-12));
    }
}

TEST_CASE("model serialization round trip") {
    const StackedFeatures f = probability_features(1000, 6);
    EnsembleConfig cfg;
    cfg.seed = 12;
    cfg.rf.n_trees = 30;
    const EnsembleModel m = fit_ensemble(f, cfg);
    const std::string text = m.to_json().dump();
    const EnsembleModel back = EnsembleModel::from_json(json::parse(text));
    CHECK(back.to_json().dump() == text);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Verdict a = m.predict(f.rows.row(i)), b = back.predict(f.rows.row(i));
        CHECK(a.prob == b.prob);
        CHECK(a.per_learner == b.per_learner);
    }
    CHECK(fit_ensemble(f, cfg).to_json().dump() == text);

    json broken = json::parse(text);
    broken["format_version"] = "2";
    CHECK_THROWS_AS(EnsembleModel::from_json(broken), ValidationError);
    broken = json::parse(text);
    broken["lr"]["weights"].erase(0);
    CHECK_THROWS_AS(EnsembleModel::from_json(broken), ValidationError);
}

TEST_CASE("perfect constituent dominates the vote") {
    SplitMix64 rng(21);
    const auto make = [&](std::size_t n) {
        StackedFeatures f;
        f.manifest = {"oracle", "noise1", "noise2"};
        f.rows = Matrix(n, 6);
        for (std::size_t i = 0; i < n; ++i) {
            const Label y = rng.below(2) ? Label::AI : Label::Human;
            f.rows(i, 0) = y == Label::AI ? 0.0 : 1.0;
            f.rows(i, 1) = y == Label::AI ? 1.0 : 0.0;
            for (std::size_t k = 1; k < 3; ++k) {
                const double p = rng.uniform();
                f.rows(i, 2 * k) = 1 - p;
                f.rows(i, 2 * k + 1) = p;
            }
            f.ids.push_back("x" + std::to_string(i));
            f.labels.push_back(y);
        }
        return f;
    };
    const StackedFeatures train = make(500), test = make(500);
    CHECK(accuracy(fit_ensemble(train), test) >= 0.98);
}

TEST_CASE("stacking checks coverage and keeps manifest order") {
    const Corpus c = synth::planted_corpus(10, 2);
    FileScorer a("a"), b("b");
    for (const auto& s : c) {
        a.insert(s.id, {0.3, 0.7});
        if (s.id != "p4") b.insert(s.id, {0.9, 0.1});
    }
    std::vector<const Sample*> ptrs;
    for (const auto& s : c) ptrs.push_back(&s);
    const std::vector<const Scorer*> ok{&a, &a};
    CHECK_THROWS_AS(stack_samples(ptrs, ok), ValidationError);  // duplicate id in manifest
    const std::vector<const Scorer*> both{&b, &a};
    try {
        stack_samples(ptrs, both);
        FAIL("expected a coverage error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("p4") != std::string::npos);
    }
    FileScorer b2("b");
    for (const auto& s : c) b2.insert(s.id, {0.9, 0.1});
    const std::vector<const Scorer*> order{&b2, &a};
    const StackedFeatures f = stack_samples(ptrs, order);
    CHECK(f.manifest == std::vector<std::string>{"b", "a"});
    CHECK(f.rows(3, 1) == 0.1);
    CHECK(f.rows(3, 3) == 0.7);
    CHECK(StackedFeatures::from_json(f.to_json()) == f);
}

TEST_CASE("scalar and vector kernels give the same predictions class") {
    const StackedFeatures f = probability_features(300, 31);
    const auto original = kernels::active_isa();
    kernels::force_isa(kernels::Isa::Scalar);
    const EnsembleModel scalar_model = fit_ensemble(f);
    kernels::force_isa(original);
    const EnsembleModel vector_model = fit_ensemble(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Verdict a = scalar_model.predict(f.rows.row(i)), b = vector_model.predict(f.rows.row(i));
        CHECK(a.prob.p_ai == doctest::Approx(b.prob.p_ai).epsilon(1e-6));
    }
}
