#include <doctest.h>

#include <cmath>

#include "stackdetect/metrics.hpp"
#include "stackdetect/optim.hpp"

using namespace stackdetect;

namespace {

// Independent oracle: per-class counts from scratch, each class treated as positive in turn.
struct Oracle {
    double acc, f, p, r;
};

Oracle brute_force(const std::vector<Label>& y, const std::vector<Label>& yhat) {
    double correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += y[i] == yhat[i];
    double f = 0, p = 0, r = 0;
    for (Label c : {Label::Human, Label::AI}) {
        double tp = 0, pred = 0, actual = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            tp += y[i] == c && yhat[i] == c;
            pred += yhat[i] == c;
            actual += y[i] == c;
        }
        const double prec = pred > 0 ? tp / pred : 0.0;
        const double rec = actual > 0 ? tp / actual : 0.0;
        p += prec / 2;
        r += rec / 2;
        f += (prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0) / 2;
    }
    return {correct / static_cast<double>(y.size()), f, p, r};
}

std::vector<Label> labels(const std::string& s) {
    std::vector<Label> out;
    for (char c : s) out.push_back(c == '1' ? Label::AI : Label::Human);
    return out;
}

}  // namespace

TEST_CASE("hand-worked confusion matrix") {
    const auto y = labels("11110000");
    const auto p = labels("11000001");
    const EvalReport r = evaluate(y, p);
    CHECK(r.cm.tp == 2);
    CHECK(r.cm.fn == 2);
    CHECK(r.cm.fp == 1);
    CHECK(r.cm.tn == 3);
    CHECK(r.acc == doctest::Approx(5.0 / 8));
    // ai: P 2/3 R 1/2; human: P 3/5 R 3/4
    CHECK(r.precision_macro == doctest::Approx((2.0 / 3 + 3.0 / 5) / 2));
    CHECK(r.recall_macro == doctest::Approx((0.5 + 0.75) / 2));
    CHECK(r.per_class_correct == std::array<std::size_t, 2>{3, 2});
    CHECK(per_class_correct(y, p) == std::array<std::size_t, 2>{3, 2});
}

TEST_CASE("random pairs match the brute-force oracle") {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(50);
        std::vector<Label> y(n), yhat(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.below(2) ? Label::AI : Label::Human;
            yhat[i] = rng.below(2) ? Label::AI : Label::Human;
        }
        const EvalReport r = evaluate(y, yhat);
        const Oracle o = brute_force(y, yhat);
        CHECK(std::abs(r.acc - o.acc) <= 1e-12);
        CHECK(std::abs(r.f_macro - o.f) <= 1e-12);
        CHECK(std::abs(r.precision_macro - o.p) <= 1e-12);
        CHECK(std::abs(r.recall_macro - o.r) <= 1e-12);
    }
}

TEST_CASE("macro scores are symmetric under label swap") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<Label> y(n), yhat(n), ys(n), yhats(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.below(2) ? Label::AI : Label::Human;
            yhat[i] = rng.below(2) ? Label::AI : Label::Human;
            ys[i] = y[i] == Label::AI ? Label::Human : Label::AI;
            yhats[i] = yhat[i] == Label::AI ? Label::Human : Label::AI;
        }
        const EvalReport a = evaluate(y, yhat), b = evaluate(ys, yhats);
        CHECK(a.acc == b.acc);
        CHECK(a.f_macro == doctest::Approx(b.f_macro).epsilon(1e-15));
        CHECK(a.precision_macro == doctest::Approx(b.precision_macro).epsilon(1e-15));
    }
}

TEST_CASE("degenerate inputs") {
    const EvalReport all_ai = evaluate(labels("1111"), labels("1111"));
    CHECK(all_ai.acc == 1.0);
    CHECK(all_ai.f_macro == 0.5);
    CHECK(all_ai.flags.size() == 1);
    CHECK_THROWS_AS(evaluate(labels("10"), labels("1")), ValidationError);
    CHECK_THROWS_AS(evaluate({}, {}), ValidationError);
}

TEST_CASE("category accuracy") {
    std::vector<Sample> s;
    s.push_back({"a", "t", Label::Human, "human", "toefl", Split::Test});
    s.push_back({"b", "t", Label::Human, "human", "toefl", Split::Test});
    s.push_back({"c", "t", Label::Human, "human", "us8", Split::Test});
    s.push_back({"d", "t", Label::AI, "gpt", std::nullopt, Split::Test});
    const Corpus c("c", s);
    const auto preds = labels("1001");
    const auto by_gen = category_accuracy(c, preds, CategoryField::Generator);
    CHECK(by_gen.at("human").accuracy == doctest::Approx(2.0 / 3));
    CHECK(by_gen.at("gpt").correct == 1);
    try {
        category_accuracy(c, preds, CategoryField::Domain);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(" d") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_category_field("topic"), ValidationError);
}

TEST_CASE("table layout") {
    const std::vector<TableRow> rows{{"AuText", 0.750, 0.732, 0.822, 0.744}, {"D2", 0.784, 0.774, 0.828, 0.779}};
    const std::string expected =
        "| Dataset | Acc   | F_macro | Pre   | Rec   |\n"
        "|---------|-------|---------|-------|-------|\n"
        "| AuText  | 0.750 | 0.732   | 0.822 | 0.744 |\n"
        "| D2      | 0.784 | 0.774   | 0.828 | 0.779 |\n"
        "Pre and Rec are macro-averaged over the human and ai classes.\n";
    CHECK(render_table(rows) == expected);
}
