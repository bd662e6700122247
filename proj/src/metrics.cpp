#include "stackdetect/metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace stackdetect {

using nlohmann::json;

namespace {

void check_inputs(std::span<const Label> y_true, std::span<const Label> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw ValidationError("evaluate: " + std::to_string(y_true.size()) + " labels but " +
                              std::to_string(y_pred.size()) + " predictions");
    }
    if (y_true.empty()) throw ValidationError("evaluate: no samples");
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassScores scores(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassScores s;
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred) {
    check_inputs(y_true, y_pred);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool actual = y_true[i] == Label::AI;
        const bool predicted = y_pred[i] == Label::AI;
        if (actual && predicted) ++cm.tp;
        else if (!actual && predicted) ++cm.fp;
        else if (actual) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

std::array<std::size_t, 2> per_class_correct(std::span<const Label> y_true, std::span<const Label> y_pred) {
    const ConfusionMatrix cm = confusion(y_true, y_pred);
    return {cm.tn, cm.tp};
}

EvalReport evaluate(std::span<const Label> y_true, std::span<const Label> y_pred) {
    EvalReport r;
    r.cm = confusion(y_true, y_pred);
    r.n = r.cm.total();
    const auto& cm = r.cm;
    r.acc = ratio(cm.tp + cm.tn, r.n);
    r.per_class[static_cast<int>(Label::AI)] = scores(cm.tp, cm.fp, cm.fn);
    r.per_class[static_cast<int>(Label::Human)] = scores(cm.tn, cm.fn, cm.fp);
    r.class_count = {cm.tn + cm.fp, cm.tp + cm.fn};
    r.per_class_correct = {cm.tn, cm.tp};
    for (const auto& c : r.per_class) {
        r.precision_macro += c.precision / 2.0;
        r.recall_macro += c.recall / 2.0;
        r.f_macro += c.f1 / 2.0;
    }
    for (Label l : {Label::Human, Label::AI}) {
        if (r.class_count[static_cast<int>(l)] == 0) {
            r.flags.push_back("class '" + std::string(to_string(l)) + "' absent from ground truth; its recall counts as 0");
        }
    }
    return r;
}

json EvalReport::to_json() const {
    json classes = json::object();
    for (Label l : {Label::Human, Label::AI}) {
        const int c = static_cast<int>(l);
        classes[std::string(to_string(l))] = {{"precision", per_class[c].precision},
                                               {"recall", per_class[c].recall},
                                               {"f1", per_class[c].f1},
                                               {"count", class_count[c]},
                                               {"correct", per_class_correct[c]}};
    }
    json j{{"n", n},
           {"acc", acc},
           {"f_macro", f_macro},
           {"precision_macro", precision_macro},
           {"recall_macro", recall_macro},
           {"confusion", {{"positive_class", "ai"}, {"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}},
           {"per_class", classes},
           {"per_class_correct", {{"human", per_class_correct[0]}, {"ai", per_class_correct[1]}}},
           {"flags", flags}};
    if (!category_field.empty()) {
        json cats = json::object();
        for (const auto& [name, c] : per_category) {
            cats[name] = {{"n", c.n}, {"correct", c.correct}, {"accuracy", c.accuracy}};
        }
        j["per_category"] = {{"field", category_field}, {"categories", cats}};
    }
    if (!fingerprint.empty()) j["config_fingerprint"] = fingerprint;
    return j;
}

std::string_view to_string(CategoryField field) { return field == CategoryField::Domain ? "domain" : "generator"; }

CategoryField parse_category_field(std::string_view text) {
    if (text == "domain") return CategoryField::Domain;
    if (text == "generator") return CategoryField::Generator;
    throw ValidationError("unknown category field '" + std::string(text) + "' (expected domain or generator)");
}

std::map<std::string, CategoryAccuracy> category_accuracy(const Corpus& corpus, std::span<const Label> preds,
                                                          CategoryField field) {
    if (preds.size() != corpus.size()) {
        throw ValidationError("category_accuracy: " + std::to_string(corpus.size()) + " samples but " +
                              std::to_string(preds.size()) + " predictions");
    }
    std::vector<std::string> missing;
    std::map<std::string, CategoryAccuracy> out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Sample& s = corpus.samples()[i];
        const auto& value = field == CategoryField::Domain ? s.domain : s.generator;
        if (!value) {
            missing.push_back(s.id);
            continue;
        }
        auto& cat = out[*value];
        ++cat.n;
        cat.correct += preds[i] == s.label;
    }
    if (!missing.empty()) {
        std::string msg = "category_accuracy: " + std::to_string(missing.size()) + " sample(s) lack field '" +
                          std::string(to_string(field)) + "':";
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
        if (missing.size() > 20) msg += " ...";
        throw ValidationError(msg);
    }
    for (auto& [_, cat] : out) cat.accuracy = ratio(cat.correct, cat.n);
    return out;
}

std::string render_table(std::span<const TableRow> rows) {
    const std::array<std::string, 5> header{"Dataset", "Acc", "F_macro", "Pre", "Rec"};
    std::vector<std::array<std::string, 5>> cells;
    for (const auto& r : rows) {
        cells.push_back({r.dataset, fixed3(r.acc), fixed3(r.f_macro), fixed3(r.precision), fixed3(r.recall)});
    }
    std::array<std::size_t, 5> width{};
    for (std::size_t c = 0; c < 5; ++c) {
        width[c] = header[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    const auto line = [&](const std::array<std::string, 5>& values) {
        std::string out = "|";
        for (std::size_t c = 0; c < 5; ++c) {
            out += " " + values[c] + std::string(width[c] - values[c].size(), ' ') + " |";
        }
        return out + "\n";
    };
    std::string out = line(header);
    out += "|";
    for (std::size_t c = 0; c < 5; ++c) out += std::string(width[c] + 2, '-') + "|";
    out += "\n";
    for (const auto& row : cells) out += line(row);
    out += "Pre and Rec are macro-averaged over the human and ai classes.\n";
    return out;
}

}  // namespace stackdetect
