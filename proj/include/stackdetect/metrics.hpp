#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackdetect/common.hpp"
#include "stackdetect/corpus.hpp"

namespace stackdetect {

/// AI is the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred);

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct CategoryAccuracy {
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::size_t n = 0;
    ConfusionMatrix cm;
    double acc = 0.0;
    double f_macro = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    std::array<ClassScores, 2> per_class{};         // indexed by Label
    std::array<std::size_t, 2> class_count{};       // true-class sizes
    std::array<std::size_t, 2> per_class_correct{};  // indexed by true Label
    std::string category_field;                      // empty when no breakdown
    std::map<std::string, CategoryAccuracy> per_category;
    std::vector<std::string> flags;
    std::string fingerprint;

    nlohmann::json to_json() const;
};

/// Accuracy and macro scores over the two classes. 0/0 precision or recall is 0; a class
/// absent from y_true still enters the macro mean (with recall 0) and is flagged.
EvalReport evaluate(std::span<const Label> y_true, std::span<const Label> y_pred);

std::array<std::size_t, 2> per_class_correct(std::span<const Label> y_true, std::span<const Label> y_pred);

enum class CategoryField { Domain, Generator };

std::string_view to_string(CategoryField field);
CategoryField parse_category_field(std::string_view text);

/// Per-category accuracy; preds[i] belongs to corpus sample i. Every sample needs the field set.
std::map<std::string, CategoryAccuracy> category_accuracy(const Corpus& corpus, std::span<const Label> preds,
                                                          CategoryField field);

/// One row of a results table.
struct TableRow {
    std::string dataset;
    double acc;
    double f_macro;
    double precision;
    double recall;
};

/// Aligned plain-text table: Dataset | Acc | F_macro | Pre | Rec, three decimals.
std::string render_table(std::span<const TableRow> rows);

}  // namespace stackdetect
