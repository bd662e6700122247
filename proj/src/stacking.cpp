#include <cmath>
#include <set>

#include "stackdetect/ensemble.hpp"

namespace stackdetect {

using nlohmann::json;

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw std::invalid_argument("Matrix::append_row: width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

void StackedFeatures::validate() const {
    if (manifest.empty()) throw ValidationError("stacked features: empty scorer manifest");
    std::set<std::string> unique(manifest.begin(), manifest.end());
    if (unique.size() != manifest.size()) throw ValidationError("stacked features: duplicate scorer id in manifest");
    if (ids.size() != labels.size() || ids.size() != rows.rows()) {
        throw ValidationError("stacked features: ids, labels and rows differ in count");
    }
    if (!ids.empty() && rows.cols() != width()) {
        throw ValidationError("stacked features: row width " + std::to_string(rows.cols()) + " but manifest implies " +
                              std::to_string(width()));
    }
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        for (std::size_t k = 0; k < manifest.size(); ++k) {
            ProbVector p{rows(i, 2 * k), rows(i, 2 * k + 1)};
            try {
                p.validate();
            } catch (const ValidationError& e) {
                throw ValidationError("stacked features: sample '" + ids[i] + "', scorer '" + manifest[k] +
                                      "': " + e.what());
            }
        }
    }
}

json StackedFeatures::to_json() const {
    std::vector<std::string> label_names;
    label_names.reserve(labels.size());
    for (Label l : labels) label_names.emplace_back(to_string(l));
    json jrows = json::array();
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        jrows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return json{{"manifest", manifest}, {"ids", ids}, {"labels", label_names}, {"rows", jrows}};
}

StackedFeatures StackedFeatures::from_json(const json& j) {
    StackedFeatures f;
    f.manifest = j.at("manifest").get<std::vector<std::string>>();
    f.ids = j.at("ids").get<std::vector<std::string>>();
    for (const auto& l : j.at("labels")) f.labels.push_back(parse_label(l.get<std::string>()));
    f.rows = Matrix(0, f.width());
    for (const auto& r : j.at("rows")) f.rows.append_row(r.get<std::vector<double>>());
    f.validate();
    return f;
}

StackedFeatures stack_samples(std::span<const Sample* const> samples, std::span<const Scorer* const> scorers) {
    if (scorers.empty()) throw ValidationError("stack_features: no scorers given");
    if (samples.empty()) throw ValidationError("stack_features: no samples to stack (empty split)");

    StackedFeatures out;
    for (const Scorer* s : scorers) out.manifest.push_back(s->id());

    std::string coverage;
    for (const Scorer* s : scorers) {
        const auto missing = s->missing(samples);
        if (missing.empty()) continue;
        coverage += "\n  scorer '" + s->id() + "' lacks " + std::to_string(missing.size()) + " sample(s):";
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) coverage += " " + missing[i];
        if (missing.size() > 20) coverage += " ...";
    }
    if (!coverage.empty()) throw ValidationError("stack_features: incomplete scorer coverage" + coverage);

    out.rows = Matrix(samples.size(), out.width());
    for (std::size_t k = 0; k < scorers.size(); ++k) {
        const auto probs = scorers[k]->score_samples(samples);
        if (probs.size() != samples.size()) {
            throw std::runtime_error("scorer '" + scorers[k]->id() + "' returned the wrong number of results");
        }
        for (std::size_t i = 0; i < samples.size(); ++i) {
            out.rows(i, 2 * k) = probs[i].p_human;
            out.rows(i, 2 * k + 1) = probs[i].p_ai;
        }
    }
    out.ids.reserve(samples.size());
    out.labels.reserve(samples.size());
    for (const Sample* s : samples) {
        out.ids.push_back(s->id);
        out.labels.push_back(s->label);
    }
    out.validate();
    return out;
}

StackedFeatures stack_features(const Corpus& corpus, std::span<const Scorer* const> scorers, Split split) {
    const auto samples = corpus.split(split);
    if (samples.empty()) {
        throw ValidationError("stack_features: split '" + std::string(to_string(split)) + "' of corpus '" +
                              corpus.name() + "' is empty");
    }
    return stack_samples(samples, scorers);
}

}  // namespace stackdetect
