#include "stackdetect/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace stackdetect {

using nlohmann::json;

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

template <typename Range>
std::string join(const Range& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += ',';
        out += item;
    }
    return out;
}

std::string join_splits(const std::set<Split>& splits) {
    std::vector<std::string> names;
    for (Split s : splits) names.emplace_back(to_string(s));
    return join(names);
}

void validate_sample(const Sample& s) {
    if (s.id.empty()) throw ValidationError("sample id must be non-empty");
    if (blank(s.text)) throw ValidationError("sample '" + s.id + "' has empty text");
    const bool human_generator = s.generator && *s.generator == "human";
    if (s.label == Label::Human && s.generator && !human_generator) {
        throw ValidationError("sample '" + s.id + "' is labelled human but has generator '" + *s.generator + "'");
    }
    if (s.label == Label::AI && human_generator) {
        throw ValidationError("sample '" + s.id + "' is labelled ai but has generator 'human'");
    }
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{"id", "text", "label", "split", "generator", "domain"};
    return keys;
}

std::string required_string(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end()) throw ValidationError(std::string("missing required key '") + key + "'");
    if (!it->is_string()) throw ValidationError(std::string("key '") + key + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(std::string("key '") + key + "' must be a string");
    return it->get<std::string>();
}

Sample parse_sample(const json& row, const LoadOptions& opts) {
    if (!row.is_object()) throw ValidationError("row is not a JSON object");
    if (opts.strict_keys) {
        for (const auto& [key, _] : row.items()) {
            if (!known_keys().contains(key)) throw ValidationError("unknown key '" + key + "'");
        }
    }
    Sample s;
    s.id = required_string(row, "id");
    s.text = required_string(row, "text");
    while (!s.text.empty() && (s.text.back() == '\n' || s.text.back() == '\r')) s.text.pop_back();
    s.label = parse_label(required_string(row, "label"));
    s.split = parse_split(required_string(row, "split"));
    s.generator = optional_string(row, "generator");
    s.domain = optional_string(row, "domain");
    return s;
}

}  // namespace

std::string generator_key(const Sample& s) {
    if (s.generator) return *s.generator;
    return s.label == Label::Human ? "human" : "unknown";
}

Corpus::Corpus(std::string name, std::vector<Sample> samples, std::vector<std::string> provenance)
    : name_(std::move(name)), samples_(std::move(samples)), provenance_(std::move(provenance)) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(samples_.size());
    for (const auto& s : samples_) {
        validate_sample(s);
        if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    }
}

std::vector<const Sample*> Corpus::split(Split which) const {
    std::vector<const Sample*> out;
    for (const auto& s : samples_) {
        if (s.split == which) out.push_back(&s);
    }
    return out;
}

Corpus Corpus::filter_split(Split which) const {
    std::vector<Sample> kept;
    for (const auto& s : samples_) {
        if (s.split == which) kept.push_back(s);
    }
    auto prov = provenance_;
    prov.push_back("filter split=" + std::string(to_string(which)));
    return Corpus(name_, std::move(kept), std::move(prov));
}

Corpus parse_corpus(std::istream& in, std::string name, const LoadOptions& opts) {
    std::vector<Sample> samples;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        try {
            json row = json::parse(line);
            Sample s = parse_sample(row, opts);
            validate_sample(s);
            if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
            samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ValidationError(name + ":" + std::to_string(line_no) + ": parse error: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return Corpus(std::move(name), std::move(samples));
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open corpus file " + path.string());
    return parse_corpus(in, path.stem().string(), opts);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& s : corpus) {
        json row;
        row["id"] = s.id;
        row["text"] = s.text;
        row["label"] = to_string(s.label);
        row["split"] = to_string(s.split);
        if (s.generator) row["generator"] = *s.generator;
        if (s.domain) row["domain"] = *s.domain;
        out << row.dump() << '\n';
    }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus file " + path.string());
    write_corpus(corpus, out);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::size_t StatsTable::count(Split split, Label label) const {
    auto it = by_label.find({split, label});
    return it == by_label.end() ? 0 : it->second;
}

std::size_t StatsTable::count(Split split, const std::string& generator) const {
    auto it = by_generator.find({split, generator});
    return it == by_generator.end() ? 0 : it->second;
}

std::size_t StatsTable::split_size(Split split) const { return count(split, Label::Human) + count(split, Label::AI); }

std::size_t StatsTable::total() const { return split_size(Split::Train) + split_size(Split::Test); }

StatsTable corpus_stats(const Corpus& corpus) {
    StatsTable t;
    for (Split sp : {Split::Train, Split::Test}) {
        for (Label lb : {Label::Human, Label::AI}) t.by_label[{sp, lb}] = 0;
    }
    for (const auto& s : corpus) {
        ++t.by_label[{s.split, s.label}];
        ++t.by_generator[{s.split, generator_key(s)}];
    }
    return t;
}

Corpus remove_generators(const Corpus& corpus, const std::set<std::string>& generators,
                         const std::set<Split>& splits, const RemoveOptions& opts) {
    if (generators.empty()) throw ValidationError("remove_generators: generator set is empty");
    if (generators.contains("human")) throw ValidationError("remove_generators: cannot remove the 'human' class");
    if (splits.empty()) throw ValidationError("remove_generators: split set is empty");

    std::map<std::string, std::size_t> hits;
    std::vector<Sample> kept;
    kept.reserve(corpus.size());
    for (const auto& s : corpus) {
        if (splits.contains(s.split) && s.generator && generators.contains(*s.generator)) {
            ++hits[*s.generator];
            continue;
        }
        kept.push_back(s);
    }
    if (opts.strict) {
        std::vector<std::string> unmatched;
        for (const auto& g : generators) {
            if (!hits.contains(g)) unmatched.push_back(g);
        }
        if (!unmatched.empty()) {
            throw ValidationError("remove_generators: no samples for generator(s) " + join(unmatched));
        }
    }
    std::size_t removed = corpus.size() - kept.size();
    auto prov = corpus.provenance();
    prov.push_back("remove generators=[" + join(generators) + "] splits=[" + join_splits(splits) +
                   "] removed=" + std::to_string(removed));
    return Corpus(corpus.name(), std::move(kept), std::move(prov));
}

SubstituteResult substitute_generators(const Corpus& corpus, const std::vector<Substitution>& mapping,
                                       const SubstituteOptions& opts) {
    std::map<std::string, std::size_t> directive_of;
    for (std::size_t d = 0; d < mapping.size(); ++d) {
        if (mapping[d].generators.empty()) throw ValidationError("substitute_generators: directive has no generators");
        for (const auto& g : mapping[d].generators) {
            if (g == "human") throw ValidationError("substitute_generators: cannot substitute the 'human' class");
            if (!directive_of.emplace(g, d).second) {
                throw ValidationError("substitute_generators: generator '" + g + "' appears in two directives");
            }
        }
        for (const auto& r : mapping[d].replacement) {
            if (r.label != Label::AI) {
                throw ValidationError("substitute_generators: replacement sample '" + r.id + "' in '" +
                                      mapping[d].replacement.name() + "' is not labelled ai");
            }
            if (r.split != Split::Train) {
                throw ValidationError("substitute_generators: replacement sample '" + r.id + "' in '" +
                                      mapping[d].replacement.name() + "' is not a train sample");
            }
        }
    }

    std::vector<std::size_t> removed(mapping.size(), 0);
    std::vector<Sample> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) {
        if (s.split == Split::Train && s.generator) {
            if (auto it = directive_of.find(*s.generator); it != directive_of.end()) {
                ++removed[it->second];
                continue;
            }
        }
        out.push_back(s);
    }

    SubstituteResult result;
    auto prov = corpus.provenance();
    for (std::size_t d = 0; d < mapping.size(); ++d) {
        const auto& dir = mapping[d];
        const std::size_t supplied = dir.replacement.size();
        if (supplied != removed[d]) {
            std::string msg = "substitute_generators: generators [" + join(dir.generators) + "] removed " +
                              std::to_string(removed[d]) + " train samples but replacement '" +
                              dir.replacement.name() + "' supplies " + std::to_string(supplied);
            if (!opts.allow_count_mismatch) throw ValidationError(msg);
            result.warnings.push_back(msg);
        }
        for (const auto& r : dir.replacement) {
            Sample copy = r;
            copy.id = dir.replacement.name() + "/" + r.id;
            out.push_back(std::move(copy));
        }
        prov.push_back("substitute generators=[" + join(dir.generators) + "] with=" + dir.replacement.name() +
                       " removed=" + std::to_string(removed[d]) + " added=" + std::to_string(supplied));
    }
    result.corpus = Corpus(corpus.name(), std::move(out), std::move(prov));
    return result;
}

}  // namespace stackdetect
