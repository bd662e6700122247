#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stackdetect/common.hpp"

namespace stackdetect {

struct Sample {
    std::string id;
    std::string text;
    Label label = Label::Human;
    std::optional<std::string> generator;
    std::optional<std::string> domain;
    Split split = Split::Train;

    bool operator==(const Sample&) const = default;
};

/// Generator name used for grouping; null generators group as "human" or "unknown".
std::string generator_key(const Sample& s);

/// An ordered, validated, immutable collection of samples with an audit trail.
class Corpus {
public:
    Corpus() = default;

    /// Validates every sample invariant and id uniqueness; throws ValidationError.
    Corpus(std::string name, std::vector<Sample> samples, std::vector<std::string> provenance = {});

    const std::string& name() const { return name_; }
    const std::vector<Sample>& samples() const { return samples_; }
    const std::vector<std::string>& provenance() const { return provenance_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    auto begin() const { return samples_.begin(); }
    auto end() const { return samples_.end(); }

    /// Samples of one split, in corpus order.
    std::vector<const Sample*> split(Split which) const;

    /// New corpus holding only the given split; provenance is copied and extended.
    Corpus filter_split(Split which) const;

    bool operator==(const Corpus&) const = default;

private:
    std::string name_;
    std::vector<Sample> samples_;
    std::vector<std::string> provenance_;
};

struct LoadOptions {
    bool strict_keys = false;  // reject unknown JSON keys
};

/// Reads dataset JSONL. Blank lines are skipped; a trailing newline in `text` is stripped.
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});
Corpus parse_corpus(std::istream& in, std::string name, const LoadOptions& opts = {});

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

struct StatsTable {
    std::map<std::pair<Split, Label>, std::size_t> by_label;
    std::map<std::pair<Split, std::string>, std::size_t> by_generator;

    std::size_t count(Split split, Label label) const;
    std::size_t count(Split split, const std::string& generator) const;
    std::size_t split_size(Split split) const;
    std::size_t total() const;
};

StatsTable corpus_stats(const Corpus& corpus);

struct RemoveOptions {
    bool strict = false;  // every generator must match at least one sample
};

/// Drops samples in `splits` whose generator is in `generators`.
Corpus remove_generators(const Corpus& corpus, const std::set<std::string>& generators,
                         const std::set<Split>& splits, const RemoveOptions& opts = {});

struct SubstituteOptions {
    bool allow_count_mismatch = false;
};

struct SubstituteResult {
    Corpus corpus;
    std::vector<std::string> warnings;
};

/// One substitution directive: the Train samples of `generators` are replaced by `replacement`.
/// Several generators may share one replacement corpus (counts are then compared in total).
struct Substitution {
    std::set<std::string> generators;
    Corpus replacement;
};

/// Replaces mapped generators' Train samples. Replacements are appended after the retained
/// samples in directive order and get ids of the form "<replacement name>/<original id>".
SubstituteResult substitute_generators(const Corpus& corpus, const std::vector<Substitution>& mapping,
                                       const SubstituteOptions& opts = {});

}  // namespace stackdetect
