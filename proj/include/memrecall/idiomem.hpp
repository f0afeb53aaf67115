#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memrecall/lens.hpp"
#include "memrecall/model.hpp"

namespace memrecall {

enum class Source { Magpie, Epie, Lidioms, Ef, Other };

std::string to_string(Source s);
Source parse_source(std::string_view s);  // case-insensitive; unknown tags map to Other

struct IdiomEntry {
    std::vector<std::string> prompt_words;
    std::string target_word;
    Source source = Source::Other;

    std::string prompt() const;
    std::string full() const;
    std::size_t word_count() const;
};

std::vector<std::string> split_words(std::string_view text);
std::string case_fold(std::string_view s);
/// Strips leading and trailing ASCII punctuation.
std::string strip_punct(std::string_view word);

/// Reads idiom JSONL files (prompt, target, source). Entries whose case-folded
/// full text was already seen are skipped, so the first source wins.
std::vector<IdiomEntry> load_idioms(const std::vector<std::filesystem::path>& paths);
void write_idioms_jsonl(const std::filesystem::path& path, const std::vector<IdiomEntry>& entries);
std::vector<ProbeItem> to_probe_items(const std::vector<IdiomEntry>& entries, std::string_view id_prefix = "idiom");

// --- filters -----------------------------------------------------------------

/// Keep iff the idiom has at least min_words words (punctuation-only tokens not counted).
bool filter_length(const IdiomEntry& entry, std::size_t min_words = 4);

class CompletionScorer {
public:
    virtual ~CompletionScorer() = default;
    virtual std::string name() const = 0;
    /// True iff the scorer's top-1 continuation of `fragment` is the target's first token.
    virtual bool predicts(std::string_view fragment, std::string_view target) const = 0;
};

class ModelScorer final : public CompletionScorer {
public:
    ModelScorer(const Model& model, std::string name) : model_(model), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    bool predicts(std::string_view fragment, std::string_view target) const override;

private:
    const Model& model_;
    std::string name_;
};

/// Predictions precomputed elsewhere: TSV lines "fragment<TAB>predicted word".
/// Fragments missing from the table never hit.
class TableScorer final : public CompletionScorer {
public:
    static TableScorer load(const std::filesystem::path& tsv, std::string name);
    TableScorer(std::unordered_map<std::string, std::string> table, std::string name)
        : table_(std::move(table)), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    bool predicts(std::string_view fragment, std::string_view target) const override;

private:
    std::unordered_map<std::string, std::string> table_;
    std::string name_;
};

/// Contiguous n-grams (1 <= n <= n_max) of the prompt, joined by single spaces.
/// The whole prompt is included only when include_full_prompt is set.
std::vector<std::string> prompt_ngrams(const IdiomEntry& entry, std::size_t n_max, bool include_full_prompt);

struct PredictableOptions {
    std::size_t n_max = 4;
    std::size_t majority = 0;  // 0: ceil(0.75 * number of scorers)
    bool include_full_prompt = false;
};

/// Number of scorers that predict the target from some prompt n-gram.
std::size_t predictable_hits(const IdiomEntry& entry, std::span<const CompletionScorer* const> scorers,
                             const PredictableOptions& opts = {});
std::size_t default_majority(std::size_t n_scorers);

/// Keep iff fewer than `majority` scorers hit. Throws UsageError with no scorers.
bool filter_predictable(const IdiomEntry& entry, std::span<const CompletionScorer* const> scorers,
                        const PredictableOptions& opts = {});

class WordEmbeddingTable {
public:
    /// GloVe text format. Lookup is case-folded; the first spelling of a word wins.
    static WordEmbeddingTable load(const std::filesystem::path& path);
    void add(std::string_view word, std::vector<float> vec);
    std::optional<std::span<const float>> lookup(std::string_view word) const;
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return index_.size(); }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<float> data_;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Max cosine similarity between the target and any in-vocabulary prompt word;
/// nullopt if the target or every prompt word is out of vocabulary.
std::optional<double> similarity_score(const IdiomEntry& entry, const WordEmbeddingTable& table);

/// Drop iff the similarity score exceeds the threshold.
bool filter_similarity(const IdiomEntry& entry, const WordEmbeddingTable& table, double threshold = 0.75);

// --- dataset build -----------------------------------------------------------

enum class FilterKind { None, Length, Predictable, Similarity };
std::string to_string(FilterKind f);

struct FilterVerdict {
    IdiomEntry entry;
    bool kept = true;
    FilterKind filter = FilterKind::None;  // first filter that dropped it
    // Outcome of every enabled filter, for example listings.
    bool short_idiom = false;
    std::optional<bool> predictable;
    std::optional<double> similarity;
};

struct FilterReport {
    std::vector<FilterVerdict> verdicts;

    std::size_t total() const { return verdicts.size(); }
    std::size_t kept() const;
    std::size_t dropped(FilterKind f) const;
    double pct_dropped(FilterKind f) const;  // percent of total
};

struct BuildConfig {
    std::size_t min_words = 4;
    PredictableOptions predictable;
    double sim_threshold = 0.75;
};

/// Applies length, predictable and similarity filters in that order. A filter
/// is skipped when disabled (min_words 0, no scorers, no table).
std::pair<std::vector<IdiomEntry>, FilterReport> build_idiomem(const std::vector<IdiomEntry>& entries,
                                                               std::span<const CompletionScorer* const> scorers,
                                                               const WordEmbeddingTable* table,
                                                               const BuildConfig& cfg);

// idiom,source,verdict,filter
void write_filter_report_csv(const std::filesystem::path& path, const FilterReport& report);
// prompt,target,source,short,pred,sim,kept
void write_filter_examples_csv(const std::filesystem::path& path, const FilterReport& report, double sim_threshold);
// filter,dropped,pct
void write_filter_summary_csv(const std::filesystem::path& path, const FilterReport& report);

// --- wiki controls -----------------------------------------------------------

/// One document per non-empty line; lines starting with '=' (section headings) are skipped.
std::vector<std::vector<std::string>> load_wiki_corpus(const std::filesystem::path& path);

/// Prompt word count -> number of entries.
std::map<std::size_t, std::size_t> prompt_length_histogram(const std::vector<IdiomEntry>& entries);

/// Draws n distinct windows: a prompt length from the histogram, then a
/// uniformly random window of length+1 words inside one document (last word
/// is the target). Throws DataError once a drawn length has no unused window.
std::vector<IdiomEntry> sample_wiki_prompts(const std::vector<std::vector<std::string>>& documents,
                                            const std::map<std::size_t, std::size_t>& histogram, std::size_t n,
                                            std::uint64_t seed);

// --- facts -------------------------------------------------------------------

struct FactEntry {
    std::string id;
    std::string prompt;
    std::string target;
    std::string relation;
    std::string subject;  // may be empty
};

inline constexpr std::string_view kBlank = "___";

/// Facts JSONL (statement, answer, relation; optional id, subject). Keeps only
/// statements with a single final blank and a single answer.
std::vector<FactEntry> load_facts(const std::filesystem::path& path);
std::vector<ProbeItem> to_probe_items(const std::vector<FactEntry>& facts);

}  // namespace memrecall
