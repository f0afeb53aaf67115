#include "memrecall/idiomem.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "memrecall/errors.hpp"
#include "memrecall/report.hpp"
#include "memrecall/rng.hpp"

namespace memrecall {

using nlohmann::json;

std::string to_string(Source s) {
    switch (s) {
        case Source::Magpie: return "magpie";
        case Source::Epie: return "epie";
        case Source::Lidioms: return "lidioms";
        case Source::Ef: return "ef";
        case Source::Other: return "other";
    }
    return "other";
}

Source parse_source(std::string_view s) {
    const auto f = case_fold(s);
    for (auto src : {Source::Magpie, Source::Epie, Source::Lidioms, Source::Ef})
        if (f == to_string(src)) return src;
    return Source::Other;
}

std::string IdiomEntry::prompt() const {
    std::string out;
    for (const auto& w : prompt_words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

std::string IdiomEntry::full() const { return prompt_words.empty() ? target_word : prompt() + " " + target_word; }

std::size_t IdiomEntry::word_count() const {
    std::size_t n = strip_punct(target_word).empty() ? 0 : 1;
    for (const auto& w : prompt_words) n += !strip_punct(w).empty();
    return n;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string case_fold(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_punct(std::string_view w) {
    auto is_p = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    std::size_t b = 0, e = w.size();
    while (b < e && is_p(w[b])) ++b;
    while (e > b && is_p(w[e - 1])) --e;
    return std::string(w.substr(b, e - b));
}

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");
    if (!obj[key].is_string()) throw DataError(where + ": field '" + key + "' is not a string");
    return obj[key].get<std::string>();
}

template <class F>
void for_each_jsonl(const std::filesystem::path& path, F&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (split_words(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": invalid JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
        fn(obj, where);
    }
}

template <class F>
void parallel_for(std::size_t n, F&& body) {
    std::exception_ptr error;
    std::mutex mu;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<IdiomEntry> load_idioms(const std::vector<std::filesystem::path>& paths) {
    std::vector<IdiomEntry> out;
    std::unordered_set<std::string> seen;
    for (const auto& p : paths) {
        for_each_jsonl(p, [&](const json& obj, const std::string& where) {
            IdiomEntry e;
            e.prompt_words = split_words(require_string(obj, "prompt", where));
            const auto target = split_words(require_string(obj, "target", where));
            if (target.size() != 1) throw DataError(where + ": target must be a single word");
            e.target_word = target.front();
            e.source = parse_source(require_string(obj, "source", where));
            if (seen.insert(case_fold(e.full())).second) out.push_back(std::move(e));
        });
    }
    return out;
}

void write_idioms_jsonl(const std::filesystem::path& path, const std::vector<IdiomEntry>& entries) {
    std::ostringstream os;
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["prompt"] = e.prompt();
        j["target"] = e.target_word;
        j["source"] = to_string(e.source);
        os << j.dump() << '\n';
    }
    report::write_text(path, os.str());
}

std::vector<ProbeItem> to_probe_items(const std::vector<IdiomEntry>& entries, std::string_view id_prefix) {
    std::vector<ProbeItem> out;
    out.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i)
        out.push_back({std::string(id_prefix) + "-" + std::to_string(i), entries[i].prompt(), entries[i].target_word});
    return out;
}

bool filter_length(const IdiomEntry& entry, std::size_t min_words) {
    if (entry.prompt_words.empty()) return false;
    return entry.word_count() >= min_words;
}

bool ModelScorer::predicts(std::string_view fragment, std::string_view target) const {
    const auto ids = model_.tokenizer().encode(fragment);
    if (ids.empty()) return false;
    const auto fwd = model_.forward_trace(ids);
    return static_cast<TokenId>(argmax(fwd.logits)) == model_.target_token(target);
}

TableScorer TableScorer::load(const std::filesystem::path& tsv, std::string name) {
    std::ifstream in(tsv);
    if (!in) throw DataError("cannot open " + tsv.string());
    std::unordered_map<std::string, std::string> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(tsv.string() + ":" + std::to_string(lineno) + ": expected fragment<TAB>prediction");
        table.emplace(case_fold(line.substr(0, tab)), line.substr(tab + 1));
    }
    return TableScorer(std::move(table), std::move(name));
}

bool TableScorer::predicts(std::string_view fragment, std::string_view target) const {
    auto it = table_.find(case_fold(fragment));
    if (it == table_.end()) return false;
    return case_fold(strip_punct(it->second)) == case_fold(strip_punct(target));
}

std::vector<std::string> prompt_ngrams(const IdiomEntry& entry, std::size_t n_max, bool include_full_prompt) {
    const auto& w = entry.prompt_words;
    std::vector<std::string> out;
    for (std::size_t n = 1; n <= std::min(n_max, w.size()); ++n) {
        if (n == w.size() && !include_full_prompt) break;
        for (std::size_t s = 0; s + n <= w.size(); ++s) {
            std::string g = w[s];
            for (std::size_t i = s + 1; i < s + n; ++i) g += " " + w[i];
            out.push_back(std::move(g));
        }
    }
    return out;
}

std::size_t default_majority(std::size_t n_scorers) {
    return static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(n_scorers)));
}

std::size_t predictable_hits(const IdiomEntry& entry, std::span<const CompletionScorer* const> scorers,
                             const PredictableOptions& opts) {
    const auto grams = prompt_ngrams(entry, opts.n_max, opts.include_full_prompt);
    std::size_t hits = 0;
    for (const auto* s : scorers)
        hits += std::any_of(grams.begin(), grams.end(),
                            [&](const std::string& g) { return s->predicts(g, entry.target_word); });
    return hits;
}

bool filter_predictable(const IdiomEntry& entry, std::span<const CompletionScorer* const> scorers,
                        const PredictableOptions& opts) {
    if (scorers.empty()) throw UsageError("predictable-target filter needs at least one scorer");
    const std::size_t majority = opts.majority ? opts.majority : default_majority(scorers.size());
    return predictable_hits(entry, scorers, opts) < majority;
}

WordEmbeddingTable WordEmbeddingTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    WordEmbeddingTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        std::vector<float> v;
        std::string tok;
        while (ls >> tok) {
            try {
                v.push_back(std::stof(tok));
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        try {
            t.add(word, std::move(v));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return t;
}

void WordEmbeddingTable::add(std::string_view word, std::vector<float> vec) {
    if (vec.empty()) throw DataError("word '" + std::string(word) + "' has no vector");
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_)
        throw DataError("word '" + std::string(word) + "' has dimension " + std::to_string(vec.size()) +
                        ", expected " + std::to_string(dim_));
    if (!index_.emplace(case_fold(word), index_.size()).second) return;
    data_.insert(data_.end(), vec.begin(), vec.end());
}

std::optional<std::span<const float>> WordEmbeddingTable::lookup(std::string_view word) const {
    auto it = index_.find(case_fold(word));
    if (it == index_.end()) return std::nullopt;
    return std::span<const float>(data_.data() + it->second * dim_, dim_);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    if (aa == 0 || bb == 0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

std::optional<double> similarity_score(const IdiomEntry& entry, const WordEmbeddingTable& table) {
    const auto t = table.lookup(strip_punct(entry.target_word));
    if (!t) return std::nullopt;
    std::optional<double> best;
    for (const auto& w : entry.prompt_words) {
        const auto v = table.lookup(strip_punct(w));
        if (!v) continue;
        const double s = cosine_similarity(*v, *t);
        if (!best || s > *best) best = s;
    }
    return best;
}

bool filter_similarity(const IdiomEntry& entry, const WordEmbeddingTable& table, double threshold) {
    const auto s = similarity_score(entry, table);
    return !(s && *s > threshold);
}

std::string to_string(FilterKind f) {
    switch (f) {
        case FilterKind::None: return "";
        case FilterKind::Length: return "length";
        case FilterKind::Predictable: return "predictable";
        case FilterKind::Similarity: return "similarity";
    }
    return "";
}

std::size_t FilterReport::kept() const {
    return static_cast<std::size_t>(std::count_if(verdicts.begin(), verdicts.end(), [](auto& v) { return v.kept; }));
}

std::size_t FilterReport::dropped(FilterKind f) const {
    return static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [&](auto& v) { return !v.kept && v.filter == f; }));
}

double FilterReport::pct_dropped(FilterKind f) const {
    return verdicts.empty() ? 0.0 : 100.0 * static_cast<double>(dropped(f)) / static_cast<double>(total());
}

std::pair<std::vector<IdiomEntry>, FilterReport> build_idiomem(const std::vector<IdiomEntry>& entries,
                                                               std::span<const CompletionScorer* const> scorers,
                                                               const WordEmbeddingTable* table,
                                                               const BuildConfig& cfg) {
    FilterReport report;
    report.verdicts.resize(entries.size());
    const std::size_t majority =
        cfg.predictable.majority ? cfg.predictable.majority : default_majority(scorers.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        auto& v = report.verdicts[i];
        v.entry = entries[i];
        v.short_idiom = cfg.min_words > 0 && !filter_length(entries[i], cfg.min_words);
        if (!scorers.empty()) v.predictable = predictable_hits(entries[i], scorers, cfg.predictable) >= majority;
        if (table) v.similarity = similarity_score(entries[i], *table);
        if (v.short_idiom)
            v.filter = FilterKind::Length;
        else if (v.predictable.value_or(false))
            v.filter = FilterKind::Predictable;
        else if (v.similarity && *v.similarity > cfg.sim_threshold)
            v.filter = FilterKind::Similarity;
        v.kept = v.filter == FilterKind::None;
    });
    std::vector<IdiomEntry> kept;
    for (const auto& v : report.verdicts)
        if (v.kept) kept.push_back(v.entry);
    return {std::move(kept), std::move(report)};
}

void write_filter_report_csv(const std::filesystem::path& path, const FilterReport& report) {
    report::CsvWriter w(path, {"idiom", "source", "verdict", "filter"});
    for (const auto& v : report.verdicts)
        w.row({v.entry.full(), to_string(v.entry.source), v.kept ? "kept" : "dropped", to_string(v.filter)});
    w.close();
}

void write_filter_examples_csv(const std::filesystem::path& path, const FilterReport& report, double sim_threshold) {
    report::CsvWriter w(path, {"prompt", "target", "source", "short", "pred", "sim", "kept"});
    auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
    for (const auto& v : report.verdicts)
        w.row({v.entry.prompt(), v.entry.target_word, to_string(v.entry.source), flag(v.short_idiom),
               v.predictable ? flag(*v.predictable) : "",
               v.similarity ? flag(*v.similarity > sim_threshold) : "", flag(v.kept)});
    w.close();
}

void write_filter_summary_csv(const std::filesystem::path& path, const FilterReport& report) {
    report::CsvWriter w(path, {"filter", "count", "pct"});
    const double total = static_cast<double>(report.total());
    auto pct = [&](std::size_t n) { return report::fmt(total > 0 ? 100.0 * static_cast<double>(n) / total : 0.0); };
    for (auto f : {FilterKind::Length, FilterKind::Predictable, FilterKind::Similarity})
        w.row({to_string(f), std::to_string(report.dropped(f)), pct(report.dropped(f))});
    const std::size_t dropped = report.total() - report.kept();
    w.row({"dropped", std::to_string(dropped), pct(dropped)});
    w.row({"kept", std::to_string(report.kept()), pct(report.kept())});
    w.close();
}

std::vector<std::vector<std::string>> load_wiki_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<std::string>> docs;
    std::string line;
    while (std::getline(in, line)) {
        auto words = split_words(line);
        if (words.empty() || words.front().front() == '=') continue;
        docs.push_back(std::move(words));
    }
    return docs;
}

std::map<std::size_t, std::size_t> prompt_length_histogram(const std::vector<IdiomEntry>& entries) {
    std::map<std::size_t, std::size_t> h;
    for (const auto& e : entries) ++h[e.prompt_words.size()];
    return h;
}

std::vector<IdiomEntry> sample_wiki_prompts(const std::vector<std::vector<std::string>>& documents,
                                            const std::map<std::size_t, std::size_t>& histogram, std::size_t n,
                                            std::uint64_t seed) {
    if (n == 0) return {};
    std::vector<std::size_t> lengths;
    std::vector<double> weights;
    for (auto [len, count] : histogram)
        if (len > 0 && count > 0) {
            lengths.push_back(len);
            weights.push_back(static_cast<double>(count));
        }
    if (lengths.empty()) throw DataError("wiki sampling: prompt length histogram is empty");

    // Per length: cumulative window counts over documents.
    std::map<std::size_t, std::vector<std::uint64_t>> cum;
    for (auto len : lengths) {
        auto& c = cum[len];
        c.reserve(documents.size());
        std::uint64_t total = 0;
        for (const auto& d : documents) {
            total += d.size() > len ? d.size() - len : 0;
            c.push_back(total);
        }
    }

    Rng rng(seed);
    std::set<std::pair<std::size_t, std::uint64_t>> used;  // (length, window index)
    std::map<std::size_t, std::uint64_t> used_per_len;
    std::vector<IdiomEntry> out;
    out.reserve(n);
    while (out.size() < n) {
        const std::size_t len = lengths[rng.weighted(weights)];
        const auto& c = cum[len];
        const std::uint64_t total = c.empty() ? 0 : c.back();
        if (used_per_len[len] >= total)
            throw DataError("wiki corpus exhausted: no unused " + std::to_string(len + 1) + "-word window left after " +
                            std::to_string(out.size()) + " samples");
        std::uint64_t idx;
        do {
            idx = rng.below(total);
        } while (used.count({len, idx}));
        used.insert({len, idx});
        ++used_per_len[len];
        const auto doc = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), idx) - c.begin());
        const std::uint64_t start = idx - (doc ? c[doc - 1] : 0);
        const auto& words = documents[doc];
        IdiomEntry e;
        e.prompt_words.assign(words.begin() + static_cast<std::ptrdiff_t>(start),
                              words.begin() + static_cast<std::ptrdiff_t>(start + len));
        e.target_word = words[start + len];
        e.source = Source::Other;
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

bool ends_after_blank(std::string_view rest) {
    for (char c : rest)
        if (!std::isspace(static_cast<unsigned char>(c)) && !std::ispunct(static_cast<unsigned char>(c))) return false;
    return rest.find(kBlank) == std::string_view::npos;
}

}  // namespace

std::vector<FactEntry> load_facts(const std::filesystem::path& path) {
    std::vector<FactEntry> out;
    std::size_t index = 0;
    for_each_jsonl(path, [&](const json& obj, const std::string& where) {
        const std::size_t this_index = index++;
        const auto statement = require_string(obj, "statement", where);
        const auto relation = require_string(obj, "relation", where);
        if (!obj.contains("answer")) throw DataError(where + ": missing field 'answer'");
        std::string answer;
        const auto& a = obj["answer"];
        if (a.is_string()) {
            answer = a.get<std::string>();
        } else if (a.is_array()) {
            if (a.size() != 1) return;
            if (!a[0].is_string()) throw DataError(where + ": answer array must hold strings");
            answer = a[0].get<std::string>();
        } else {
            throw DataError(where + ": field 'answer' must be a string or array");
        }
        const auto pos = statement.find(kBlank);
        if (pos == std::string::npos) throw DataError(where + ": statement has no blank '___'");
        if (!ends_after_blank(std::string_view(statement).substr(pos + kBlank.size()))) return;
        if (split_words(answer).empty()) return;
        std::string prompt = statement.substr(0, pos);
        while (!prompt.empty() && std::isspace(static_cast<unsigned char>(prompt.back()))) prompt.pop_back();
        if (prompt.empty()) return;
        FactEntry f;
        f.id = obj.contains("id") && obj["id"].is_string() ? obj["id"].get<std::string>()
                                                             : "fact-" + std::to_string(this_index);
        f.prompt = std::move(prompt);
        f.target = answer;
        f.relation = relation;
        if (obj.contains("subject") && obj["subject"].is_string()) f.subject = obj["subject"].get<std::string>();
        out.push_back(std::move(f));
    });
    return out;
}

std::vector<ProbeItem> to_probe_items(const std::vector<FactEntry>& facts) {
    std::vector<ProbeItem> out;
    out.reserve(facts.size());
    for (const auto& f : facts) out.push_back({f.id, f.prompt, f.target});
    return out;
}

}  // namespace memrecall
