#include "memrecall/lens.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>

#include "memrecall/errors.hpp"
#include "memrecall/report.hpp"

namespace memrecall {

std::string to_string(SetLabel s) {
    switch (s) {
        case SetLabel::Mem: return "mem";
        case SetLabel::NonMem: return "non-mem";
        case SetLabel::Wiki: return "wiki";
        case SetLabel::MemFact: return "mem-fact";
        case SetLabel::NonMemFact: return "non-mem-fact";
    }
    return "?";
}

SetLabel parse_set_label(std::string_view s) {
    for (auto l : {SetLabel::Mem, SetLabel::NonMem, SetLabel::Wiki, SetLabel::MemFact, SetLabel::NonMemFact})
        if (to_string(l) == s) return l;
    throw DataError("unknown set label '" + std::string(s) + "'");
}

std::vector<double> project_lens(const Model& model, std::span<const float> h, bool apply_final_norm) {
    if (h.size() != model.config().d_model)
        throw std::invalid_argument("project_lens: hidden vector has dimension " + std::to_string(h.size()) +
                                    ", expected " + std::to_string(model.config().d_model));
    const auto logits = model.project(h, apply_final_norm);
    std::vector<double> p(logits.size());
    kernels::softmax(logits, p);
    return p;
}

std::size_t rank_of(std::span<const double> dist, TokenId token) {
    if (token < 0 || static_cast<std::size_t>(token) >= dist.size())
        throw std::out_of_range("rank_of: token " + std::to_string(token) + " outside distribution of size " +
                                std::to_string(dist.size()));
    const auto t = static_cast<std::size_t>(token);
    const double pt = dist[t];
    std::size_t rank = 0;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist[i] > pt || (dist[i] == pt && i < t)) ++rank;
    return rank;
}

LensRecord probe_example(const Model& model, const ProbeItem& item, SetLabel set, const LensOptions& opts,
                         std::vector<float>* final_hidden) {
    if (item.prompt.empty()) throw DataError("example '" + item.id + "': empty prompt");
    if (item.target.empty()) throw DataError("example '" + item.id + "': empty target");
    const auto ids = model.tokenizer().encode(item.prompt);
    const std::size_t L = model.config().n_layers;
    const auto fwd = model.forward_trace(ids);

    LensRecord rec;
    rec.example_id = item.id;
    rec.set = set;
    rec.target_token = model.target_token(item.target);

    std::vector<double> out(fwd.logits.size());
    kernels::softmax(fwd.logits, out);
    rec.predicted_token = static_cast<TokenId>(argmax(fwd.logits));
    rec.correct = rec.predicted_token == rec.target_token;

    rec.rank.resize(L + 1);
    rec.prob.resize(L + 1);
    const std::size_t last = ids.size() - 1;
    for (std::size_t l = 0; l < L; ++l) {
        const auto dist = project_lens(model, fwd.trace.at(l, last), opts.apply_final_norm);
        rec.rank[l] = rank_of(dist, rec.predicted_token);
        rec.prob[l] = dist[static_cast<std::size_t>(rec.predicted_token)];
    }
    rec.rank[L] = rank_of(out, rec.predicted_token);
    rec.prob[L] = out[static_cast<std::size_t>(rec.predicted_token)];

    if (final_hidden) {
        const auto h = fwd.trace.at(L, last);
        final_hidden->assign(h.begin(), h.end());
    }
    return rec;
}

std::vector<LensRecord> probe_all(const Model& model, const std::vector<ProbeItem>& items, SetLabel set,
                                  const LensOptions& opts, std::vector<std::vector<float>>* final_hidden) {
    std::vector<LensRecord> out(items.size());
    if (final_hidden) final_hidden->assign(items.size(), {});
    std::exception_ptr error;
    std::mutex error_mu;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(items.size()); ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            out[k] = probe_example(model, items[k], set, opts, final_hidden ? &(*final_hidden)[k] : nullptr);
        } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

TokenId ModelPredictor::predict(std::string_view prompt) const {
    const auto ids = model_.tokenizer().encode(prompt);
    const auto fwd = model_.forward_trace(ids);
    return static_cast<TokenId>(argmax(fwd.logits));
}

std::pair<std::vector<ProbeItem>, std::vector<ProbeItem>> split_memorized(const std::vector<ProbeItem>& items,
                                                                          const NextTokenPredictor& predictor) {
    std::vector<char> hit(items.size(), 0);
    std::exception_ptr error;
    std::mutex error_mu;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(items.size()); ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            hit[k] = predictor.predict(items[k].prompt) == predictor.target_token(items[k].target);
        } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    std::pair<std::vector<ProbeItem>, std::vector<ProbeItem>> out;
    for (std::size_t k = 0; k < items.size(); ++k) (hit[k] ? out.first : out.second).push_back(items[k]);
    return out;
}

std::vector<LayerCurve> aggregate_curves(const std::vector<LensRecord>& records) {
    if (records.empty()) throw DataError("aggregate_curves: no records");
    const std::size_t width = records.front().rank.size();
    std::map<SetLabel, std::vector<const LensRecord*>> groups;
    for (const auto& r : records) {
        if (r.rank.size() != width || r.prob.size() != width)
            throw DataError("aggregate_curves: record '" + r.example_id + "' has a different layer count");
        groups[r.set].push_back(&r);
    }
    std::vector<LayerCurve> curves;
    for (const auto& [set, members] : groups) {
        LayerCurve c;
        c.set = set;
        c.n = members.size();
        c.mean_rank.assign(width, 0.0);
        c.mean_prob.assign(width, 0.0);
        c.std_rank.assign(width, 0.0);
        c.std_prob.assign(width, 0.0);
        const double n = static_cast<double>(c.n);
        for (std::size_t l = 0; l < width; ++l) {
            double sr = 0.0, sp = 0.0;
            for (const auto* r : members) {
                sr += static_cast<double>(r->rank[l]);
                sp += r->prob[l];
            }
            const double mr = sr / n, mp = sp / n;
            double vr = 0.0, vp = 0.0;
            for (const auto* r : members) {
                vr += (static_cast<double>(r->rank[l]) - mr) * (static_cast<double>(r->rank[l]) - mr);
                vp += (r->prob[l] - mp) * (r->prob[l] - mp);
            }
            c.mean_rank[l] = mr;
            c.mean_prob[l] = mp;
            c.std_rank[l] = std::sqrt(vr / n);
            c.std_prob[l] = std::sqrt(vp / n);
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

void write_probe_csv(const std::filesystem::path& path, const std::vector<LensRecord>& records,
                     bool include_embedding) {
    report::CsvWriter w(path, {"example_id", "set", "layer", "rank", "prob"});
    for (const auto& r : records)
        for (std::size_t l = include_embedding ? 0 : 1; l < r.rank.size(); ++l)
            w.row({r.example_id, to_string(r.set), std::to_string(l), std::to_string(r.rank[l]), report::fmt(r.prob[l])});
    w.close();
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<LayerCurve>& curves,
                      bool include_embedding) {
    report::CsvWriter w(path, {"set", "layer", "mean_rank", "mean_prob", "std_rank", "std_prob", "n"});
    for (const auto& c : curves)
        for (std::size_t l = include_embedding ? 0 : 1; l < c.mean_rank.size(); ++l)
            w.row({to_string(c.set), std::to_string(l), report::fmt(c.mean_rank[l]), report::fmt(c.mean_prob[l]),
                   report::fmt(c.std_rank[l]), report::fmt(c.std_prob[l]), std::to_string(c.n)});
    w.close();
}

std::vector<LensRecord> read_probe_records(const std::filesystem::path& probe_csv,
                                           const std::filesystem::path& examples_csv, std::size_t n_layers) {
    const auto ex = report::read_csv(examples_csv);
    const auto c_id = ex.column("example_id"), c_set = ex.column("set"), c_pred = ex.column("predicted_token"),
               c_tgt = ex.column("target_token"), c_ok = ex.column("correct");
    std::vector<LensRecord> records;
    std::map<std::string, std::size_t> index;
    for (const auto& row : ex.rows) {
        LensRecord r;
        r.example_id = row[c_id];
        r.set = parse_set_label(row[c_set]);
        r.predicted_token = std::stoi(row[c_pred]);
        r.target_token = std::stoi(row[c_tgt]);
        r.correct = row[c_ok] == "1";
        r.rank.assign(n_layers + 1, 0);
        r.prob.assign(n_layers + 1, 0.0);
        index[r.example_id] = records.size();
        records.push_back(std::move(r));
    }
    const auto pr = report::read_csv(probe_csv);
    const auto p_id = pr.column("example_id"), p_layer = pr.column("layer"), p_rank = pr.column("rank"),
               p_prob = pr.column("prob");
    for (const auto& row : pr.rows) {
        auto it = index.find(row[p_id]);
        if (it == index.end()) throw DataError("probe record for unknown example '" + row[p_id] + "'");
        const auto l = static_cast<std::size_t>(std::stoul(row[p_layer]));
        if (l > n_layers) throw DataError("probe record layer " + row[p_layer] + " exceeds model depth");
        records[it->second].rank[l] = static_cast<std::size_t>(std::stoull(row[p_rank]));
        records[it->second].prob[l] = std::stod(row[p_prob]);
    }
    return records;
}

}  // namespace memrecall
