#include "memrecall/intervention.hpp"

#include <exception>
#include <mutex>

#include "memrecall/errors.hpp"
#include "memrecall/report.hpp"
#include "memrecall/zeroing.hpp"

namespace memrecall {

std::vector<float> dominance_scores(const Model& model, std::span<const float> coeffs, std::size_t layer) {
    if (layer < 1 || layer > model.config().n_layers)
        throw std::out_of_range("dominance_scores: layer " + std::to_string(layer) + " outside 1.." +
                                std::to_string(model.config().n_layers));
    return dominance_scores(coeffs, model.value_norms(layer));
}

namespace {

struct Outcome {
    TokenId predicted;
    std::size_t target_rank;
    double target_prob;
};

Outcome evaluate(const Model& model, std::span<const TokenId> ids, TokenId target, const ForwardOptions& opts) {
    const auto fwd = model.forward_trace(ids, opts);
    std::vector<double> p(fwd.logits.size());
    kernels::softmax(fwd.logits, p);
    return {static_cast<TokenId>(argmax(fwd.logits)), rank_of(p, target), p[static_cast<std::size_t>(target)]};
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

Baseline compute_baseline(const Model& model, const ProbeItem& item) {
    if (item.prompt.empty()) throw DataError("example '" + item.id + "': empty prompt");
    Baseline b;
    b.ids = model.tokenizer().encode(item.prompt);
    b.target = model.target_token(item.target);
    const auto o = evaluate(model, b.ids, b.target, {});
    if (o.predicted != b.target)
        throw DataError("example '" + item.id + "' is not memorized: the model predicts token " +
                        std::to_string(o.predicted) + ", target is " + std::to_string(b.target));
    b.predicted = o.predicted;
    b.target_rank = o.target_rank;
    b.target_prob = o.target_prob;
    return b;
}

InterventionResult run_intervention(const Model& model, const std::vector<ProbeItem>& examples,
                                    const InterventionSpec& spec) {
    spec.validate(model.config());
    std::vector<Baseline> baselines(examples.size());
    parallel_for(examples.size(), [&](std::size_t i) { baselines[i] = compute_baseline(model, examples[i]); });
    return run_intervention(model, examples, baselines, spec);
}

InterventionResult run_intervention(const Model& model, const std::vector<ProbeItem>& examples,
                                    const std::vector<Baseline>& baselines, const InterventionSpec& spec) {
    spec.validate(model.config());
    if (baselines.size() != examples.size()) throw std::invalid_argument("run_intervention: baseline count mismatch");
    InterventionResult res;
    res.spec = spec;
    res.rows.resize(examples.size());
    ForwardOptions opts;
    opts.intervention = spec;
    parallel_for(examples.size(), [&](std::size_t i) {
        const auto& b = baselines[i];
        const auto o = evaluate(model, b.ids, b.target, opts);
        auto& r = res.rows[i];
        r.example_id = examples[i].id;
        r.target_token = b.target;
        r.predicted_before = b.predicted;
        r.predicted_after = o.predicted;
        r.prediction_changed = o.predicted != b.predicted;
        r.target_rank_before = b.target_rank;
        r.target_rank_after = o.target_rank;
        r.target_prob_before = b.target_prob;
        r.target_prob_after = o.target_prob;
    });
    if (!res.rows.empty()) {
        std::size_t changed = 0;
        double dr = 0.0, dp = 0.0;
        for (const auto& r : res.rows) {
            changed += r.prediction_changed;
            dr += static_cast<double>(r.target_rank_after) - static_cast<double>(r.target_rank_before);
            dp += r.target_prob_after - r.target_prob_before;
        }
        const double n = static_cast<double>(res.rows.size());
        res.pct_changed = 100.0 * static_cast<double>(changed) / n;
        res.mean_rank_delta = dr / n;
        res.mean_prob_delta = dp / n;
    }
    return res;
}

std::vector<std::pair<std::size_t, std::size_t>> layer_ranges(std::size_t n_layers, std::size_t max_span) {
    if (max_span < 1) throw UsageError("max_span must be at least 1");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 1; s <= n_layers; ++s)
        for (std::size_t e = s; e <= n_layers && e - s + 1 <= max_span; ++e) out.emplace_back(s, e);
    return out;
}

std::vector<InterventionResult> sweep_ranges(const Model& model, const std::vector<ProbeItem>& examples,
                                             std::size_t max_span, const std::vector<ZeroMode>& modes, std::size_t k,
                                             PositionScope scope) {
    const auto ranges = layer_ranges(model.config().n_layers, max_span);
    std::vector<InterventionSpec> specs;
    for (auto mode : modes)
        for (auto [s, e] : ranges) {
            InterventionSpec spec{s, e, mode, k, scope};
            spec.validate(model.config());
            specs.push_back(spec);
        }
    std::vector<Baseline> baselines(examples.size());
    parallel_for(examples.size(), [&](std::size_t i) { baselines[i] = compute_baseline(model, examples[i]); });

    // Parallel over cells; inner per-example loops run on one thread each.
    std::vector<InterventionResult> out(specs.size());
    parallel_for(specs.size(), [&](std::size_t c) { out[c] = run_intervention(model, examples, baselines, specs[c]); });
    return out;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<InterventionResult>& results) {
    report::CsvWriter w(path, {"start_layer", "end_layer", "mode", "k", "n_examples", "pct_changed",
                               "mean_rank_delta", "mean_prob_delta"});
    for (const auto& r : results)
        w.row({std::to_string(r.spec.start_layer), std::to_string(r.spec.end_layer), to_string(r.spec.mode),
               std::to_string(r.spec.k), std::to_string(r.rows.size()), report::fmt(r.pct_changed),
               report::fmt(r.mean_rank_delta), report::fmt(r.mean_prob_delta)});
    w.close();
}

void write_intervention_rows_csv(const std::filesystem::path& path, const std::vector<InterventionResult>& results) {
    report::CsvWriter w(path, {"start_layer", "end_layer", "mode", "example_id", "target_token", "predicted_before",
                               "predicted_after", "prediction_changed", "target_rank_before", "target_rank_after",
                               "target_prob_before", "target_prob_after"});
    for (const auto& res : results)
        for (const auto& r : res.rows)
            w.row({std::to_string(res.spec.start_layer), std::to_string(res.spec.end_layer), to_string(res.spec.mode),
                   r.example_id, std::to_string(r.target_token), std::to_string(r.predicted_before),
                   std::to_string(r.predicted_after), r.prediction_changed ? "1" : "0",
                   std::to_string(r.target_rank_before), std::to_string(r.target_rank_after),
                   report::fmt(r.target_prob_before), report::fmt(r.target_prob_after)});
    w.close();
}

}  // namespace memrecall
