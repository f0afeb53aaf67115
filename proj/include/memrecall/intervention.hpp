#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "memrecall/lens.hpp"
#include "memrecall/model.hpp"

namespace memrecall {

struct InterventionRow {
    std::string example_id;
    TokenId target_token = 0;
    TokenId predicted_before = 0;
    TokenId predicted_after = 0;
    bool prediction_changed = false;
    std::size_t target_rank_before = 0;
    std::size_t target_rank_after = 0;
    double target_prob_before = 0.0;
    double target_prob_after = 0.0;
};

struct InterventionResult {
    InterventionSpec spec;
    std::vector<InterventionRow> rows;
    double pct_changed = 0.0;
    double mean_rank_delta = 0.0;  // mean(after - before)
    double mean_prob_delta = 0.0;
};

/// Dominance scores against a model layer's value norms (layer is 1-based).
std::vector<float> dominance_scores(const Model& model, std::span<const float> coeffs, std::size_t layer);

/// Baseline output of one example, reused across the cells of a sweep.
struct Baseline {
    std::vector<TokenId> ids;
    TokenId target = 0;
    TokenId predicted = 0;
    std::size_t target_rank = 0;
    double target_prob = 0.0;
};

/// Throws DataError if the unmodified model does not predict the target.
Baseline compute_baseline(const Model& model, const ProbeItem& item);

InterventionResult run_intervention(const Model& model, const std::vector<ProbeItem>& examples,
                                    const InterventionSpec& spec);

/// Same, with baselines already computed (one per example, same order).
InterventionResult run_intervention(const Model& model, const std::vector<ProbeItem>& examples,
                                    const std::vector<Baseline>& baselines, const InterventionSpec& spec);

/// All (start, end) ranges with end - start + 1 <= max_span, start-major.
std::vector<std::pair<std::size_t, std::size_t>> layer_ranges(std::size_t n_layers, std::size_t max_span);

/// One result per (mode, range), modes in the given order, ranges as layer_ranges.
std::vector<InterventionResult> sweep_ranges(const Model& model, const std::vector<ProbeItem>& examples,
                                             std::size_t max_span, const std::vector<ZeroMode>& modes,
                                             std::size_t k = 10,
                                             PositionScope scope = PositionScope::LastPosition);

// start_layer,end_layer,mode,k,n_examples,pct_changed,mean_rank_delta,mean_prob_delta
void write_sweep_csv(const std::filesystem::path& path, const std::vector<InterventionResult>& results);

// per-example rows of every cell
void write_intervention_rows_csv(const std::filesystem::path& path, const std::vector<InterventionResult>& results);

}  // namespace memrecall
