#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memrecall/model.hpp"

namespace memrecall {

enum class SetLabel { Mem, NonMem, Wiki, MemFact, NonMemFact };

std::string to_string(SetLabel s);
SetLabel parse_set_label(std::string_view s);

/// One prompt/target pair to probe.
struct ProbeItem {
    std::string id;
    std::string prompt;
    std::string target;
};

/// Rank and probability of the final predicted token at every layer.
/// Index 0 is the embedding output; 1..L are the transformer layers.
struct LensRecord {
    std::string example_id;
    SetLabel set = SetLabel::Mem;
    TokenId predicted_token = 0;
    TokenId target_token = 0;
    bool correct = false;
    std::vector<std::size_t> rank;
    std::vector<double> prob;
};

struct LayerCurve {
    SetLabel set = SetLabel::Mem;
    std::size_t n = 0;
    std::vector<double> mean_rank, mean_prob, std_rank, std_prob;  // index 0..L
};

struct LensOptions {
    // Apply the final normalization before projecting layers 0..L-1. Layer L
    // always goes through it, since that is the model's output distribution.
    bool apply_final_norm = false;
};

std::vector<double> project_lens(const Model& model, std::span<const float> h, bool apply_final_norm);

/// Number of tokens ranked ahead of `token`: strictly more probable ones plus
/// equally probable ones with a lower id.
std::size_t rank_of(std::span<const double> dist, TokenId token);

LensRecord probe_example(const Model& model, const ProbeItem& item, SetLabel set, const LensOptions& opts = {},
                         std::vector<float>* final_hidden = nullptr);

/// probe_example over many items in parallel; output order follows input.
std::vector<LensRecord> probe_all(const Model& model, const std::vector<ProbeItem>& items, SetLabel set,
                                  const LensOptions& opts = {},
                                  std::vector<std::vector<float>>* final_hidden = nullptr);

/// Anything that can predict the next token of a prompt.
class NextTokenPredictor {
public:
    virtual ~NextTokenPredictor() = default;
    virtual TokenId predict(std::string_view prompt) const = 0;
    virtual TokenId target_token(std::string_view target) const = 0;
};

class ModelPredictor final : public NextTokenPredictor {
public:
    explicit ModelPredictor(const Model& model) : model_(model) {}
    TokenId predict(std::string_view prompt) const override;
    TokenId target_token(std::string_view target) const override { return model_.target_token(target); }

private:
    const Model& model_;
};

/// Partitions items by whether the predictor's top-1 token equals the
/// target's first token: (memorized, non-memorized), input order preserved.
std::pair<std::vector<ProbeItem>, std::vector<ProbeItem>> split_memorized(const std::vector<ProbeItem>& items,
                                                                          const NextTokenPredictor& predictor);

/// Per-layer mean and population standard deviation, one curve per set
/// present, in SetLabel order.
std::vector<LayerCurve> aggregate_curves(const std::vector<LensRecord>& records);

// example_id,set,layer,rank,prob
void write_probe_csv(const std::filesystem::path& path, const std::vector<LensRecord>& records,
                     bool include_embedding = false);
// set,layer,mean_rank,mean_prob,std_rank,std_prob,n
void write_curves_csv(const std::filesystem::path& path, const std::vector<LayerCurve>& curves,
                      bool include_embedding = false);

/// Reads probe and examples CSVs written by the probe command back into
/// records. Layers absent from the file are left at rank 0 / prob 0.
std::vector<LensRecord> read_probe_records(const std::filesystem::path& probe_csv,
                                           const std::filesystem::path& examples_csv, std::size_t n_layers);

}  // namespace memrecall
