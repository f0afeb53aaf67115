#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memrecall/kernels.hpp"
#include "memrecall/tensor.hpp"
#include "memrecall/tokenizer.hpp"

namespace memrecall {

struct ModelConfig {
    std::size_t n_layers = 0;
    std::size_t d_model = 0;
    std::size_t d_ff = 0;
    std::size_t n_heads = 0;
    std::size_t vocab_size = 0;
    std::size_t max_positions = 0;
    kernels::Activation activation = kernels::Activation::GeluTanh;
    float layer_norm_eps = 1e-5f;

    // Throws ModelError when a count is zero or d_model % n_heads != 0.
    void validate() const;

    /// Accepts both the native keys (n_layers, d_model, d_ff, ...) and the
    /// Hugging Face GPT-2 keys (n_layer, n_embd, n_inner, ...).
    static ModelConfig from_json_file(const std::filesystem::path& path);
    void to_json_file(const std::filesystem::path& path) const;
};

/// Weights of one pre-norm GPT-2 block. Projection matrices keep the
/// checkpoint's [in, out] layout, so ffn_in is W_K transposed (column j is
/// key k_j) and ffn_out is W_V (row j is value vector v_j).
struct LayerWeights {
    std::vector<float> ln1_gain, ln1_bias;
    Matrix attn_qkv;  // [d, 3d]
    std::vector<float> attn_qkv_bias;
    Matrix attn_out;  // [d, d]
    std::vector<float> attn_out_bias;
    std::vector<float> ln2_gain, ln2_bias;
    Matrix ffn_in;  // [d, d_ff]
    std::vector<float> ffn_in_bias;
    Matrix ffn_out;  // [d_ff, d]
    std::vector<float> ffn_out_bias;
};

struct WeightSet {
    Matrix token_embedding;     // [|V|, d], tied with the output projection
    Matrix position_embedding;  // [max_positions, d]
    std::vector<LayerWeights> layers;
    std::vector<float> final_gain, final_bias;

    // Throws ModelError naming the first tensor whose shape disagrees with cfg
    // or which holds a non-finite value.
    void validate(const ModelConfig& cfg) const;
};

enum class ZeroMode { Dominant, NonDominant };
enum class PositionScope { LastPosition, AllPositions };

/// FFN zeroing applied during a forward pass. Layers are 1-based, inclusive.
struct InterventionSpec {
    std::size_t start_layer = 1;
    std::size_t end_layer = 1;
    ZeroMode mode = ZeroMode::Dominant;
    std::size_t k = 10;
    PositionScope scope = PositionScope::LastPosition;

    void validate(const ModelConfig& cfg) const;
    bool covers(std::size_t layer) const { return layer >= start_layer && layer <= end_layer; }
};

std::string to_string(ZeroMode m);
ZeroMode parse_zero_mode(std::string_view s);
std::string to_string(PositionScope s);
PositionScope parse_position_scope(std::string_view s);

/// Residual-stream snapshots of one forward pass. hidden[l][p] is the stream
/// after layer l at the p-th traced position (l = 0 is the embedding sum).
struct TraceBuffer {
    std::vector<std::size_t> positions;
    std::vector<std::vector<std::vector<float>>> hidden;      // [L+1][P][d]
    std::vector<std::vector<std::vector<float>>> ffn_coeffs;  // [L][P][d_ff], empty unless requested

    std::span<const float> at(std::size_t layer, std::size_t position) const;
};

struct ForwardOptions {
    std::vector<std::size_t> trace_positions;  // empty: last position only
    bool record_ffn_coeffs = false;
    std::optional<InterventionSpec> intervention;
    kernels::Exec exec = kernels::Exec::Parallel;
};

struct ForwardResult {
    std::vector<float> logits;  // last position, |V|
    TraceBuffer trace;
};

struct FfnResult {
    std::vector<float> output;  // sum_j m_j v_j + output bias
    std::vector<float> coeffs;  // m, length d_ff
};

class Model {
public:
    Model(ModelConfig config, WeightSet weights, Tokenizer tokenizer);

    const ModelConfig& config() const { return config_; }
    const WeightSet& weights() const { return weights_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    /// ||v_j|| for every FFN value vector of a layer (1-based), computed once at construction.
    std::span<const float> value_norms(std::size_t layer) const;

    ForwardResult forward_trace(std::span<const TokenId> ids, const ForwardOptions& opts = {}) const;

    /// FFN of one layer (1-based) applied to a residual-stream vector: the
    /// block's pre-FFN normalization, m = f(x W_K^T + b_K), then the output.
    FfnResult ffn_sublayer(std::span<const float> h, std::size_t layer) const;

    /// Logits of the output head for a residual-stream vector, with or without
    /// the final normalization.
    std::vector<float> project(std::span<const float> h, bool apply_final_norm,
                               kernels::Exec exec = kernels::Exec::Parallel) const;

    std::vector<float> final_norm(std::span<const float> h) const;

    /// First token of the target word with a leading space prepended.
    TokenId target_token(std::string_view target) const;

private:
    // Runs the FFN of a (0-based) layer on normalized rows of x, writing the
    // sublayer output into out and the (possibly zeroed) coefficients into m.
    void ffn_block(const Matrix& normed, std::size_t layer_index, const InterventionSpec* intervention,
                   kernels::Exec exec, Matrix& m, Matrix& out) const;

    ModelConfig config_;
    WeightSet weights_;
    Tokenizer tokenizer_;
    std::vector<std::vector<float>> value_norms_;
};

/// Loads config.json, model.safetensors, vocab.json and merges.txt.
Model load_model(const std::filesystem::path& model_dir);

/// Writes the directory layout read by load_model (Hugging Face GPT-2 tensor names).
void save_model(const Model& model, const std::filesystem::path& model_dir);

std::size_t argmax(std::span<const float> xs);

}  // namespace memrecall
