#include "memrecall/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "memrecall/errors.hpp"
#include "memrecall/safetensors.hpp"
#include "memrecall/zeroing.hpp"

namespace memrecall {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
    auto need = [](std::size_t v, const char* name) {
        if (v == 0) throw ModelError(std::string("config: ") + name + " must be positive");
    };
    need(n_layers, "n_layers");
    need(d_model, "d_model");
    need(d_ff, "d_ff");
    need(n_heads, "n_heads");
    need(vocab_size, "vocab_size");
    need(max_positions, "max_positions");
    if (d_model % n_heads != 0) throw ModelError("config: d_model must be divisible by n_heads");
    if (!(layer_norm_eps > 0.0f)) throw ModelError("config: layer_norm_epsilon must be positive");
}

ModelConfig ModelConfig::from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("malformed config file " + path.string() + ": " + e.what());
    }
    auto count = [&](const char* key, const char* alt) -> std::size_t {
        for (const char* k : {key, alt}) {
            if (k && j.contains(k) && j[k].is_number_integer()) {
                const auto v = j[k].get<long long>();
                if (v <= 0) throw ModelError(std::string("config: ") + k + " must be positive");
                return static_cast<std::size_t>(v);
            }
        }
        throw ModelError(std::string("config: missing field ") + key + " in " + path.string());
    };
    ModelConfig c;
    c.n_layers = count("n_layers", "n_layer");
    c.d_model = count("d_model", "n_embd");
    c.n_heads = count("n_heads", "n_head");
    c.vocab_size = count("vocab_size", nullptr);
    c.max_positions = count("max_positions", "n_positions");
    if (j.contains("d_ff") || (j.contains("n_inner") && !j["n_inner"].is_null()))
        c.d_ff = count("d_ff", "n_inner");
    else
        c.d_ff = 4 * c.d_model;
    for (const char* k : {"activation", "activation_function"}) {
        if (j.contains(k) && j[k].is_string()) {
            c.activation = kernels::parse_activation(j[k].get<std::string>());
            break;
        }
    }
    if (j.contains("layer_norm_epsilon")) c.layer_norm_eps = j["layer_norm_epsilon"].get<float>();
    c.validate();
    return c;
}

void ModelConfig::to_json_file(const fs::path& path) const {
    nlohmann::ordered_json j;
    j["n_layers"] = n_layers;
    j["d_model"] = d_model;
    j["d_ff"] = d_ff;
    j["n_heads"] = n_heads;
    j["vocab_size"] = vocab_size;
    j["max_positions"] = max_positions;
    j["activation"] = std::string(kernels::activation_name(activation));
    j["layer_norm_epsilon"] = layer_norm_eps;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw DataError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Weights

namespace {

std::string layer_name(std::size_t i, const std::string& suffix) { return "h." + std::to_string(i) + "." + suffix; }

void check_vec(const std::vector<float>& v, std::size_t n, const std::string& name) {
    if (v.size() != n)
        throw ModelError("tensor '" + name + "': expected " + std::to_string(n) + " values, found " +
                         std::to_string(v.size()));
    for (float x : v)
        if (!std::isfinite(x)) throw ModelError("tensor '" + name + "': non-finite value");
}

void check_mat(const Matrix& m, std::size_t r, std::size_t c, const std::string& name) {
    if (m.rows != r || m.cols != c)
        throw ModelError("tensor '" + name + "': expected shape [" + std::to_string(r) + ", " + std::to_string(c) +
                         "], found [" + std::to_string(m.rows) + ", " + std::to_string(m.cols) + "]");
    check_vec(m.data, r * c, name);
}

}  // namespace

void WeightSet::validate(const ModelConfig& cfg) const {
    const auto d = cfg.d_model;
    const auto f = cfg.d_ff;
    check_mat(token_embedding, cfg.vocab_size, d, "wte.weight");
    check_mat(position_embedding, cfg.max_positions, d, "wpe.weight");
    if (layers.size() != cfg.n_layers)
        throw ModelError("weights: expected " + std::to_string(cfg.n_layers) + " layers, found " +
                         std::to_string(layers.size()));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        check_vec(l.ln1_gain, d, layer_name(i, "ln_1.weight"));
        check_vec(l.ln1_bias, d, layer_name(i, "ln_1.bias"));
        check_mat(l.attn_qkv, d, 3 * d, layer_name(i, "attn.c_attn.weight"));
        check_vec(l.attn_qkv_bias, 3 * d, layer_name(i, "attn.c_attn.bias"));
        check_mat(l.attn_out, d, d, layer_name(i, "attn.c_proj.weight"));
        check_vec(l.attn_out_bias, d, layer_name(i, "attn.c_proj.bias"));
        check_vec(l.ln2_gain, d, layer_name(i, "ln_2.weight"));
        check_vec(l.ln2_bias, d, layer_name(i, "ln_2.bias"));
        check_mat(l.ffn_in, d, f, layer_name(i, "mlp.c_fc.weight"));
        check_vec(l.ffn_in_bias, f, layer_name(i, "mlp.c_fc.bias"));
        check_mat(l.ffn_out, f, d, layer_name(i, "mlp.c_proj.weight"));
        check_vec(l.ffn_out_bias, d, layer_name(i, "mlp.c_proj.bias"));
    }
    check_vec(final_gain, d, "ln_f.weight");
    check_vec(final_bias, d, "ln_f.bias");
}

// ---------------------------------------------------------------------------
// Intervention spec helpers

void InterventionSpec::validate(const ModelConfig& cfg) const {
    if (start_layer < 1 || start_layer > end_layer || end_layer > cfg.n_layers)
        throw UsageError("intervention layers must satisfy 1 <= start <= end <= " + std::to_string(cfg.n_layers));
    if (k > cfg.d_ff) throw UsageError("intervention k must be in [0, d_ff]");
}

std::string to_string(ZeroMode m) { return m == ZeroMode::Dominant ? "dominant" : "non_dominant"; }

ZeroMode parse_zero_mode(std::string_view s) {
    if (s == "dominant") return ZeroMode::Dominant;
    if (s == "non_dominant" || s == "non-dominant") return ZeroMode::NonDominant;
    throw UsageError("unknown mode '" + std::string(s) + "' (expected dominant or non_dominant)");
}

std::string to_string(PositionScope s) {
    return s == PositionScope::LastPosition ? "last_position" : "all_positions";
}

PositionScope parse_position_scope(std::string_view s) {
    if (s == "last_position" || s == "last") return PositionScope::LastPosition;
    if (s == "all_positions" || s == "all") return PositionScope::AllPositions;
    throw UsageError("unknown position scope '" + std::string(s) + "'");
}

std::span<const float> TraceBuffer::at(std::size_t layer, std::size_t position) const {
    for (std::size_t p = 0; p < positions.size(); ++p)
        if (positions[p] == position) return hidden.at(layer).at(p);
    throw std::out_of_range("position " + std::to_string(position) + " was not traced");
}

// ---------------------------------------------------------------------------
// Model

std::size_t argmax(std::span<const float> xs) {
    return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

Model::Model(ModelConfig config, WeightSet weights, Tokenizer tokenizer)
    : config_(config), weights_(std::move(weights)), tokenizer_(std::move(tokenizer)) {
    config_.validate();
    weights_.validate(config_);
    if (tokenizer_.size() > config_.vocab_size)
        throw ModelError("tokenizer has " + std::to_string(tokenizer_.size()) + " tokens but vocab_size is " +
                         std::to_string(config_.vocab_size));
    value_norms_.resize(config_.n_layers);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const auto& v = weights_.layers[l].ffn_out;
        auto& norms = value_norms_[l];
        norms.resize(v.rows);
        for (std::size_t j = 0; j < v.rows; ++j) {
            double s = 0.0;
            for (float x : v.row(j)) s += static_cast<double>(x) * x;
            norms[j] = static_cast<float>(std::sqrt(s));
        }
    }
}

std::span<const float> Model::value_norms(std::size_t layer) const {
    if (layer < 1 || layer > config_.n_layers)
        throw std::out_of_range("layer " + std::to_string(layer) + " outside [1, " +
                                std::to_string(config_.n_layers) + "]");
    return value_norms_[layer - 1];
}

std::vector<float> Model::final_norm(std::span<const float> h) const {
    std::vector<float> out(h.size());
    kernels::layer_norm(h, weights_.final_gain, weights_.final_bias, config_.layer_norm_eps, out);
    return out;
}

std::vector<float> Model::project(std::span<const float> h, bool apply_final_norm, kernels::Exec exec) const {
    if (h.size() != config_.d_model)
        throw std::invalid_argument("project: hidden vector has dimension " + std::to_string(h.size()) +
                                    ", expected " + std::to_string(config_.d_model));
    std::vector<float> logits(config_.vocab_size);
    if (apply_final_norm) {
        const auto normed = final_norm(h);
        kernels::project_rows(exec, weights_.token_embedding, normed, logits);
    } else {
        kernels::project_rows(exec, weights_.token_embedding, h, logits);
    }
    return logits;
}

TokenId Model::target_token(std::string_view target) const {
    if (target.empty()) throw DataError("empty target");
    const auto ids = tokenizer_.encode(" " + std::string(target));
    if (ids.empty()) throw DataError("target '" + std::string(target) + "' encodes to no tokens");
    return ids.front();
}

void Model::ffn_block(const Matrix& normed, std::size_t li, const InterventionSpec* intervention,
                      kernels::Exec exec, Matrix& m, Matrix& out) const {
    const auto& lw = weights_.layers[li];
    kernels::affine(exec, normed, lw.ffn_in, lw.ffn_in_bias, m);
    kernels::activate_inplace(config_.activation, m.data);
    if (intervention) {
        const std::size_t first = intervention->scope == PositionScope::LastPosition ? m.rows - 1 : 0;
        for (std::size_t t = first; t < m.rows; ++t) {
            const auto scores = dominance_scores(m.row(t), value_norms_[li]);
            apply_zeroing(m.row(t), scores, intervention->mode, intervention->k);
        }
    }
    kernels::affine(exec, m, lw.ffn_out, lw.ffn_out_bias, out);
}

FfnResult Model::ffn_sublayer(std::span<const float> h, std::size_t layer) const {
    if (layer < 1 || layer > config_.n_layers)
        throw std::out_of_range("layer " + std::to_string(layer) + " outside [1, " +
                                std::to_string(config_.n_layers) + "]");
    if (h.size() != config_.d_model) throw std::invalid_argument("ffn_sublayer: dimension mismatch");
    const auto& lw = weights_.layers[layer - 1];
    Matrix normed(1, config_.d_model);
    kernels::layer_norm(h, lw.ln2_gain, lw.ln2_bias, config_.layer_norm_eps, normed.row(0));
    Matrix m, out;
    ffn_block(normed, layer - 1, nullptr, kernels::Exec::Parallel, m, out);
    return {out.data, m.data};
}

ForwardResult Model::forward_trace(std::span<const TokenId> ids, const ForwardOptions& opts) const {
    const std::size_t T = ids.size();
    if (T == 0) throw DataError("forward pass on an empty sequence");
    if (T > config_.max_positions)
        throw DataError("sequence of " + std::to_string(T) + " tokens exceeds max_positions " +
                        std::to_string(config_.max_positions));
    for (TokenId id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
            throw DataError("token id " + std::to_string(id) + " out of range");
    if (opts.intervention) opts.intervention->validate(config_);

    ForwardResult result;
    auto& trace = result.trace;
    trace.positions = opts.trace_positions.empty() ? std::vector<std::size_t>{T - 1} : opts.trace_positions;
    for (auto p : trace.positions)
        if (p >= T) throw std::out_of_range("trace position " + std::to_string(p) + " beyond sequence");

    const std::size_t d = config_.d_model;
    const std::size_t L = config_.n_layers;
    const auto eps = config_.layer_norm_eps;
    const auto exec = opts.exec;

    Matrix x(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        const auto te = weights_.token_embedding.row(static_cast<std::size_t>(ids[t]));
        const auto pe = weights_.position_embedding.row(t);
        auto row = x.row(t);
        for (std::size_t i = 0; i < d; ++i) row[i] = te[i] + pe[i];
    }

    auto record = [&](std::size_t layer) {
        auto& slot = trace.hidden[layer];
        slot.reserve(trace.positions.size());
        for (auto p : trace.positions) {
            const auto r = x.row(p);
            slot.emplace_back(r.begin(), r.end());
        }
    };
    trace.hidden.resize(L + 1);
    if (opts.record_ffn_coeffs) trace.ffn_coeffs.resize(L);
    record(0);

    Matrix normed(T, d), qkv, attn, proj, m, ffn_out;
    for (std::size_t li = 0; li < L; ++li) {
        const auto& lw = weights_.layers[li];
        for (std::size_t t = 0; t < T; ++t) kernels::layer_norm(x.row(t), lw.ln1_gain, lw.ln1_bias, eps, normed.row(t));
        kernels::affine(exec, normed, lw.attn_qkv, lw.attn_qkv_bias, qkv);
        kernels::causal_attention(exec, qkv, config_.n_heads, attn);
        kernels::affine(exec, attn, lw.attn_out, lw.attn_out_bias, proj);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += proj.data[i];

        for (std::size_t t = 0; t < T; ++t) kernels::layer_norm(x.row(t), lw.ln2_gain, lw.ln2_bias, eps, normed.row(t));
        const InterventionSpec* iv =
            opts.intervention && opts.intervention->covers(li + 1) ? &*opts.intervention : nullptr;
        ffn_block(normed, li, iv, exec, m, ffn_out);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += ffn_out.data[i];

        record(li + 1);
        if (opts.record_ffn_coeffs) {
            for (auto p : trace.positions) {
                const auto r = m.row(p);
                trace.ffn_coeffs[li].emplace_back(r.begin(), r.end());
            }
        }
    }
    result.logits = project(x.row(T - 1), true, exec);
    return result;
}

// ---------------------------------------------------------------------------
// Loading / saving

namespace {

Matrix read_matrix(SafetensorsReader& r, const std::string& prefix, const std::string& name, std::size_t rows,
                   std::size_t cols) {
    const auto full = prefix + name;
    if (!r.contains(full)) throw ModelError("missing tensor '" + name + "'");
    const auto& info = r.info(full);
    if (info.shape.size() != 2 || info.shape[0] != rows || info.shape[1] != cols) {
        std::string got;
        for (auto s : info.shape) got += (got.empty() ? "" : ", ") + std::to_string(s);
        throw ModelError("tensor '" + name + "': shape [" + got + "] does not match config (expected [" +
                         std::to_string(rows) + ", " + std::to_string(cols) + "])");
    }
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = r.read_f32(full);
    return m;
}

std::vector<float> read_vector(SafetensorsReader& r, const std::string& prefix, const std::string& name,
                               std::size_t n) {
    const auto full = prefix + name;
    if (!r.contains(full)) throw ModelError("missing tensor '" + name + "'");
    const auto& info = r.info(full);
    if (info.shape.size() != 1 || info.shape[0] != n)
        throw ModelError("tensor '" + name + "': shape does not match config (expected [" + std::to_string(n) + "])");
    return r.read_f32(full);
}

}  // namespace

Model load_model(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ModelError("model directory not found: " + dir.string());
    const auto cfg = ModelConfig::from_json_file(dir / "config.json");
    const auto weights_path = dir / "model.safetensors";
    if (!fs::exists(weights_path)) throw ModelError("missing weight container " + weights_path.string());

    Tokenizer tok;
    try {
        tok = Tokenizer::load(dir / "vocab.json", dir / "merges.txt");
    } catch (const DataError& e) {
        throw ModelError(std::string("tokenizer tables: ") + e.what());
    }

    WeightSet w;
    try {
        SafetensorsReader r(weights_path);
        const std::string prefix = r.contains("transformer.wte.weight") ? "transformer." : "";
        const auto d = cfg.d_model;
        const auto f = cfg.d_ff;
        w.token_embedding = read_matrix(r, prefix, "wte.weight", cfg.vocab_size, d);
        w.position_embedding = read_matrix(r, prefix, "wpe.weight", cfg.max_positions, d);
        w.layers.resize(cfg.n_layers);
        for (std::size_t i = 0; i < cfg.n_layers; ++i) {
            auto& l = w.layers[i];
            l.ln1_gain = read_vector(r, prefix, layer_name(i, "ln_1.weight"), d);
            l.ln1_bias = read_vector(r, prefix, layer_name(i, "ln_1.bias"), d);
            l.attn_qkv = read_matrix(r, prefix, layer_name(i, "attn.c_attn.weight"), d, 3 * d);
            l.attn_qkv_bias = read_vector(r, prefix, layer_name(i, "attn.c_attn.bias"), 3 * d);
            l.attn_out = read_matrix(r, prefix, layer_name(i, "attn.c_proj.weight"), d, d);
            l.attn_out_bias = read_vector(r, prefix, layer_name(i, "attn.c_proj.bias"), d);
            l.ln2_gain = read_vector(r, prefix, layer_name(i, "ln_2.weight"), d);
            l.ln2_bias = read_vector(r, prefix, layer_name(i, "ln_2.bias"), d);
            l.ffn_in = read_matrix(r, prefix, layer_name(i, "mlp.c_fc.weight"), d, f);
            l.ffn_in_bias = read_vector(r, prefix, layer_name(i, "mlp.c_fc.bias"), f);
            l.ffn_out = read_matrix(r, prefix, layer_name(i, "mlp.c_proj.weight"), f, d);
            l.ffn_out_bias = read_vector(r, prefix, layer_name(i, "mlp.c_proj.bias"), d);
        }
        w.final_gain = read_vector(r, prefix, "ln_f.weight", d);
        w.final_bias = read_vector(r, prefix, "ln_f.bias", d);
    } catch (const DataError& e) {
        throw ModelError(e.what());
    }
    return Model(cfg, std::move(w), std::move(tok));
}

void save_model(const Model& model, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& cfg = model.config();
    const auto& w = model.weights();
    std::vector<NamedTensor> ts;
    auto mat = [&](const std::string& name, const Matrix& m) { ts.push_back({name, {m.rows, m.cols}, m.data}); };
    auto vec = [&](const std::string& name, const std::vector<float>& v) { ts.push_back({name, {v.size()}, v}); };
    mat("wte.weight", w.token_embedding);
    mat("wpe.weight", w.position_embedding);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const auto& l = w.layers[i];
        vec(layer_name(i, "ln_1.weight"), l.ln1_gain);
        vec(layer_name(i, "ln_1.bias"), l.ln1_bias);
        mat(layer_name(i, "attn.c_attn.weight"), l.attn_qkv);
        vec(layer_name(i, "attn.c_attn.bias"), l.attn_qkv_bias);
        mat(layer_name(i, "attn.c_proj.weight"), l.attn_out);
        vec(layer_name(i, "attn.c_proj.bias"), l.attn_out_bias);
        vec(layer_name(i, "ln_2.weight"), l.ln2_gain);
        vec(layer_name(i, "ln_2.bias"), l.ln2_bias);
        mat(layer_name(i, "mlp.c_fc.weight"), l.ffn_in);
        vec(layer_name(i, "mlp.c_fc.bias"), l.ffn_in_bias);
        mat(layer_name(i, "mlp.c_proj.weight"), l.ffn_out);
        vec(layer_name(i, "mlp.c_proj.bias"), l.ffn_out_bias);
    }
    vec("ln_f.weight", w.final_gain);
    vec("ln_f.bias", w.final_bias);
    write_safetensors(dir / "model.safetensors", ts, {{"format", "pt"}});
    cfg.to_json_file(dir / "config.json");

    const auto& tok = model.tokenizer();
    nlohmann::ordered_json vocab;
    for (std::size_t id = 0; id < tok.size(); ++id) vocab[tok.token(static_cast<TokenId>(id))] = id;
    std::ofstream vf(dir / "vocab.json");
    vf << vocab.dump();
    std::ofstream mf(dir / "merges.txt");
    mf << "#version: 0.2\n";
    for (const auto& [a, b] : tok.merges()) mf << a << ' ' << b << '\n';
    if (!vf || !mf) throw DataError("cannot write tokenizer tables to " + dir.string());
}

}  // namespace memrecall
