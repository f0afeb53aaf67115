// Serial reference vs OpenMP kernels at GPT-2-medium layer sizes.

#include <benchmark/benchmark.h>

#include <random>
#include <unordered_map>

#include "memrecall/kernels.hpp"
#include "memrecall/model.hpp"

using namespace memrecall;
using kernels::Exec;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
    std::mt19937 g(seed);
    std::normal_distribution<float> n(0.f, 0.02f);
    Matrix m(r, c);
    for (auto& v : m.data) v = n(g);
    return m;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_affine(benchmark::State& st) {
    const std::size_t T = 16, d = 1024, dff = 4096;
    const auto x = random_matrix(T, d, 1), w = random_matrix(d, dff, 2);
    const std::vector<float> bias(dff, 0.1f);
    Matrix y(T, dff);
    for (auto _ : st) {
        kernels::affine(exec_of(st), x, w, bias, y);
        benchmark::DoNotOptimize(y.data.data());
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * T * d * dff));
}

void BM_project_rows(benchmark::State& st) {
    const auto table = random_matrix(50257, 1024, 3);
    const auto v = random_matrix(1, 1024, 4);
    std::vector<float> out(50257);
    for (auto _ : st) {
        kernels::project_rows(exec_of(st), table, v.data, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_attention(benchmark::State& st) {
    const auto qkv = random_matrix(64, 3 * 1024, 5);
    Matrix out(64, 1024);
    for (auto _ : st) {
        kernels::causal_attention(exec_of(st), qkv, 16, out);
        benchmark::DoNotOptimize(out.data.data());
    }
}

// Whole forward pass of a random 6-layer, d=512 model over a 12-token prompt.
void BM_forward(benchmark::State& st) {
    ModelConfig cfg;
    cfg.n_layers = 6;
    cfg.d_model = 512;
    cfg.d_ff = 2048;
    cfg.n_heads = 8;
    cfg.vocab_size = 256;
    cfg.max_positions = 64;
    WeightSet w;
    unsigned seed = 10;
    w.token_embedding = random_matrix(cfg.vocab_size, cfg.d_model, seed++);
    w.position_embedding = random_matrix(cfg.max_positions, cfg.d_model, seed++);
    const std::vector<float> ones(cfg.d_model, 1.f), zeros(cfg.d_model, 0.f);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.ln1_gain = lw.ln2_gain = ones;
        lw.ln1_bias = lw.ln2_bias = zeros;
        lw.attn_qkv = random_matrix(cfg.d_model, 3 * cfg.d_model, seed++);
        lw.attn_qkv_bias.assign(3 * cfg.d_model, 0.f);
        lw.attn_out = random_matrix(cfg.d_model, cfg.d_model, seed++);
        lw.attn_out_bias = zeros;
        lw.ffn_in = random_matrix(cfg.d_model, cfg.d_ff, seed++);
        lw.ffn_in_bias.assign(cfg.d_ff, 0.f);
        lw.ffn_out = random_matrix(cfg.d_ff, cfg.d_model, seed++);
        lw.ffn_out_bias = zeros;
        w.layers.push_back(std::move(lw));
    }
    w.final_gain = ones;
    w.final_bias = zeros;
    std::unordered_map<std::string, TokenId> vocab;
    for (int b = 0; b < 256; ++b) vocab.emplace(Tokenizer::byte_symbol(static_cast<std::uint8_t>(b)), b);
    const Model model(cfg, std::move(w), Tokenizer(vocab, {}));
    std::vector<TokenId> ids{10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
    ForwardOptions opts;
    opts.exec = exec_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(model.forward_trace(ids, opts).logits.data());
}

}  // namespace

BENCHMARK(BM_affine)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_project_rows)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_attention)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
