#include "memrecall/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "memrecall/errors.hpp"

namespace memrecall::kernels {

Activation parse_activation(std::string_view name) {
    if (name == "gelu_new" || name == "gelu_tanh" || name == "gelu_pytorch_tanh") return Activation::GeluTanh;
    if (name == "gelu") return Activation::GeluErf;
    if (name == "relu") return Activation::Relu;
    throw ModelError("unsupported activation: " + std::string(name));
}

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::GeluTanh: return "gelu_new";
        case Activation::GeluErf: return "gelu";
        case Activation::Relu: return "relu";
    }
    return "?";
}

float activate(Activation a, float x) {
    switch (a) {
        case Activation::GeluTanh: {
            constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
            return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
        }
        case Activation::GeluErf:
            return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(1.0 / std::numbers::sqrt2)));
        case Activation::Relu:
            return x > 0.0f ? x : 0.0f;
    }
    return x;
}

void activate_inplace(Activation a, std::span<float> xs) {
    for (auto& x : xs) x = activate(a, x);
}

void layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                float eps, std::span<float> out) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (float v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float v : x) {
        const double c = v - mean;
        var += c * c;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>((x[i] - mean) * inv) * gain[i] + bias[i];
    }
}

void softmax(std::span<const float> logits, std::span<double> probs) {
    const float mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += probs[i];
    }
    const double inv = 1.0 / sum;
    for (auto& p : probs) p *= inv;
}

float dot(std::span<const float> a, std::span<const float> b) {
    const std::size_t n = a.size();
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    }
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

namespace {

void check_affine(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
    if (x.cols != w.rows) throw std::invalid_argument("affine: inner dimension mismatch");
    if (!bias.empty() && bias.size() != w.cols) throw std::invalid_argument("affine: bias size mismatch");
    if (y.rows != x.rows || y.cols != w.cols) y = Matrix(x.rows, w.cols);
}

// Attention for one (head, query position); shared by both variants.
void attend_one(const Matrix& qkv, std::size_t d, std::size_t head_dim, std::size_t h, std::size_t t,
                std::span<float> scores, Matrix& out) {
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    const float* q = qkv.row(t).data() + h * head_dim;
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t u = 0; u <= t; ++u) {
        const float* k = qkv.row(u).data() + d + h * head_dim;
        float s = 0.0f;
        for (std::size_t i = 0; i < head_dim; ++i) s += q[i] * k[i];
        scores[u] = s * scale;
        mx = std::max(mx, scores[u]);
    }
    float sum = 0.0f;
    for (std::size_t u = 0; u <= t; ++u) {
        scores[u] = std::exp(scores[u] - mx);
        sum += scores[u];
    }
    float* o = out.row(t).data() + h * head_dim;
    std::fill(o, o + head_dim, 0.0f);
    for (std::size_t u = 0; u <= t; ++u) {
        const float p = scores[u] / sum;
        const float* v = qkv.row(u).data() + 2 * d + h * head_dim;
        for (std::size_t i = 0; i < head_dim; ++i) o[i] += p * v[i];
    }
}

}  // namespace

namespace serial {

void affine(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
    check_affine(x, w, bias, y);
    for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t o = 0; o < w.cols; ++o) {
            float acc = bias.empty() ? 0.0f : bias[o];
            for (std::size_t i = 0; i < w.rows; ++i) acc += x(t, i) * w(i, o);
            y(t, o) = acc;
        }
    }
}

void project_rows(const Matrix& table, std::span<const float> v, std::span<float> out) {
    for (std::size_t r = 0; r < table.rows; ++r) {
        float acc = 0.0f;
        const auto row = table.row(r);
        for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * v[i];
        out[r] = acc;
    }
}

void causal_attention(const Matrix& qkv, std::size_t n_heads, Matrix& out) {
    const std::size_t d = qkv.cols / 3;
    const std::size_t head_dim = d / n_heads;
    if (out.rows != qkv.rows || out.cols != d) out = Matrix(qkv.rows, d);
    std::vector<float> scores(qkv.rows);
    for (std::size_t h = 0; h < n_heads; ++h)
        for (std::size_t t = 0; t < qkv.rows; ++t) attend_one(qkv, d, head_dim, h, t, scores, out);
}

}  // namespace serial

namespace parallel {

void affine(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
    check_affine(x, w, bias, y);
    constexpr std::size_t kBlock = 256;
    const std::size_t out_dim = w.cols;
    const std::size_t n_blocks = (out_dim + kBlock - 1) / kBlock;
    const auto T = x.rows;
    const auto in_dim = w.rows;
    // Each output element accumulates bias first, then inputs in ascending
    // order, exactly like serial::affine.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(n_blocks); ++blk) {
        const std::size_t o0 = static_cast<std::size_t>(blk) * kBlock;
        const std::size_t o1 = std::min(out_dim, o0 + kBlock);
        for (std::size_t t = 0; t < T; ++t) {
            float* yr = y.data.data() + t * out_dim;
            for (std::size_t o = o0; o < o1; ++o) yr[o] = bias.empty() ? 0.0f : bias[o];
            const float* xr = x.data.data() + t * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                const float xi = xr[i];
                const float* wr = w.data.data() + i * out_dim;
                for (std::size_t o = o0; o < o1; ++o) yr[o] += xi * wr[o];
            }
        }
    }
}

void project_rows(const Matrix& table, std::span<const float> v, std::span<float> out) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(table.rows); ++r) {
        out[static_cast<std::size_t>(r)] = dot(table.row(static_cast<std::size_t>(r)), v);
    }
}

void causal_attention(const Matrix& qkv, std::size_t n_heads, Matrix& out) {
    const std::size_t d = qkv.cols / 3;
    const std::size_t head_dim = d / n_heads;
    const std::size_t T = qkv.rows;
    if (out.rows != T || out.cols != d) out = Matrix(T, d);
    const auto n_tasks = static_cast<std::ptrdiff_t>(n_heads * T);
#pragma omp parallel
    {
        std::vector<float> scores(T);
#pragma omp for schedule(static)
        for (std::ptrdiff_t task = 0; task < n_tasks; ++task) {
            const auto h = static_cast<std::size_t>(task) / T;
            const auto t = static_cast<std::size_t>(task) % T;
            attend_one(qkv, d, head_dim, h, t, scores, out);
        }
    }
}

}  // namespace parallel

}  // namespace memrecall::kernels
