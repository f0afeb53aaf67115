#pragma once

// Numeric kernels used by the forward pass and the lens.
//
// Every kernel exists twice: `serial::` is a straightforward reference kept for
// testing and benchmarking, `parallel::` distributes whole output elements over
// OpenMP threads. No kernel splits a single reduction across threads, so
// parallel results are bit-identical for any thread count.

#include <cstddef>
#include <span>
#include <string_view>

#include "memrecall/tensor.hpp"

namespace memrecall::kernels {

enum class Activation { GeluTanh, GeluErf, Relu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

float activate(Activation a, float x);
void activate_inplace(Activation a, std::span<float> xs);

// out = (x - mean) / sqrt(var + eps) * gain + bias
void layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                float eps, std::span<float> out);

// Numerically stable softmax, accumulated and returned in double.
void softmax(std::span<const float> logits, std::span<double> probs);

// Dot product with eight interleaved partial sums (fixed order).
float dot(std::span<const float> a, std::span<const float> b);

enum class Exec { Serial, Parallel };

namespace serial {
// y = x * w + bias, x: [T, in], w: [in, out], y: [T, out]. Empty bias means zero.
void affine(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y);
// out[r] = table.row(r) . v
void project_rows(const Matrix& table, std::span<const float> v, std::span<float> out);
// qkv: [T, 3d] laid out as (q | k | v); out: [T, d].
void causal_attention(const Matrix& qkv, std::size_t n_heads, Matrix& out);
}  // namespace serial

namespace parallel {
void affine(const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y);
void project_rows(const Matrix& table, std::span<const float> v, std::span<float> out);
void causal_attention(const Matrix& qkv, std::size_t n_heads, Matrix& out);
}  // namespace parallel

inline void affine(Exec e, const Matrix& x, const Matrix& w, std::span<const float> bias, Matrix& y) {
    e == Exec::Serial ? serial::affine(x, w, bias, y) : parallel::affine(x, w, bias, y);
}
inline void project_rows(Exec e, const Matrix& table, std::span<const float> v, std::span<float> out) {
    e == Exec::Serial ? serial::project_rows(table, v, out) : parallel::project_rows(table, v, out);
}
inline void causal_attention(Exec e, const Matrix& qkv, std::size_t n_heads, Matrix& out) {
    e == Exec::Serial ? serial::causal_attention(qkv, n_heads, out)
                      : parallel::causal_attention(qkv, n_heads, out);
}

}  // namespace memrecall::kernels
