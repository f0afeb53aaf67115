#include "memrecall/zeroing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace memrecall {

std::vector<float> dominance_scores(std::span<const float> coeffs, std::span<const float> value_norms) {
    if (coeffs.size() != value_norms.size()) throw std::invalid_argument("dominance_scores: size mismatch");
    std::vector<float> s(coeffs.size());
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::fabs(coeffs[j]) * value_norms[j];
    return s;
}

std::vector<std::size_t> top_k_indices(std::span<const float> scores, std::size_t k) {
    k = std::min(k, scores.size());
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    return idx;
}

void apply_zeroing(std::span<float> coeffs, std::span<const float> scores, ZeroMode mode, std::size_t k) {
    if (coeffs.size() != scores.size()) throw std::invalid_argument("apply_zeroing: size mismatch");
    const auto top = top_k_indices(scores, k);
    if (mode == ZeroMode::Dominant) {
        for (auto j : top) coeffs[j] = 0.0f;
        return;
    }
    std::vector<float> kept(top.size());
    for (std::size_t i = 0; i < top.size(); ++i) kept[i] = coeffs[top[i]];
    std::fill(coeffs.begin(), coeffs.end(), 0.0f);
    for (std::size_t i = 0; i < top.size(); ++i) coeffs[top[i]] = kept[i];
}

}  // namespace memrecall
