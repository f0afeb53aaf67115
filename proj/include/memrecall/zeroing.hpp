#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "memrecall/model.hpp"

namespace memrecall {

/// s_j = |m_j| * ||v_j||
std::vector<float> dominance_scores(std::span<const float> coeffs, std::span<const float> value_norms);

/// Indices of the min(k, n) highest scores; ties go to the lower index.
/// Returned in descending score order.
std::vector<std::size_t> top_k_indices(std::span<const float> scores, std::size_t k);

/// Dominant: zero the top-k entries of coeffs. NonDominant: zero everything else.
void apply_zeroing(std::span<float> coeffs, std::span<const float> scores, ZeroMode mode, std::size_t k);

}  // namespace memrecall
