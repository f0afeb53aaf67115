#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace memrecall {

/// Dense row-major float matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

    std::span<float> row(std::size_t r) {
        assert(r < rows);
        return {data.data() + r * cols, cols};
    }
    std::span<const float> row(std::size_t r) const {
        assert(r < rows);
        return {data.data() + r * cols, cols};
    }
    float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool empty() const { return data.empty(); }
};

}  // namespace memrecall
