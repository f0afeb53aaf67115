#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace memrecall {

// std::mt19937_64 with distribution code written out here, so seeded
// results do not depend on the standard library's distribution classes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);
    // Uniform in [0, 1).
    double uniform();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }

    // Index drawn proportionally to non-negative weights (not all zero).
    std::size_t weighted(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

// Derives an independent stream seed, e.g. one per fold or retry.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace memrecall
