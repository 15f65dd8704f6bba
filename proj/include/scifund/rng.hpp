#pragma once

// Seeding and splitting rules shared by every stochastic operation.
//
// Generator: std::mt19937_64 seeded with mix64(seed). Uniform doubles take
// the top 53 bits of one engine output, so streams are identical across
// standard libraries (std::uniform_real_distribution is not).
//
// Splitting: the i-th child of `root` is split_seed(root, i). Monte-Carlo
// draws and grid points derive their seeds this way, which keeps results
// independent of evaluation order.

#include <cstdint>
#include <random>

namespace scifund {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t split_seed(std::uint64_t root, std::uint64_t index) noexcept {
    return mix64(root ^ mix64(index * 0xD1B54A32D192ED03ULL + 1));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open0() { return 1.0 - uniform01(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace scifund
