#pragma once

// Seeded Gaussian sampling.
//
// Streams are std::mt19937_64 engines. Uniforms take the top 53 bits of a draw;
// normals use the Box-Muller transform, so sequences are identical on every
// platform and standard library. Sub-seeds come from split_seed, a SplitMix64
// finalizer over (seed, index): sample i of a data set always draws from its
// own stream, so growing n leaves the first rows untouched.

#include <cstdint>
#include <random>

namespace ncssl {

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) noexcept;

class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on (0, 1), never exactly 0.
    double uniform() noexcept;
    double normal() noexcept;

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace ncssl
