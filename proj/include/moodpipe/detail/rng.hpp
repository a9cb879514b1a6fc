#pragma once

// Portable random draws. The standard distributions are implementation
// defined, so everything that ends up in an artifact goes through these.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace moodpipe::detail {

using engine = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(engine &gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) without modulo bias.
inline std::uint64_t uniform_below(engine &gen, std::uint64_t bound) {
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    for (;;) {
        const std::uint64_t x = gen();
        if (x >= limit) {
            return x % bound;
        }
    }
}

/// Box-Muller normal sampler; caches the second variate.
class normal_sampler {
  public:
    normal_sampler(double mean, double stddev) : mean_{mean}, stddev_{stddev} {}

    double operator()(engine &gen) {
        if (has_spare_) {
            has_spare_ = false;
            return mean_ + stddev_ * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01(gen);
        } while (u1 == 0.0);
        const double u2 = uniform01(gen);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return mean_ + stddev_ * radius * std::cos(angle);
    }

  private:
    double mean_;
    double stddev_;
    double spare_{0.0};
    bool has_spare_{false};
};

template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, engine &gen) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const std::uint64_t j = uniform_below(gen, i);
        std::swap(first[i - 1], first[j]);
    }
}

}  // namespace moodpipe::detail
