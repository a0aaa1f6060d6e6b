#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace irsce {

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64 finalizer; used to turn (master seed, index path) into
// well-separated substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. Every stochastic component of the simulator
// owns one, addressed by an explicit (master seed, index path) pair, so that
// serial and parallel schedules consume identical randomness. Floating-point
// draws are produced with pinned bit-level recipes rather than the
// implementation-defined std distributions.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    // Substream addressed by a path of indices, e.g. {kChannelTag, user, n}.
    static RandomStream substream(std::uint64_t master,
                                  std::initializer_list<std::uint64_t> path) {
        return RandomStream(substream_seed(master, path));
    }

    static std::uint64_t substream_seed(std::uint64_t master,
                                        std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix64(master);
        for (std::uint64_t p : path) s = mix64(s ^ mix64(p));
        return s;
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n), n >= 1. Masked rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const int width = 64 - std::countl_zero(n - 1);
        const std::uint64_t mask = (width == 64) ? ~0ULL : ((1ULL << width) - 1ULL);
        std::uint64_t x;
        do {
            x = bits() & mask;
        } while (x >= n);
        return x;
    }

    // Standard normal N(0, 1) via Box-Muller; consumes two engine words.
    double gaussian() {
        const double u1 = (static_cast<double>(bits() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Circular complex Gaussian CN(0, 1): unit total variance, independent
    // N(0, 1/2) real and imaginary parts.
    std::complex<double> cgaussian() {
        const double u1 = (static_cast<double>(bits() >> 11) + 1.0) * 0x1.0p-53;
        const double radius = std::sqrt(-std::log(u1));
        const double phase = 2.0 * kPi * uniform();
        return {radius * std::cos(phase), radius * std::sin(phase)};
    }

    // In-place Fisher-Yates shuffle with the pinned bounded sampler above.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace irsce
