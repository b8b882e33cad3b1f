#ifndef EGOMATCH_RANDOM_HPP
#define EGOMATCH_RANDOM_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace egomatch {

/// Seeded generator whose outputs are fixed across standard libraries: raw
/// mt19937_64 bits are mapped to numbers here rather than by <random> distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    /// Independent stream keyed by (seed, a, b).
    Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) : engine_(make_seq(seed, a, b)) {}

    std::uint64_t bits() { return engine_(); }
    /// Uniform in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * unit(); }
    /// Uniform integer in [lo, hi].
    int range(int lo, int hi) { return lo + static_cast<int>(unit() * (hi - lo + 1)); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)); }
    /// Standard normal by Box-Muller.
    double normal();

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    static std::mt19937_64 make_seq(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(a),
                          std::uint32_t(a >> 32), std::uint32_t(b), std::uint32_t(b >> 32)};
        return std::mt19937_64(seq);
    }
    std::mt19937_64 engine_;
};

/// Permutation of 0..n-1 that depends only on (seed, epoch).
std::vector<std::size_t> shuffle_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

}  // namespace egomatch

#endif  // EGOMATCH_RANDOM_HPP
