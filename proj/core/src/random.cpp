#include "egomatch/random.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace egomatch {

double Rng::normal() {
    const double u1 = 1.0 - unit();  // (0, 1]
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> shuffle_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed, epoch, 0x5348u);
    rng.shuffle(order);
    return order;
}

}  // namespace egomatch
