#ifndef EGOMATCH_GRADCHECK_SUITE_HPP
#define EGOMATCH_GRADCHECK_SUITE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace egomatch {

struct GradCheckEntry {
    std::string op;
    int instances = 0;
    double max_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_error() const;
};

/// Finite-difference check of every differentiable op and both losses on
/// random small instances (dims <= 6, values in [-2, 2]). Instances are
/// resampled when an input lies within 1e-4 of a kink (relu zero, pooling
/// tie, hinge boundary), where central differences are not meaningful.
GradCheckReport run_gradcheck_suite(int instances = 100, std::uint64_t seed = 1, double eps = 1e-6);

}  // namespace egomatch

#endif  // EGOMATCH_GRADCHECK_SUITE_HPP
