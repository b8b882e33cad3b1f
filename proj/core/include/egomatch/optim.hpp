#ifndef EGOMATCH_OPTIM_HPP
#define EGOMATCH_OPTIM_HPP

#include <functional>
#include <span>
#include <vector>

#include "egomatch/autograd.hpp"

namespace egomatch {

struct SgdConfig {
    double learning_rate = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

/// Momentum buffer of one parameter plus the hyperparameters applied to it.
struct OptimState {
    Tensor velocity;
    double learning_rate = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

/// v <- momentum*v + lr*(grad + weight_decay*param); param <- param - v.
void sgd_step(Tensor& param, const Tensor& grad, OptimState& state);

/// Applies sgd_step to a fixed, ordered list of parameters.
class Sgd {
public:
    Sgd(std::vector<Parameter*> params, SgdConfig cfg);

    void zero_grad();
    void step();

    const std::vector<OptimState>& states() const { return states_; }

private:
    std::vector<Parameter*> params_;
    std::vector<OptimState> states_;
};

/// Central-difference gradient check of a scalar function of `params`.
///
/// Returns the maximum over all coordinates of
/// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
/// `fn` must build its result from graph.parameter(*p) for the listed params.
double grad_check(const std::function<Var(Graph&)>& fn, std::span<Parameter* const> params, double eps = 1e-6);

}  // namespace egomatch

#endif  // EGOMATCH_OPTIM_HPP
