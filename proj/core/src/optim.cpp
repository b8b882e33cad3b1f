#include "egomatch/optim.hpp"

#include <algorithm>
#include <cmath>

namespace egomatch {

void sgd_step(Tensor& param, const Tensor& grad, OptimState& state) {
    if (param.shape() != grad.shape()) {
        throw ShapeError("sgd_step: parameter " + shape_str(param.shape()) + " vs gradient " +
                         shape_str(grad.shape()));
    }
    if (state.velocity.shape() != param.shape()) state.velocity = Tensor(param.shape());
    double* v = state.velocity.ptr();
    double* p = param.ptr();
    const double* g = grad.ptr();
    for (std::size_t i = 0; i < param.size(); ++i) {
        v[i] = state.momentum * v[i] + state.learning_rate * (g[i] + state.weight_decay * p[i]);
        p[i] -= v[i];
    }
}

Sgd::Sgd(std::vector<Parameter*> params, SgdConfig cfg) : params_(std::move(params)) {
    states_.reserve(params_.size());
    for (Parameter* p : params_) {
        states_.push_back(OptimState{Tensor(p->value.shape()), cfg.learning_rate, cfg.momentum, cfg.weight_decay});
    }
}

void Sgd::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Sgd::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) sgd_step(params_[i]->value, params_[i]->grad, states_[i]);
}

double grad_check(const std::function<Var(Graph&)>& fn, std::span<Parameter* const> params, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    for (Parameter* p : params) p->zero_grad();
    std::vector<Tensor> analytic;
    {
        Graph g;
        Var out = fn(g);
        g.backward(out);
        for (Parameter* p : params) analytic.push_back(p->grad);
    }
    auto eval = [&] {
        Graph g;
        return fn(g).value().item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = params[k]->value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + eps;
            const double plus = eval();
            value[i] = saved - eps;
            const double minus = eval();
            value[i] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace egomatch
