#include "egomatch/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>

#include "egomatch/losses.hpp"
#include "egomatch/optim.hpp"

namespace egomatch {

double GradCheckReport::max_error() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_error);
    return worst;
}

namespace {

constexpr double kKinkMargin = 1e-4;

using Rng = std::mt19937_64;

int rand_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// f = sum(w * out) with random constant weights, so every output coordinate
// contributes a generic amount to each input gradient.
Var project(Graph& g, Var out, const Tensor& w) { return sum(mul(out, g.constant(w))); }

bool near_zero(const Tensor& t) {
    return std::any_of(t.data().begin(), t.data().end(), [](double v) { return std::abs(v) < kKinkMargin; });
}

using Case = std::function<std::optional<double>(Rng&, double eps)>;

std::optional<double> check_params(std::vector<Parameter>& params, const std::function<Var(Graph&)>& fn, double eps) {
    std::vector<Parameter*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    return grad_check(fn, ptrs, eps);
}

std::optional<double> conv_case(Rng& rng, double eps) {
    const int cin = rand_int(rng, 1, 3), cout = rand_int(rng, 1, 3);
    const int h = rand_int(rng, 3, 6), w = rand_int(rng, 3, 6);
    const int pad = rand_int(rng, 0, 1), stride = rand_int(rng, 1, 2);
    const int kh = rand_int(rng, 1, 3), kw = rand_int(rng, 1, 3);
    std::vector<Parameter> p{
        {"x", rand_tensor(rng, {std::size_t(cin), std::size_t(h), std::size_t(w)})},
        {"k", rand_tensor(rng, {std::size_t(cout), std::size_t(cin), std::size_t(kh), std::size_t(kw)})},
        {"b", rand_tensor(rng, {std::size_t(cout)})}};
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    Tensor wts = rand_tensor(rng, {std::size_t(cout), oh, ow});
    return check_params(p, [&](Graph& g) {
        return project(g, conv2d(g.parameter(p[0]), g.parameter(p[1]), g.parameter(p[2]), stride, pad), wts);
    }, eps);
}

std::optional<double> relu_case(Rng& rng, double eps) {
    std::vector<Parameter> p{{"x", rand_tensor(rng, {std::size_t(rand_int(rng, 1, 6)), std::size_t(rand_int(rng, 1, 6))})}};
    if (near_zero(p[0].value)) return std::nullopt;
    Tensor wts = rand_tensor(rng, p[0].value.shape());
    return check_params(p, [&](Graph& g) { return project(g, relu(g.parameter(p[0])), wts); }, eps);
}

std::optional<double> maxpool_case(Rng& rng, double eps) {
    const std::size_t c = rand_int(rng, 1, 3), h = rand_int(rng, 2, 6), w = rand_int(rng, 2, 6);
    const int window = rand_int(rng, 1, static_cast<int>(std::min(h, w)));
    const int stride = rand_int(rng, 1, 2);
    std::vector<Parameter> p{{"x", rand_tensor(rng, {c, h, w})}};
    const Tensor& x = p[0].value;
    const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::vector<double> win;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) win.push_back(x[(ch * h + oy * stride + i) * w + ox * stride + j]);
                std::sort(win.rbegin(), win.rend());
                if (win.size() > 1 && win[0] - win[1] < kKinkMargin) return std::nullopt;
            }
        }
    }
    Tensor wts = rand_tensor(rng, {c, oh, ow});
    return check_params(p, [&](Graph& g) { return project(g, maxpool2d(g.parameter(p[0]), window, stride), wts); }, eps);
}

std::optional<double> linear_case(Rng& rng, double eps) {
    const std::size_t n = rand_int(rng, 1, 6), m = rand_int(rng, 1, 6);
    std::vector<Parameter> p{{"x", rand_tensor(rng, {n})}, {"W", rand_tensor(rng, {m, n})}, {"b", rand_tensor(rng, {m})}};
    Tensor wts = rand_tensor(rng, {m});
    return check_params(p, [&](Graph& g) {
        return project(g, linear(g.parameter(p[0]), g.parameter(p[1]), g.parameter(p[2])), wts);
    }, eps);
}

std::optional<double> concat_case(Rng& rng, double eps) {
    const std::size_t n = rand_int(rng, 1, 6), m = rand_int(rng, 1, 6);
    std::vector<Parameter> p{{"a", rand_tensor(rng, {n})}, {"b", rand_tensor(rng, {m})}};
    Tensor wts = rand_tensor(rng, {n + m});
    return check_params(p, [&](Graph& g) { return project(g, concat(g.parameter(p[0]), g.parameter(p[1])), wts); }, eps);
}

std::optional<double> l2_case(Rng& rng, double eps) {
    const std::size_t n = rand_int(rng, 1, 6);
    std::vector<Parameter> p{{"a", rand_tensor(rng, {n})}, {"b", rand_tensor(rng, {n})}};
    const double c = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    return check_params(p, [&](Graph& g) { return scale(l2_sq(g.parameter(p[0]), g.parameter(p[1])), c); }, eps);
}

template <class Op>
Case binary_case(Op op) {
    return [op](Rng& rng, double eps) -> std::optional<double> {
        const Shape s{std::size_t(rand_int(rng, 1, 6)), std::size_t(rand_int(rng, 1, 6))};
        std::vector<Parameter> p{{"a", rand_tensor(rng, s)}, {"b", rand_tensor(rng, s)}};
        Tensor wts = rand_tensor(rng, s);
        return check_params(p, [&](Graph& g) { return project(g, op(g.parameter(p[0]), g.parameter(p[1])), wts); }, eps);
    };
}

std::optional<double> elementwise_case(Rng& rng, double eps, const std::function<Var(Var)>& op, double lo, double hi) {
    const Shape s{std::size_t(rand_int(rng, 1, 6)), std::size_t(rand_int(rng, 1, 6))};
    std::vector<Parameter> p{{"x", rand_tensor(rng, s, lo, hi)}};
    Shape out_shape;
    {
        Graph g;
        out_shape = op(g.constant(p[0].value)).shape();
    }
    Tensor wts = rand_tensor(rng, out_shape);
    return check_params(p, [&](Graph& g) { return project(g, op(g.parameter(p[0])), wts); }, eps);
}

std::optional<double> contrastive_case(Rng& rng, double eps) {
    const int batch = rand_int(rng, 1, 4);
    const std::size_t d = rand_int(rng, 1, 6);
    const double margin = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    std::vector<Parameter> p;
    std::vector<int> labels;
    for (int i = 0; i < batch; ++i) {
        p.emplace_back("e", rand_tensor(rng, {d}));
        p.emplace_back("x", rand_tensor(rng, {d}));
        labels.push_back(rand_int(rng, 0, 1));
    }
    for (int i = 0; i < batch; ++i) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) d2 += std::pow(p[2 * i].value[k] - p[2 * i + 1].value[k], 2);
        const double dist = std::sqrt(d2);
        if (dist < kKinkMargin || (labels[i] == 0 && std::abs(margin - dist) < kKinkMargin)) return std::nullopt;
    }
    return check_params(p, [&](Graph& g) {
        std::vector<PairVars> vars;
        for (int i = 0; i < batch; ++i) vars.push_back({g.parameter(p[2 * i]), g.parameter(p[2 * i + 1]), labels[i]});
        return contrastive_loss(vars, margin);
    }, eps);
}

std::optional<double> triplet_case(Rng& rng, double eps) {
    const int batch = rand_int(rng, 1, 4);
    const std::size_t d = rand_int(rng, 1, 6);
    const double margin = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
    std::vector<Parameter> p;
    for (int i = 0; i < 3 * batch; ++i) p.emplace_back("t", rand_tensor(rng, {d}));
    auto sq = [&](const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return s;
    };
    for (int i = 0; i < batch; ++i) {
        const double gap = sq(p[3 * i].value, p[3 * i + 2].value) - sq(p[3 * i].value, p[3 * i + 1].value);
        if (std::abs(margin * margin - gap) < kKinkMargin) return std::nullopt;
    }
    return check_params(p, [&](Graph& g) {
        std::vector<TripletVars> vars;
        for (int i = 0; i < batch; ++i) {
            vars.push_back({g.parameter(p[3 * i]), g.parameter(p[3 * i + 1]), g.parameter(p[3 * i + 2])});
        }
        return triplet_loss(vars, margin);
    }, eps);
}

// conv -> relu -> linear -> l2_sq against a fixed target.
std::optional<double> composite_case(Rng& rng, double eps) {
    const std::size_t cin = rand_int(rng, 1, 2), cout = rand_int(rng, 1, 3);
    const std::size_t h = rand_int(rng, 3, 6), w = rand_int(rng, 3, 6);
    const std::size_t m = rand_int(rng, 1, 6);
    const std::size_t hidden = cout * (h - 1) * (w - 1);
    // Layer parameters at their initialization scale, +-1/sqrt(fan_in).
    const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cin * 4));
    const double fc_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::vector<Parameter> p{{"x", rand_tensor(rng, {cin, h, w})},
                             {"k", rand_tensor(rng, {cout, cin, 2, 2}, -conv_bound, conv_bound)},
                             {"kb", rand_tensor(rng, {cout}, -conv_bound, conv_bound)},
                             {"W", rand_tensor(rng, {m, hidden}, -fc_bound, fc_bound)},
                             {"b", rand_tensor(rng, {m}, -fc_bound, fc_bound)}};
    Tensor target = rand_tensor(rng, {m});
    {
        Graph g;
        Var pre = conv2d(g.parameter(p[0]), g.parameter(p[1]), g.parameter(p[2]), 1, 0);
        if (near_zero(pre.value())) return std::nullopt;
    }
    return check_params(p, [&](Graph& g) {
        Var a = relu(conv2d(g.parameter(p[0]), g.parameter(p[1]), g.parameter(p[2]), 1, 0));
        Var y = linear(flatten(a), g.parameter(p[3]), g.parameter(p[4]));
        return l2_sq(y, g.constant(target));
    }, eps);
}

}  // namespace

GradCheckReport run_gradcheck_suite(int instances, std::uint64_t seed, double eps) {
    const std::vector<std::pair<std::string, Case>> cases = {
        {"conv2d", conv_case},
        {"relu", relu_case},
        {"maxpool2d", maxpool_case},
        {"linear", linear_case},
        {"concat", concat_case},
        {"l2_sq", l2_case},
        {"add", binary_case([](Var a, Var b) { return add(a, b); })},
        {"sub", binary_case([](Var a, Var b) { return sub(a, b); })},
        {"mul", binary_case([](Var a, Var b) { return mul(a, b); })},
        {"scale", [](Rng& r, double e) { return elementwise_case(r, e, [](Var x) { return scale(x, -1.7); }, -2, 2); }},
        {"add_scalar",
         [](Rng& r, double e) { return elementwise_case(r, e, [](Var x) { return add_scalar(x, 0.3); }, -2, 2); }},
        {"square", [](Rng& r, double e) { return elementwise_case(r, e, [](Var x) { return square(x); }, -2, 2); }},
        {"sqrt", [](Rng& r, double e) { return elementwise_case(r, e, [](Var x) { return sqrt(x); }, 0.1, 2); }},
        {"flatten", [](Rng& r, double e) { return elementwise_case(r, e, [](Var x) { return flatten(x); }, -2, 2); }},
        {"sum", [](Rng& r, double e) {
             return elementwise_case(r, e, [](Var x) { return sum(x); }, -2, 2);
         }},
        {"contrastive_loss", contrastive_case},
        {"triplet_loss", triplet_case},
        {"conv-relu-linear-l2", composite_case},
    };

    GradCheckReport report;
    Rng rng(seed);
    for (const auto& [name, fn] : cases) {
        GradCheckEntry entry{name, 0, 0.0};
        int attempts = 0;
        while (entry.instances < instances) {
            if (++attempts > 100 * instances) throw std::runtime_error("gradcheck: too many rejected instances for " + name);
            if (auto err = fn(rng, eps)) {
                entry.max_error = std::max(entry.max_error, *err);
                ++entry.instances;
            }
        }
        report.entries.push_back(entry);
    }
    return report;
}

}  // namespace egomatch
