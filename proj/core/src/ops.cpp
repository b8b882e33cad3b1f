#include "egomatch/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace egomatch {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Graph& same_graph(std::initializer_list<Var> vars) {
    Graph* g = &vars.begin()->graph();
    for (const Var& v : vars) {
        if (&v.graph() != g) throw std::invalid_argument("op inputs belong to different graphs");
    }
    return *g;
}

void require_rank(const Var& v, std::size_t rank, const char* op, const char* arg) {
    if (v.value().rank() != rank) {
        throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(v.shape()));
    }
}

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kh, kw;
    std::size_t out_h, out_w;
    int stride, pad;

    std::size_t patch() const { return channels * kh * kw; }
    std::size_t positions() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j, oy*out_w + ox] = x[c, oy*stride - pad + i, ox*stride - pad + j]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* row = cols + ((c * g.kh + i) * g.kw + j) * p;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long y = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
                    double* dst = row + oy * g.out_w;
                    if (y < 0 || y >= static_cast<long>(g.height)) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long xx = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
                        dst[ox] = (xx < 0 || xx >= static_cast<long>(g.width)) ? 0.0 : src[xx];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* row = cols + ((c * g.kh + i) * g.kw + j) * p;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long y = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
                    if (y < 0 || y >= static_cast<long>(g.height)) continue;
                    double* dst = x + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    const double* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long xx = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
                        if (xx >= 0 && xx < static_cast<long>(g.width)) dst[xx] += src[ox];
                    }
                }
            }
        }
    }
}

// Elementwise unary op with derivative expressed through input and output values.
template <class F, class D>
Var unary(Var x, F f, D df) {
    Graph& g = x.graph();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t xi = x.id();
    return g.record(std::move(out), {xi}, [xi, df](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(xi)) return;
        const Tensor& in = gr.value(xi);
        const Tensor& y = gr.value(self);
        const Tensor& gy = gr.grad(self);
        Tensor& gx = gr.grad(xi);
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] += gy[i] * df(in[i], y[i]);
    });
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Var conv2d(Var x, Var kernel, Var bias, int stride, int pad) {
    Graph& g = same_graph({x, kernel, bias});
    require_rank(x, 3, "conv2d", "input");
    require_rank(kernel, 4, "conv2d", "kernel");
    require_rank(bias, 1, "conv2d", "bias");
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: stride must be >= 1 and pad >= 0");
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (ks[1] != xs[0]) {
        throw ShapeError("conv2d: kernel " + shape_str(ks) + " expects " + std::to_string(ks[1]) +
                         " input channels but input is " + shape_str(xs));
    }
    if (bias.shape()[0] != ks[0]) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(ks));
    }
    const std::size_t padded_h = xs[1] + 2 * static_cast<std::size_t>(pad);
    const std::size_t padded_w = xs[2] + 2 * static_cast<std::size_t>(pad);
    if (ks[2] > padded_h || ks[3] > padded_w) {
        throw ShapeError("conv2d: kernel " + shape_str(ks) + " larger than padded input " + shape_str(xs));
    }
    ConvGeometry geo{xs[0], xs[1], xs[2], ks[2], ks[3],
                     (padded_h - ks[2]) / stride + 1, (padded_w - ks[3]) / stride + 1, stride, pad};
    const std::size_t out_c = ks[0];

    AlignedBuffer cols(geo.patch() * geo.positions());
    im2col(x.value().ptr(), geo, cols.data());
    Tensor out(Shape{out_c, geo.out_h, geo.out_w});
    {
        ConstMatMap k(kernel.value().ptr(), out_c, geo.patch());
        ConstMatMap c(cols.data(), geo.patch(), geo.positions());
        MatMap o(out.ptr(), out_c, geo.positions());
        o.noalias() = k * c;
        ConstVecMap b(bias.value().ptr(), out_c);
        o.colwise() += b;
    }

    const std::size_t xi = x.id(), ki = kernel.id(), bi = bias.id();
    return g.record(std::move(out), {xi, ki, bi}, [xi, ki, bi, geo, out_c](Graph& gr, std::size_t self) {
        ConstMatMap gy(gr.grad(self).ptr(), out_c, geo.positions());
        if (gr.requires_grad(bi)) {
            VecMap gb(gr.grad(bi).ptr(), out_c);
            gb += gy.rowwise().sum();
        }
        const bool need_k = gr.requires_grad(ki);
        const bool need_x = gr.requires_grad(xi);
        if (!need_k && !need_x) return;
        AlignedBuffer cols(geo.patch() * geo.positions());
        if (need_k) {
            im2col(gr.value(xi).ptr(), geo, cols.data());
            ConstMatMap c(cols.data(), geo.patch(), geo.positions());
            MatMap gk(gr.grad(ki).ptr(), out_c, geo.patch());
            gk.noalias() += gy * c.transpose();
        }
        if (need_x) {
            ConstMatMap k(gr.value(ki).ptr(), out_c, geo.patch());
            MatMap gc(cols.data(), geo.patch(), geo.positions());
            gc.noalias() = k.transpose() * gy;
            col2im_add(cols.data(), geo, gr.grad(xi).ptr());
        }
    });
}

Var relu(Var x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var maxpool2d(Var x, int window, int stride) {
    Graph& g = x.graph();
    if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: window and stride must be >= 1");
    require_rank(x, 3, "maxpool2d", "input");
    const Shape& xs = x.shape();
    const auto w = static_cast<std::size_t>(window);
    const auto s = static_cast<std::size_t>(stride);
    if (w > xs[1] || w > xs[2]) {
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " + shape_str(xs));
    }
    const std::size_t oh = (xs[1] - w) / s + 1, ow = (xs[2] - w) / s + 1;
    Tensor out(Shape{xs[0], oh, ow});
    std::vector<std::size_t> argmax(out.size());
    const Tensor& xv = x.value();
    for (std::size_t c = 0; c < xs[0]; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (c * xs[1] + oy * s) * xs[2] + ox * s;
                for (std::size_t i = 0; i < w; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        const std::size_t idx = (c * xs[1] + oy * s + i) * xs[2] + ox * s + j;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                }
                const std::size_t o = (c * oh + oy) * ow + ox;
                out[o] = xv[best];
                argmax[o] = best;
            }
        }
    }
    const std::size_t xi = x.id();
    return g.record(std::move(out), {xi}, [xi, argmax = std::move(argmax)](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        Tensor& gx = gr.grad(xi);
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += gy[o];
    });
}

Var linear(Var x, Var weight, Var bias) {
    Graph& g = same_graph({x, weight, bias});
    require_rank(x, 1, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    require_rank(bias, 1, "linear", "bias");
    const std::size_t m = weight.shape()[0], n = weight.shape()[1];
    if (x.shape()[0] != n || bias.shape()[0] != m) {
        throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " and bias " + shape_str(bias.shape()));
    }
    Tensor out(Shape{m});
    {
        ConstMatMap w(weight.value().ptr(), m, n);
        VecMap o(out.ptr(), m);
        o.noalias() = w * ConstVecMap(x.value().ptr(), n);
        o += ConstVecMap(bias.value().ptr(), m);
    }
    const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
    return g.record(std::move(out), {xi, wi, bi}, [xi, wi, bi, m, n](Graph& gr, std::size_t self) {
        ConstVecMap gy(gr.grad(self).ptr(), m);
        if (gr.requires_grad(bi)) VecMap(gr.grad(bi).ptr(), m) += gy;
        if (gr.requires_grad(wi)) {
            MatMap gw(gr.grad(wi).ptr(), m, n);
            gw.noalias() += gy * ConstVecMap(gr.value(xi).ptr(), n).transpose();
        }
        if (gr.requires_grad(xi)) {
            ConstMatMap w(gr.value(wi).ptr(), m, n);
            VecMap(gr.grad(xi).ptr(), n).noalias() += w.transpose() * gy;
        }
    });
}

Var concat(Var a, Var b) {
    Graph& g = same_graph({a, b});
    require_rank(a, 1, "concat", "a");
    require_rank(b, 1, "concat", "b");
    const std::size_t na = a.value().size(), nb = b.value().size();
    Tensor out(Shape{na + nb});
    std::copy_n(a.value().ptr(), na, out.ptr());
    std::copy_n(b.value().ptr(), nb, out.ptr() + na);
    const std::size_t ai = a.id(), bi = b.id();
    return g.record(std::move(out), {ai, bi}, [ai, bi, na, nb](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad(ai);
            for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i];
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad(bi);
            for (std::size_t i = 0; i < nb; ++i) gb[i] += gy[na + i];
        }
    });
}

Var l2_sq(Var a, Var b) {
    Graph& g = same_graph({a, b});
    require_same_shape(a, b, "l2_sq");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    const std::size_t ai = a.id(), bi = b.id();
    return g.record(Tensor::scalar(acc), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
        const double gy = gr.grad(self)[0];
        const Tensor& av = gr.value(ai);
        const Tensor& bv = gr.value(bi);
        const bool need_a = gr.requires_grad(ai), need_b = gr.requires_grad(bi);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = 2.0 * gy * (av[i] - bv[i]);
            if (need_a) gr.grad(ai)[i] += d;
            if (need_b) gr.grad(bi)[i] -= d;
        }
    });
}

Var sum(Var x) {
    Graph& g = x.graph();
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    const std::size_t xi = x.id();
    return g.record(Tensor::scalar(acc), {xi}, [xi](Graph& gr, std::size_t self) {
        const double gy = gr.grad(self)[0];
        for (double& v : gr.grad(xi).data()) v += gy;
    });
}

Var flatten(Var x) {
    Graph& g = x.graph();
    Tensor out = x.value().reshaped(Shape{x.value().size()});
    const std::size_t xi = x.id();
    return g.record(std::move(out), {xi}, [xi](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        Tensor& gx = gr.grad(xi);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
}

namespace {

template <class F>
Var binary(Var a, Var b, const char* name, F f, double da_sign_a, double db_sign) {
    Graph& g = same_graph({a, b});
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i], b.value()[i]);
    const std::size_t ai = a.id(), bi = b.id();
    return g.record(std::move(out), {ai, bi}, [ai, bi, da_sign_a, db_sign](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad(ai);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += da_sign_a * gy[i];
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad(bi);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += db_sign * gy[i];
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Var sub(Var a, Var b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Var mul(Var a, Var b) {
    Graph& g = same_graph({a, b});
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    const std::size_t ai = a.id(), bi = b.id();
    return g.record(std::move(out), {ai, bi}, [ai, bi](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& av = gr.value(ai);
        const Tensor& bv = gr.value(bi);
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad(ai);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad(bi);
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        }
    });
}

Var scale(Var x, double c) {
    return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
    return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var square(Var x) {
    return unary(x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

Var sqrt(Var x) {
    for (double v : x.value().data()) {
        if (v < 0.0) throw std::domain_error("sqrt of negative value");
    }
    return unary(
        x, [](double v) { return std::sqrt(v); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var add_n(const std::vector<Var>& terms) {
    if (terms.empty()) throw std::invalid_argument("add_n of empty list");
    Graph& g = terms.front().graph();
    double acc = 0.0;
    std::vector<std::size_t> ids;
    ids.reserve(terms.size());
    for (const Var& t : terms) {
        if (&t.graph() != &g) throw std::invalid_argument("add_n terms belong to different graphs");
        acc += t.value().item();
        ids.push_back(t.id());
    }
    return g.record(Tensor::scalar(acc), ids, [](Graph& gr, std::size_t self) {
        const double gy = gr.grad(self)[0];
        for (std::size_t in : gr.inputs(self)) {
            if (gr.requires_grad(in)) gr.grad(in)[0] += gy;
        }
    });
}

}  // namespace egomatch
