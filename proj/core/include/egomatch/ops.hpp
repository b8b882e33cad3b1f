#ifndef EGOMATCH_OPS_HPP
#define EGOMATCH_OPS_HPP

#include "egomatch/autograd.hpp"

namespace egomatch {

// Differentiable operators. All inputs of an op must live in the same graph.
// Forward results are pure functions of the input values.

/// Cross-correlation of x[C_in,H,W] with kernel[C_out,C_in,kH,kW] plus bias[C_out].
Var conv2d(Var x, Var kernel, Var bias, int stride = 1, int pad = 0);

/// max(0, x); the subgradient at 0 is 0.
Var relu(Var x);

/// Per-window maximum over x[C,H,W]. Ties route the gradient to the first
/// row-major position in the window.
Var maxpool2d(Var x, int window, int stride);

/// W[M,N] * x[N] + b[M].
Var linear(Var x, Var weight, Var bias);

/// Concatenation of two 1-D tensors.
Var concat(Var a, Var b);

/// Sum of squared differences of two equal-shape tensors (scalar).
Var l2_sq(Var a, Var b);

Var sum(Var x);
Var flatten(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var square(Var x);
/// Elementwise sqrt of nonnegative input; the gradient at 0 is taken as 0.
Var sqrt(Var x);
/// Sum of scalar nodes.
Var add_n(const std::vector<Var>& terms);

}  // namespace egomatch

#endif  // EGOMATCH_OPS_HPP
