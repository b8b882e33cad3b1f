#ifndef EGOMATCH_LOSSES_HPP
#define EGOMATCH_LOSSES_HPP

#include <span>

#include "egomatch/ops.hpp"

namespace egomatch {

struct MarginConfig {
    double margin = 1.0;
};

/// One ego/exo embedding pair inside a graph; label 1 marks a true correspondence.
struct PairVars {
    Var ego;
    Var exo;
    int label = 0;
};

/// (ego, correct exo, incorrect exo) embeddings inside a graph.
struct TripletVars {
    Var ego;
    Var positive;
    Var negative;
};

/// sum_i y*|e-p|^2 + (1-y)*max(m - |e-p|, 0)^2. The hinge acts on the
/// unsquared distance.
Var contrastive_loss(std::span<const PairVars> batch, double margin);

/// sum_i |e-p1|^2 + max(0, m^2 - (|e-p0|^2 - |e-p1|^2)).
Var triplet_loss(std::span<const TripletVars> batch, double margin);

struct PairExemplar {
    Tensor x_e;
    Tensor x_p;
    int y = 0;
};

struct TripletExemplar {
    Tensor x_e;
    Tensor x_1;
    Tensor x_0;
};

double contrastive_loss(std::span<const PairExemplar> batch, double margin);
double triplet_loss(std::span<const TripletExemplar> batch, double margin);

}  // namespace egomatch

#endif  // EGOMATCH_LOSSES_HPP
