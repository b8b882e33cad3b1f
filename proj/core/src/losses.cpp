#include "egomatch/losses.hpp"

namespace egomatch {

namespace {

void check_margin(double margin) {
    if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
}

}  // namespace

Var contrastive_loss(std::span<const PairVars> batch, double margin) {
    if (batch.empty()) throw std::invalid_argument("contrastive_loss: empty batch");
    check_margin(margin);
    std::vector<Var> terms;
    terms.reserve(batch.size());
    for (const PairVars& ex : batch) {
        if (ex.label != 0 && ex.label != 1) throw std::invalid_argument("contrastive_loss: label must be 0 or 1");
        Var d2 = l2_sq(ex.ego, ex.exo);
        if (ex.label == 1) {
            terms.push_back(d2);
        } else {
            Var gap = add_scalar(scale(sqrt(d2), -1.0), margin);
            terms.push_back(square(relu(gap)));
        }
    }
    return add_n(terms);
}

Var triplet_loss(std::span<const TripletVars> batch, double margin) {
    if (batch.empty()) throw std::invalid_argument("triplet_loss: empty batch");
    check_margin(margin);
    std::vector<Var> terms;
    terms.reserve(2 * batch.size());
    for (const TripletVars& ex : batch) {
        Var pos = l2_sq(ex.ego, ex.positive);
        Var neg = l2_sq(ex.ego, ex.negative);
        Var violation = add_scalar(scale(sub(neg, pos), -1.0), margin * margin);
        terms.push_back(pos);
        terms.push_back(relu(violation));
    }
    return add_n(terms);
}

double contrastive_loss(std::span<const PairExemplar> batch, double margin) {
    Graph g;
    std::vector<PairVars> vars;
    for (const PairExemplar& ex : batch) vars.push_back({g.constant(ex.x_e), g.constant(ex.x_p), ex.y});
    return contrastive_loss(vars, margin).value().item();
}

double triplet_loss(std::span<const TripletExemplar> batch, double margin) {
    Graph g;
    std::vector<TripletVars> vars;
    for (const TripletExemplar& ex : batch) {
        vars.push_back({g.constant(ex.x_e), g.constant(ex.x_1), g.constant(ex.x_0)});
    }
    return triplet_loss(vars, margin).value().item();
}

}  // namespace egomatch
