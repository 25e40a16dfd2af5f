#pragma once

#include "drgp/bound.hpp"

namespace drgp {

// Sums over one contiguous run of samples for one layer.
struct BlockStats {
    Index begin = 0, end = 0;
    MatrixXd psi2;
    MatrixXd psi1t;
    double tt = 0.0;
};

struct PartialStats {
    int worker = 0;
    Index begin = 0, end = 0;
    std::vector<std::vector<BlockStats>> layers;  // per layer, split on the global block grid
};

// Contiguous ranges aligned to the block grid, one per worker (some may be empty).
std::vector<std::pair<Index, Index>> split_ranges(Index n, int workers);

PartialStats map_partial(const RevarbProblem& p, Index begin, Index end, int worker = 0);
BoundReport reduce_bound(const RevarbProblem& p, const std::vector<PartialStats>& partials);
BoundReport distributed_objective(const RevarbProblem& p, int workers);

// Optimal bound of one layer and, optionally, its gradient with respect to the
// layer's natural parameters, input moments and targets.
struct LayerEval {
    double value = 0.0;
    LayerSuff suff;
    BasisGrad basis;
    double sigma_noise = 0.0;  // d value / d sigma_noise
    MatrixXd gmu, glam;
    VectorXd dtarget;
};
LayerEval eval_layer(const PsiKernel& k, const LayerInput& in, double sigma_noise, bool with_grad, int workers,
                     const std::string& context = "layer");

struct Evaluation {
    BoundReport report;
    Model grad;  // d total / d unconstrained parameters, same shape as the model
};

Evaluation evaluate(const Model& model, const Dataset& data, bool with_grad = true, int workers = 1);
VectorXd revarb_gradient(const Model& model, const Dataset& data, const ParamLayout& layout, int workers = 1);

// Chain rule from natural-space gradients to the unconstrained storage.
void natural_to_raw(const Model& model, Model& grad);

}  // namespace drgp
