#pragma once

#include "drgp/bound.hpp"

namespace drgp {

// Trained state of one layer with the weight posterior cached.
struct LayerPredictor {
    Hyperparams hyper;
    SpectralBasis basis;
    Variant variant = Variant::SS;
    VectorXd m;  // A^-1 Psi1^T t
    MatrixXd S;  // sigma^2 A^-1
    bool trained = false;
};

LayerPredictor make_layer_predictor(const Hyperparams& h, const SpectralBasis& s, Variant v, const PsiStats& psi,
                                    const VectorXd& targets);

// Model variance only; the caller adds sigma_noise^2.
std::pair<double, double> predict_layer(const LayerPredictor& p, const VectorXd& mu, const VectorXd& lam);

struct Posterior {
    ModelConfig config;
    Index Q = 0;
    std::vector<LayerPredictor> layers;  // L + 1
    MatrixXd x_tail;                     // last H_x training inputs
    std::vector<VectorXd> mu_tail, lam_tail;  // last H_h latent moments per hidden layer
};

Posterior make_posterior(const Model& model, const Dataset& train);

enum class Warmup { Continuation, Cold };
std::string to_string(Warmup w);
Warmup parse_warmup(const std::string& s);

struct SimTrace {
    MatrixXd mean;  // steps x (L + 1), last column is the output
    MatrixXd var;   // model variance + sigma_noise^2
    VectorXd y_mean() const { return mean.col(mean.cols() - 1); }
    VectorXd y_var() const { return var.col(var.cols() - 1); }
    Index size() const { return mean.rows(); }
};

// Continuation predicts every row of X; Cold uses the first H_x rows as
// history only and starts the latent windows at mean 0, variance 1.
SimTrace free_simulate(const Posterior& post, const MatrixXd& X, Warmup warmup = Warmup::Continuation);

double rmse(const VectorXd& pred, const VectorXd& truth);

}  // namespace drgp
