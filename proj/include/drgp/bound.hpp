#pragma once

#include "drgp/core.hpp"
#include "drgp/psi.hpp"

#include <Eigen/Cholesky>

namespace drgp {

struct BoundReport {
    double total = 0.0;
    std::vector<double> per_layer;
    double kl_omega = 0.0;
    double kl_H = 0.0;                // first H_h states against the standard normal prior
    double entropy_H = 0.0;           // remaining latent states
    double latent_var_penalty = 0.0;  // -sum(lambda) / (2 sigma^2) over hidden targets
    double kl_A = 0.0;                // non-optimal mode only
    double entropy_and_prior_H_terms = 0.0;

    double sum_of_parts() const;
};

struct FactorError : Error {
    using Error::Error;
};

// Cholesky of a symmetric PD matrix with escalating diagonal jitter.
struct SpdFactor {
    Eigen::LLT<MatrixXd> llt;
    double jitter = 0.0;

    double logdet() const;
    MatrixXd solve(const MatrixXd& B) const { return llt.solve(B); }
    MatrixXd inverse() const;
};
SpdFactor factor_spd(const MatrixXd& A, const std::string& context);

double kl_gauss_diag(const MatrixXd& means, const MatrixXd& vars);
double kl_gauss(const MatrixXd& means, const MatrixXd& cov);  // columns share cov

// Sufficient statistics of one layer: Psi2, Psi1^T Y, tr(Y^T Y), N.
struct LayerSuff {
    MatrixXd psi2;
    MatrixXd psi1t;
    double yy = 0.0;
    Index n = 0;
};
LayerSuff layer_suff(const PsiStats& psi, const MatrixXd& targets);

inline void add_sample_suff(MatrixXd& c, double& yy, const double* psi1, const double* y, Index M, Index D) {
    for (Index d = 0; d < D; ++d) {
        yy += y[d] * y[d];
        for (Index m = 0; m < M; ++m) c(m, d) += psi1[m] * y[d];
    }
}

struct LayerSolve {
    double value = 0.0;
    SpdFactor factor;
    MatrixXd w;  // A^-1 Psi1^T Y
};
LayerSolve solve_layer(const LayerSuff& s, double sigma_noise, const std::string& context = "layer");

double expected_loglik(const PsiStats& psi, const MatrixXd& targets, const WeightPosterior& q, double sigma_noise);
double layer_bound(const PsiStats& psi, const MatrixXd& targets, const WeightPosterior& q, double sigma_noise,
                   double other_kl = 0.0);
double optimal_layer_bound(const PsiStats& psi, const MatrixXd& targets, double sigma_noise,
                           const std::string& context = "layer");
WeightPosterior optimal_weight_posterior(const PsiStats& psi, const MatrixXd& targets, double sigma_noise);

// Recurrent input windows of one layer. src indexes the stacked latent
// vector (layer * T + j); -1 marks a deterministic exogenous entry.
struct LayerInput {
    MatrixXd mu, lam;
    Eigen::MatrixXi src;
    VectorXd target;
    Eigen::VectorXi target_src;
};

struct RevarbProblem {
    ModelConfig config;
    Index N = 0, n_hat = 0, T = 0;
    std::vector<Hyperparams> hyper;
    std::vector<SpectralBasis> basis;
    std::vector<LatentState> latent;
    std::vector<LayerInput> inputs;
};

std::vector<LayerInput> build_layer_inputs(const ModelConfig& cfg, const std::vector<LatentState>& latent,
                                           const Dataset& data);
RevarbProblem build_problem(const Model& model, const Dataset& data);

// Latent entropy/prior/variance terms and the spectral KL (filled into r).
void add_latent_terms(const RevarbProblem& p, BoundReport& r);
void finish_report(BoundReport& r);

BoundReport revarb_objective(const Model& model, const Dataset& data);
BoundReport revarb_objective(const RevarbProblem& p);

}  // namespace drgp
