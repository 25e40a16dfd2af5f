#pragma once

#include "drgp/engine.hpp"
#include "drgp/features.hpp"
#include "drgp/predictor.hpp"

#include <functional>

namespace drgp {

enum class LengthscaleRule { SqrtRange, Range };

struct TrainConfig {
    int I1 = 15;  // iterations with phase1_frozen held fixed
    int I2 = 75;  // total iterations
    int restarts = 5;
    std::uint64_t seed = 1;
    GroupSet frozen = {ParamGroup::Phase, ParamGroup::SpectralVar};
    GroupSet phase1_frozen = {ParamGroup::SigmaPower, ParamGroup::SigmaNoise};
    LengthscaleRule lengthscale_rule = LengthscaleRule::SqrtRange;
    UInit u_init = UInit::SubsetOfInputs;
    double beta_init = 1e-3;
    double lambda_init = 0.5;
    double sigma_noise_init = 0.1;
    double sigma_power_init = 1.0;
    double grad_tol = 1e-6;
    int workers = 1;
    bool select_by_validation = false;

    void validate() const;
};

std::string to_string(LengthscaleRule r);
LengthscaleRule parse_lengthscale_rule(const std::string& s);

struct HistoryRecord {
    int iteration = 0;
    int phase = 0;
    double loss = 0.0;  // negative bound, the minimized quantity
    double grad_norm = 0.0;
    double seconds = 0.0;
};

// f and g of a minimization problem; return false for an invalid point.
using Objective = std::function<bool(const VectorXd& x, double* f, VectorXd* g)>;

struct MinimizeResult {
    VectorXd x;
    double f = 0.0;
    int iterations = 0;
    std::string termination;
    std::vector<HistoryRecord> history;
};

MinimizeResult minimize_lbfgs(const Objective& fn, const VectorXd& x0, int max_iterations, double grad_tol = 1e-6,
                              int phase = 0, int first_iteration = 0, double t0 = 0.0);

double lengthscale_from_range(double range, LengthscaleRule rule);

Model initialize(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& data, std::uint64_t seed);

struct TrainResult {
    Model model;
    std::vector<HistoryRecord> history;
    BoundReport report;
    double seconds = 0.0;
    std::uint64_t seed = 0;
};

// Throws with the offending layer or term when the bound is not finite.
void check_finite(const BoundReport& r);

TrainResult train(const Model& init, const Dataset& data, const TrainConfig& tc);

struct RestartResult {
    std::vector<TrainResult> runs;
    std::vector<double> validation_rmse;  // empty unless a validation set was given
    int best = 0;

    const TrainResult& best_run() const { return runs[best]; }
};

RestartResult train_restarts(const ModelConfig& cfg, const Dataset& data, const TrainConfig& tc,
                             const Dataset* validation = nullptr);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace drgp
