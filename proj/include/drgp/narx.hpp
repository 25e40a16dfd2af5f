#pragma once

#include "drgp/predictor.hpp"
#include "drgp/trainer.hpp"

#include <Eigen/Cholesky>

namespace drgp {

// Row r targets y_t with t = r + max(Hy, Hx) and holds
// [y_{t-1} .. y_{t-Hy}, x_{t-1} .. x_{t-Hx}] (x lags are Q wide each).
struct NarxDesign {
    MatrixXd X;
    VectorXd y;
    int Hy = 0, Hx = 0;
    Index Q = 0;
    Index offset() const { return std::max(Hy, Hx); }
};

NarxDesign build_narx(const Dataset& d, int Hy, int Hx);

// Sparse spectrum GP on NARX regressors, trained on the exact SSGP log ML.
struct GpSsNarx {
    int Hy = 0, Hx = 0;
    LayerPredictor layer;
    double log_ml = 0.0;
    std::vector<HistoryRecord> history;

    std::pair<double, double> predict(const VectorXd& u) const;  // variance includes noise
};

// Exact GP with an SE-ARD kernel.
struct GpFullNarx {
    int Hy = 0, Hx = 0;
    Hyperparams hyper;
    MatrixXd X;
    VectorXd alpha;
    Eigen::LLT<MatrixXd> llt;
    double log_ml = 0.0;
    std::vector<HistoryRecord> history;

    std::pair<double, double> predict(const VectorXd& u) const;
};

struct NarxFitConfig {
    int iterations = 100;
    LengthscaleRule lengthscale_rule = LengthscaleRule::SqrtRange;
    double sigma_noise_init = 0.1;
    double sigma_power_init = 1.0;
    bool train_noise = true;
    int workers = 1;
};

GpSsNarx fit_gp_ss_narx(const NarxDesign& d, int M, std::uint64_t seed, const NarxFitConfig& fc = {});
GpFullNarx fit_gp_full_narx(const NarxDesign& d, const NarxFitConfig& fc = {});

// Exact SSGP log ML for fixed basis and hyperparameters.
double gp_ss_log_ml(const NarxDesign& d, const SpectralBasis& s, const Hyperparams& h);

// log N(y; 0, K + sigma_noise^2 I); grad (if given) is w.r.t. (sigma_power, sigma_noise, lengthscales).
double gp_full_log_ml(const MatrixXd& X, const VectorXd& y, const Hyperparams& h, VectorXd* grad = nullptr);
MatrixXd se_ard_kernel(const MatrixXd& A, const MatrixXd& B, const Hyperparams& h);

// Free simulation feeding predicted means back into the output lags. The
// lag windows are seeded from the tail of the training data.
struct NarxTrace {
    VectorXd mean, var;
};
NarxTrace narx_simulate(const std::function<std::pair<double, double>(const VectorXd&)>& predict, int Hy, int Hx,
                        const Dataset& history, const MatrixXd& X);

}  // namespace drgp
