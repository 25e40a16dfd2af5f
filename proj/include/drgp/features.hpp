#pragma once

#include "drgp/core.hpp"

namespace drgp {

enum class UInit { Zero, SubsetOfInputs };

double sm_kernel(const VectorXd& x, const VectorXd& x2, const Hyperparams& h);

// Row m holds 2*pi*(z_m / (2*pi*l) + 1/p), i.e. the frequency used inside the cosine.
MatrixXd frequencies(const MatrixXd& z, const Hyperparams& h);

double feature_amplitude(double sigma_power, Index M);

// cos and sin of a phase; every feature and statistic goes through here so they agree bitwise
void cos_sin(double th, double& c, double& s);

VectorXd feature_map(const VectorXd& x, const SpectralBasis& s, const Hyperparams& h);
MatrixXd feature_matrix(const MatrixXd& X, const SpectralBasis& s, const Hyperparams& h);

SpectralBasis init_basis(Index M, Index Q, std::uint64_t seed, UInit init_u = UInit::SubsetOfInputs,
                         const MatrixXd& inputs = MatrixXd());

// cos argument z_m^T (x - u_m) + b_m, shared by the feature map and the Psi statistics
inline double feature_phase(const MatrixXd& zhat, const MatrixXd& u, const VectorXd& b, Index m, const double* x) {
    double t = 0.0;
    for (Index q = 0; q < zhat.cols(); ++q) t += zhat(m, q) * (x[q] - u(m, q));
    return t + b(m);
}

}  // namespace drgp
