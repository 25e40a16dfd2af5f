#include "drgp/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace drgp {

double sm_kernel(const VectorXd& x, const VectorXd& x2, const Hyperparams& h) {
    if (x.size() != x2.size() || x.size() != h.dim()) throw Error("sm_kernel: dimension mismatch");
    double e = 0.0, arg = 0.0;
    for (Index q = 0; q < x.size(); ++q) {
        double d = x(q) - x2(q);
        double l = h.lengthscales(q);
        e += d * d / (l * l);
        arg += d * h.period_offset(q);
    }
    return h.sigma_power * h.sigma_power * std::exp(-0.5 * e) * std::cos(arg);
}

MatrixXd frequencies(const MatrixXd& z, const Hyperparams& h) {
    if (z.cols() != h.dim()) throw Error("frequencies: dimension mismatch");
    MatrixXd zh(z.rows(), z.cols());
    for (Index q = 0; q < z.cols(); ++q) zh.col(q) = (z.col(q).array() / h.lengthscales(q)) + h.period_offset(q);
    return zh;
}

void cos_sin(double th, double& c, double& s) {
    c = std::cos(th);
    s = std::sin(th);
}

double feature_amplitude(double sigma_power, Index M) {
    return M > 0 ? std::sqrt(2.0 * sigma_power * sigma_power / double(M)) : 0.0;
}

VectorXd feature_map(const VectorXd& x, const SpectralBasis& s, const Hyperparams& h) {
    if (x.size() != s.dim() || s.dim() != h.dim()) throw Error("feature_map: dimension mismatch");
    const Index M = s.size();
    MatrixXd zh = frequencies(s.z, h);
    double amp = feature_amplitude(h.sigma_power, M);
    VectorXd phi(M);
    for (Index m = 0; m < M; ++m) {
        double c, sn;
        cos_sin(feature_phase(zh, s.u, s.b, m, x.data()), c, sn);
        phi(m) = amp * c;
    }
    return phi;
}

MatrixXd feature_matrix(const MatrixXd& X, const SpectralBasis& s, const Hyperparams& h) {
    if (X.cols() != s.dim() || s.dim() != h.dim()) throw Error("feature_matrix: dimension mismatch");
    const Index M = s.size();
    MatrixXd zh = frequencies(s.z, h);
    double amp = feature_amplitude(h.sigma_power, M);
    MatrixXd Phi(X.rows(), M);
    VectorXd x(X.cols());
    for (Index n = 0; n < X.rows(); ++n) {
        x = X.row(n).transpose();
        for (Index m = 0; m < M; ++m) {
            double c, sn;
            cos_sin(feature_phase(zh, s.u, s.b, m, x.data()), c, sn);
            Phi(n, m) = amp * c;
        }
    }
    return Phi;
}

SpectralBasis init_basis(Index M, Index Q, std::uint64_t seed, UInit init_u, const MatrixXd& inputs) {
    if (M < 0 || Q < 1) throw Error("init_basis: invalid sizes");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, kTwoPi);
    SpectralBasis s;
    s.z.resize(M, Q);
    for (Index q = 0; q < Q; ++q)
        for (Index m = 0; m < M; ++m) s.z(m, q) = normal(rng);
    s.b.resize(M);
    for (Index m = 0; m < M; ++m) {
        double v = unif(rng);
        s.b(m) = v < kTwoPi ? v : 0.0;
    }
    s.u = MatrixXd::Zero(M, Q);
    if (init_u == UInit::SubsetOfInputs) {
        if (inputs.cols() != Q) throw Error("init_basis: input dimension mismatch");
        if (inputs.rows() < M)
            throw Error("init_basis: subset initialization needs at least " + std::to_string(M) + " input rows, got " +
                        std::to_string(inputs.rows()));
        std::vector<Index> idx(inputs.rows());
        std::iota(idx.begin(), idx.end(), Index(0));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (Index m = 0; m < M; ++m) s.u.row(m) = inputs.row(idx[m]);
    }
    return s;
}

}  // namespace drgp
