#pragma once

#include "drgp/core.hpp"

namespace drgp {

struct PsiStats {
    MatrixXd psi1;                           // Nhat x M
    MatrixXd psi2;                           // M x M
    std::vector<MatrixXd> psi2_per_sample;   // optional
};

// Gradient accumulator with respect to the natural parameters of one layer.
struct PsiGrad {
    MatrixXd zhat;   // d/d frequency (M x Q)
    MatrixXd omega;  // d/d (beta / l^2), VSS only
    MatrixXd u;
    VectorXd b;
    double sigma_power = 0.0;

    void resize(Index M, Index Q, bool vss);
    PsiGrad& operator+=(const PsiGrad& o);
};

struct BasisGrad {
    double sigma_power = 0.0;
    VectorXd lengthscales;
    MatrixXd z, beta, u;
    VectorXd b;
};

// Per-sample closed-form statistics for one layer. Inputs are Gaussian
// with diagonal variances; zero variance gives the deterministic feature map.
class PsiKernel {
public:
    PsiKernel(const SpectralBasis& basis, const Hyperparams& hyper, Variant variant);

    Index M() const { return M_; }
    Index Q() const { return Q_; }
    Variant variant() const { return variant_; }

    // psi1 receives M entries; psi2 (if non-null) is incremented by Psi2^n
    void sample(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const;

    // Backpropagate dL/dpsi1 (M entries, may be null) and dL/dPsi2^n (symmetric M x M)
    void backward(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                  double* gmu, double* glam) const;

    BasisGrad finalize(const PsiGrad& g) const;

private:
    void sample_ss(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const;
    void sample_vss(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const;
    void backward_ss(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                     double* gmu, double* glam) const;
    void backward_vss(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                      double* gmu, double* glam) const;

    Variant variant_;
    Index M_, Q_;
    SpectralBasis basis_;
    Hyperparams hyper_;
    MatrixXd zhat_;
    MatrixXd omega_;
    double amp_;    // sqrt(2 sigma^2 / M)
    double c2_;     // sigma^2 / M
};

MatrixXd psi1_ss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h);
PsiStats psi2_ss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                 bool keep_per_sample = false);
MatrixXd psi1_vss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h);
PsiStats psi2_vss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                  bool keep_per_sample = false);

// Psi1 and Psi2 together; Psi2 is reduced in fixed blocks.
PsiStats psi_stats(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                   Variant variant, bool keep_per_sample = false, int workers = 1);

std::pair<RowVectorXd, MatrixXd> psi_star(const VectorXd& mu, const VectorXd& lam, const SpectralBasis& s,
                                          const Hyperparams& h, Variant variant);

}  // namespace drgp
