#include "drgp/psi.hpp"

#include "drgp/features.hpp"
#include "drgp/parallel.hpp"

#include <cmath>
#include <complex>

namespace drgp {

using cplx = std::complex<double>;
using Eigen::ArrayXXd;

namespace {

const cplx I(0.0, 1.0);

// exp(L) with the real part floored before exponentiation
inline cplx cexp_floor(const cplx& L) {
    double e = std::exp(std::max(L.real(), kExpFloor));
    return {e * std::cos(L.imag()), e * std::sin(L.imag())};
}

inline double rexp_floor(const cplx& L) { return std::exp(std::max(L.real(), kExpFloor)) * std::cos(L.imag()); }

// One input dimension of E[exp(i zhat (h - u))] for zhat ~ N(a, O), h ~ N(mu, l), w = mu - u.
inline cplx single_term(double a, double O, double w, double l) {
    double r = 1.0 + l * O;
    cplx k(a, O * w);
    return cplx(-0.5 * std::log(r) - 0.5 * O * w * w, a * w) - 0.5 * l * k * k / r;
}

struct SinglePartials {
    cplx dl, dO, da, dw;
};

inline SinglePartials single_partials(double a, double O, double w, double l) {
    double r = 1.0 + l * O;
    cplx k(a, O * w);
    cplx k2 = k * k;
    cplx kk = -l * k / r;
    SinglePartials p;
    p.dl = -0.5 * O / r - 0.5 * k2 / (r * r);
    p.dO = -0.5 * l / r + 0.5 * l * l * k2 / (r * r) - 0.5 * w * w + kk * cplx(0.0, w);
    p.da = cplx(0.0, w) + kk;
    p.dw = -O * w + cplx(0.0, a) + kk * cplx(0.0, O);
    return p;
}

// Same for the product/quotient of two independent frequencies sharing h:
// exponent of E[exp(i (zhat1 (h - u1) + s zhat2 (h - u2)))].
struct PairShared {
    double r, lr, g;
};

inline PairShared pair_shared(double O1, double w1, double O2, double w2, double l) {
    PairShared p;
    p.r = 1.0 + l * (O1 + O2);
    p.lr = -0.5 * std::log(p.r) - 0.5 * (O1 * w1 * w1 + O2 * w2 * w2);
    p.g = O1 * w1 + O2 * w2;
    return p;
}

inline cplx pair_term(const PairShared& p, double a1, double w1, double a2, double w2, double s, double l) {
    cplx k(a1 + s * a2, p.g);
    return cplx(p.lr, a1 * w1 + s * a2 * w2) - 0.5 * l * k * k / p.r;
}

struct PairPartials {
    cplx dl, dO1, dO2, da1, da2, dw1, dw2;
};

inline PairPartials pair_partials(double a1, double O1, double w1, double a2, double O2, double w2, double s,
                                  double l) {
    double r = 1.0 + l * (O1 + O2);
    cplx k(a1 + s * a2, O1 * w1 + O2 * w2);
    cplx k2 = k * k;
    cplx kk = -l * k / r;
    double common = -0.5 * l / r;
    cplx quad = 0.5 * l * l * k2 / (r * r);
    PairPartials p;
    p.dl = -0.5 * (O1 + O2) / r - 0.5 * k2 / (r * r);
    p.dO1 = common + quad - 0.5 * w1 * w1 + kk * cplx(0.0, w1);
    p.dO2 = common + quad - 0.5 * w2 * w2 + kk * cplx(0.0, w2);
    p.da1 = cplx(0.0, w1) + kk;
    p.da2 = s * (cplx(0.0, w2) + kk);
    p.dw1 = -O1 * w1 + cplx(0.0, a1) + kk * cplx(0.0, O1);
    p.dw2 = -O2 * w2 + cplx(0.0, s * a2) + kk * cplx(0.0, O2);
    return p;
}

}  // namespace

void PsiGrad::resize(Index M, Index Q, bool vss) {
    zhat = MatrixXd::Zero(M, Q);
    omega = vss ? MatrixXd::Zero(M, Q) : MatrixXd();
    u = MatrixXd::Zero(M, Q);
    b = VectorXd::Zero(M);
    sigma_power = 0.0;
}

PsiGrad& PsiGrad::operator+=(const PsiGrad& o) {
    zhat += o.zhat;
    if (omega.size()) omega += o.omega;
    u += o.u;
    b += o.b;
    sigma_power += o.sigma_power;
    return *this;
}

PsiKernel::PsiKernel(const SpectralBasis& basis, const Hyperparams& hyper, Variant variant)
    : variant_(variant), M_(basis.size()), Q_(basis.dim()), basis_(basis), hyper_(hyper) {
    if (hyper.dim() != Q_ || basis.u.rows() != M_ || basis.u.cols() != Q_ || basis.b.size() != M_)
        throw Error("psi: basis/hyperparameter dimension mismatch");
    zhat_ = frequencies(basis.z, hyper);
    if (variant_ == Variant::VSS) {
        if (basis.beta.rows() != M_ || basis.beta.cols() != Q_) throw Error("psi: VSS requires spectral variances");
        if ((basis.beta.array() < 0).any()) throw Error("psi: spectral variances must be nonnegative");
        omega_.resize(M_, Q_);
        for (Index q = 0; q < Q_; ++q) {
            double l = hyper.lengthscales(q);
            omega_.col(q) = basis.beta.col(q) / (l * l);
        }
    }
    amp_ = feature_amplitude(hyper.sigma_power, M_);
    c2_ = M_ > 0 ? hyper.sigma_power * hyper.sigma_power / double(M_) : 0.0;
}

void PsiKernel::sample(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const {
    if (variant_ == Variant::SS)
        sample_ss(mu, lam, psi1, psi2);
    else
        sample_vss(mu, lam, psi1, psi2);
}

void PsiKernel::backward(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                         double* gmu, double* glam) const {
    if (variant_ == Variant::SS)
        backward_ss(mu, lam, g1, G, acc, gmu, glam);
    else
        backward_vss(mu, lam, g1, G, acc, gmu, glam);
}

void PsiKernel::sample_ss(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const {
    const Index M = M_, Q = Q_;
    VectorXd a(M), cs(M), sn(M);
    for (Index m = 0; m < M; ++m) {
        double th = feature_phase(zhat_, basis_.u, basis_.b, m, mu);
        double am = 0.0;
        for (Index q = 0; q < Q; ++q) am += lam[q] * zhat_(m, q) * zhat_(m, q);
        a(m) = am;
        cos_sin(th, cs(m), sn(m));
        if (psi1) psi1[m] = amp_ * std::exp(std::max(-0.5 * am, kExpFloor)) * cs(m);
    }
    if (!psi2 || M == 0) return;
    Eigen::Map<const VectorXd> l(lam, Q);
    MatrixXd K = (zhat_ * l.asDiagonal()) * zhat_.transpose();
    VectorXd h = -0.5 * a;
    ArrayXXd base = (h * RowVectorXd::Ones(M) + VectorXd::Ones(M) * h.transpose()).array();
    ArrayXXd Em = (base + K.array()).max(kExpFloor).exp();
    ArrayXXd Ep = (base - K.array()).max(kExpFloor).exp();
    ArrayXXd CC = (cs * cs.transpose()).array();
    ArrayXXd SS = (sn * sn.transpose()).array();
    *psi2 += (c2_ * (Em * (CC + SS) + Ep * (CC - SS))).matrix();
}

void PsiKernel::backward_ss(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                            double* gmu, double* glam) const {
    const Index M = M_, Q = Q_;
    if (M == 0) return;
    const double sp = hyper_.sigma_power;
    VectorXd a(M), cs(M), sn(M);
    for (Index m = 0; m < M; ++m) {
        double th = feature_phase(zhat_, basis_.u, basis_.b, m, mu);
        double am = 0.0;
        for (Index q = 0; q < Q; ++q) am += lam[q] * zhat_(m, q) * zhat_(m, q);
        a(m) = am;
        cos_sin(th, cs(m), sn(m));
    }
    VectorXd gth = VectorXd::Zero(M), ga = VectorXd::Zero(M);
    if (g1) {
        for (Index m = 0; m < M; ++m) {
            double P1 = amp_ * std::exp(std::max(-0.5 * a(m), kExpFloor));
            double v = P1 * cs(m);
            gth(m) -= g1[m] * P1 * sn(m);
            ga(m) -= 0.5 * g1[m] * v;
            acc.sigma_power += g1[m] * v / sp;
        }
    }
    Eigen::Map<const VectorXd> l(lam, Q);
    if (G.size()) {
        MatrixXd K = (zhat_ * l.asDiagonal()) * zhat_.transpose();
        VectorXd h = -0.5 * a;
        ArrayXXd base = (h * RowVectorXd::Ones(M) + VectorXd::Ones(M) * h.transpose()).array();
        ArrayXXd Em = (base + K.array()).max(kExpFloor).exp();
        ArrayXXd Ep = (base - K.array()).max(kExpFloor).exp();
        ArrayXXd CC = (cs * cs.transpose()).array();
        ArrayXXd SS = (sn * sn.transpose()).array();
        ArrayXXd Ga = 0.5 * (G + G.transpose()).array();
        ArrayXXd Tm = c2_ * Em * (CC + SS);
        ArrayXXd Tp = c2_ * Ep * (CC - SS);
        ArrayXXd Rp = Ga * (Tm + Tp);
        MatrixXd Rm = (Ga * (Tm - Tp)).matrix();
        ga -= Rp.rowwise().sum().matrix();
        MatrixXd Um = (c2_ * Ga * Em).matrix();
        MatrixXd Up = (c2_ * Ga * Ep).matrix();
        VectorXd Umc = Um * cs, Ums = Um * sn, Upc = Up * cs, Ups = Up * sn;
        gth.array() -= 2.0 * (sn.array() * Umc.array() - cs.array() * Ums.array() + sn.array() * Upc.array() +
                              cs.array() * Ups.array());
        acc.sigma_power += 2.0 * Rp.sum() / sp;
        MatrixXd W = Rm * zhat_;
        for (Index q = 0; q < Q; ++q) {
            glam[q] += zhat_.col(q).dot(W.col(q));
            acc.zhat.col(q) += 2.0 * lam[q] * W.col(q);
        }
    }
    for (Index q = 0; q < Q; ++q) {
        double gl = 0.0, gm = 0.0;
        for (Index m = 0; m < M; ++m) {
            double z = zhat_(m, q);
            gl += ga(m) * z * z;
            gm += gth(m) * z;
            acc.zhat(m, q) += 2.0 * ga(m) * lam[q] * z + gth(m) * (mu[q] - basis_.u(m, q));
            acc.u(m, q) -= gth(m) * z;
        }
        glam[q] += gl;
        gmu[q] += gm;
    }
    acc.b += gth;
}

void PsiKernel::sample_vss(const double* mu, const double* lam, double* psi1, MatrixXd* psi2) const {
    const Index M = M_, Q = Q_;
    const auto& u = basis_.u;
    const auto& b = basis_.b;
    if (psi1) {
        for (Index m = 0; m < M; ++m) {
            cplx L(0.0, 0.0);
            for (Index q = 0; q < Q; ++q) L += single_term(zhat_(m, q), omega_(m, q), mu[q] - u(m, q), lam[q]);
            L += cplx(0.0, b(m));
            psi1[m] = amp_ * rexp_floor(L);
        }
    }
    if (!psi2) return;
    for (Index m = 0; m < M; ++m) {
        cplx L(0.0, 0.0);
        for (Index q = 0; q < Q; ++q)
            L += single_term(2.0 * zhat_(m, q), 4.0 * omega_(m, q), mu[q] - u(m, q), lam[q]);
        L += cplx(0.0, 2.0 * b(m));
        (*psi2)(m, m) += c2_ * (1.0 + rexp_floor(L));
        for (Index m2 = m + 1; m2 < M; ++m2) {
            cplx Lm(0.0, 0.0), Lp(0.0, 0.0);
            for (Index q = 0; q < Q; ++q) {
                double w1 = mu[q] - u(m, q), w2 = mu[q] - u(m2, q);
                PairShared ps = pair_shared(omega_(m, q), w1, omega_(m2, q), w2, lam[q]);
                Lm += pair_term(ps, zhat_(m, q), w1, zhat_(m2, q), w2, -1.0, lam[q]);
                Lp += pair_term(ps, zhat_(m, q), w1, zhat_(m2, q), w2, 1.0, lam[q]);
            }
            Lm += cplx(0.0, b(m) - b(m2));
            Lp += cplx(0.0, b(m) + b(m2));
            double v = c2_ * (rexp_floor(Lm) + rexp_floor(Lp));
            (*psi2)(m, m2) += v;
            (*psi2)(m2, m) += v;
        }
    }
}

void PsiKernel::backward_vss(const double* mu, const double* lam, const double* g1, const MatrixXd& G, PsiGrad& acc,
                             double* gmu, double* glam) const {
    const Index M = M_, Q = Q_;
    const auto& u = basis_.u;
    const auto& b = basis_.b;
    const double sp = hyper_.sigma_power;
    if (g1) {
        for (Index m = 0; m < M; ++m) {
            cplx L(0.0, 0.0);
            for (Index q = 0; q < Q; ++q) L += single_term(zhat_(m, q), omega_(m, q), mu[q] - u(m, q), lam[q]);
            L += cplx(0.0, b(m));
            cplx eL = cexp_floor(L);
            cplx zeta = g1[m] * amp_ * eL;
            acc.sigma_power += g1[m] * amp_ * eL.real() / sp;
            for (Index q = 0; q < Q; ++q) {
                SinglePartials p = single_partials(zhat_(m, q), omega_(m, q), mu[q] - u(m, q), lam[q]);
                glam[q] += (zeta * p.dl).real();
                acc.omega(m, q) += (zeta * p.dO).real();
                acc.zhat(m, q) += (zeta * p.da).real();
                double gw = (zeta * p.dw).real();
                gmu[q] += gw;
                acc.u(m, q) -= gw;
            }
            acc.b(m) -= zeta.imag();
        }
    }
    if (!G.size()) return;
    for (Index m = 0; m < M; ++m) {
        {
            cplx L(0.0, 0.0);
            for (Index q = 0; q < Q; ++q)
                L += single_term(2.0 * zhat_(m, q), 4.0 * omega_(m, q), mu[q] - u(m, q), lam[q]);
            L += cplx(0.0, 2.0 * b(m));
            cplx eL = cexp_floor(L);
            double wgt = G(m, m);
            cplx zeta = wgt * c2_ * eL;
            acc.sigma_power += wgt * c2_ * (1.0 + eL.real()) * 2.0 / sp;
            for (Index q = 0; q < Q; ++q) {
                SinglePartials p = single_partials(2.0 * zhat_(m, q), 4.0 * omega_(m, q), mu[q] - u(m, q), lam[q]);
                glam[q] += (zeta * p.dl).real();
                acc.omega(m, q) += 4.0 * (zeta * p.dO).real();
                acc.zhat(m, q) += 2.0 * (zeta * p.da).real();
                double gw = (zeta * p.dw).real();
                gmu[q] += gw;
                acc.u(m, q) -= gw;
            }
            acc.b(m) -= 2.0 * zeta.imag();
        }
        for (Index m2 = m + 1; m2 < M; ++m2) {
            double wgt = G(m, m2) + G(m2, m);
            if (wgt == 0.0) continue;
            cplx Lm(0.0, 0.0), Lp(0.0, 0.0);
            for (Index q = 0; q < Q; ++q) {
                double w1 = mu[q] - u(m, q), w2 = mu[q] - u(m2, q);
                PairShared ps = pair_shared(omega_(m, q), w1, omega_(m2, q), w2, lam[q]);
                Lm += pair_term(ps, zhat_(m, q), w1, zhat_(m2, q), w2, -1.0, lam[q]);
                Lp += pair_term(ps, zhat_(m, q), w1, zhat_(m2, q), w2, 1.0, lam[q]);
            }
            Lm += cplx(0.0, b(m) - b(m2));
            Lp += cplx(0.0, b(m) + b(m2));
            cplx em = cexp_floor(Lm), ep = cexp_floor(Lp);
            cplx zm = wgt * c2_ * em, zp = wgt * c2_ * ep;
            acc.sigma_power += wgt * c2_ * (em.real() + ep.real()) * 2.0 / sp;
            for (Index q = 0; q < Q; ++q) {
                double w1 = mu[q] - u(m, q), w2 = mu[q] - u(m2, q);
                double a1 = zhat_(m, q), a2 = zhat_(m2, q), O1 = omega_(m, q), O2 = omega_(m2, q);
                PairPartials pm = pair_partials(a1, O1, w1, a2, O2, w2, -1.0, lam[q]);
                PairPartials pp = pair_partials(a1, O1, w1, a2, O2, w2, 1.0, lam[q]);
                glam[q] += (zm * pm.dl + zp * pp.dl).real();
                acc.omega(m, q) += (zm * pm.dO1 + zp * pp.dO1).real();
                acc.omega(m2, q) += (zm * pm.dO2 + zp * pp.dO2).real();
                acc.zhat(m, q) += (zm * pm.da1 + zp * pp.da1).real();
                acc.zhat(m2, q) += (zm * pm.da2 + zp * pp.da2).real();
                double gw1 = (zm * pm.dw1 + zp * pp.dw1).real();
                double gw2 = (zm * pm.dw2 + zp * pp.dw2).real();
                gmu[q] += gw1 + gw2;
                acc.u(m, q) -= gw1;
                acc.u(m2, q) -= gw2;
            }
            acc.b(m) -= zm.imag() + zp.imag();
            acc.b(m2) += zm.imag() - zp.imag();
        }
    }
}

BasisGrad PsiKernel::finalize(const PsiGrad& g) const {
    BasisGrad r;
    r.sigma_power = g.sigma_power;
    r.lengthscales = VectorXd::Zero(Q_);
    r.z.resize(M_, Q_);
    r.u = g.u;
    r.b = g.b;
    if (variant_ == Variant::VSS) r.beta.resize(M_, Q_);
    for (Index q = 0; q < Q_; ++q) {
        double l = hyper_.lengthscales(q);
        r.z.col(q) = g.zhat.col(q) / l;
        double gl = -g.zhat.col(q).dot(basis_.z.col(q)) / (l * l);
        if (variant_ == Variant::VSS) {
            r.beta.col(q) = g.omega.col(q) / (l * l);
            gl -= 2.0 * g.omega.col(q).dot(basis_.beta.col(q)) / (l * l * l);
        }
        r.lengthscales(q) = gl;
    }
    return r;
}

PsiStats psi_stats(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                   Variant variant, bool keep_per_sample, int workers) {
    if (mu.rows() != lam.rows() || mu.cols() != lam.cols()) throw Error("psi: mean/variance shape mismatch");
    if (mu.cols() != s.dim()) throw Error("psi: input dimension mismatch");
    if ((lam.array() < 0).any()) throw Error("psi: input variances must be nonnegative");
    PsiKernel kernel(s, h, variant);
    const Index N = mu.rows(), M = s.size(), Q = s.dim();
    PsiStats out;
    out.psi1.resize(N, M);
    if (keep_per_sample) out.psi2_per_sample.resize(N);
    const Index nb = block_count(N);
    std::vector<MatrixXd> parts(nb);
    parallel_for(nb, workers, [&](Index blk) {
        MatrixXd acc = MatrixXd::Zero(M, M);
        VectorXd m(Q), l(Q), row(M);
        for (Index n = blk * kBlock; n < std::min(N, (blk + 1) * kBlock); ++n) {
            m = mu.row(n).transpose();
            l = lam.row(n).transpose();
            if (keep_per_sample) {
                MatrixXd P = MatrixXd::Zero(M, M);
                kernel.sample(m.data(), l.data(), row.data(), &P);
                acc += P;
                out.psi2_per_sample[n] = std::move(P);
            } else {
                kernel.sample(m.data(), l.data(), row.data(), &acc);
            }
            out.psi1.row(n) = row.transpose();
        }
        parts[blk] = std::move(acc);
    });
    out.psi2 = nb ? tree_reduce(std::move(parts), [](MatrixXd& a, const MatrixXd& b) { a += b; })
                  : MatrixXd::Zero(M, M);
    return out;
}

MatrixXd psi1_ss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h) {
    return psi_stats(mu, lam, s, h, Variant::SS).psi1;
}

PsiStats psi2_ss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                 bool keep_per_sample) {
    return psi_stats(mu, lam, s, h, Variant::SS, keep_per_sample);
}

MatrixXd psi1_vss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h) {
    return psi_stats(mu, lam, s, h, Variant::VSS).psi1;
}

PsiStats psi2_vss(const MatrixXd& mu, const MatrixXd& lam, const SpectralBasis& s, const Hyperparams& h,
                  bool keep_per_sample) {
    return psi_stats(mu, lam, s, h, Variant::VSS, keep_per_sample);
}

std::pair<RowVectorXd, MatrixXd> psi_star(const VectorXd& mu, const VectorXd& lam, const SpectralBasis& s,
                                          const Hyperparams& h, Variant variant) {
    if (mu.size() != s.dim() || lam.size() != s.dim()) throw Error("psi_star: dimension mismatch");
    PsiKernel kernel(s, h, variant);
    RowVectorXd p1(s.size());
    MatrixXd p2 = MatrixXd::Zero(s.size(), s.size());
    kernel.sample(mu.data(), lam.data(), p1.data(), &p2);
    return {p1, p2};
}

}  // namespace drgp
