#include "drgp/narx.hpp"

#include <cmath>

namespace drgp {

NarxDesign build_narx(const Dataset& d, int Hy, int Hx) {
    d.validate();
    if (Hy < 0 || Hx < 0 || Hy + Hx == 0) throw Error("narx: need non-negative lags, not both zero");
    const Index N = d.size(), Q = d.dim();
    const Index off = std::max(Hy, Hx);
    if (N <= off) throw Error("narx: need N > max(H_y, H_x) (N = " + std::to_string(N) + ")");
    NarxDesign nd;
    nd.Hy = Hy;
    nd.Hx = Hx;
    nd.Q = Q;
    nd.X.resize(N - off, Hy + Q * Hx);
    nd.y.resize(N - off);
    for (Index r = 0; r < N - off; ++r) {
        const Index t = r + off;
        for (int k = 1; k <= Hy; ++k) nd.X(r, k - 1) = d.outputs(t - k);
        for (int k = 1; k <= Hx; ++k)
            for (Index q = 0; q < Q; ++q) nd.X(r, Hy + (k - 1) * Q + q) = d.inputs(t - k, q);
        nd.y(r) = d.outputs(t);
    }
    return nd;
}

namespace {

LayerInput design_input(const NarxDesign& d) {
    LayerInput in;
    in.mu = d.X;
    in.lam = MatrixXd::Zero(d.X.rows(), d.X.cols());
    in.src = Eigen::MatrixXi::Constant(d.X.rows(), d.X.cols(), -1);
    in.target = d.y;
    in.target_src = Eigen::VectorXi::Constant(d.y.size(), -1);
    return in;
}

Hyperparams initial_hyper(const MatrixXd& X, const NarxFitConfig& fc) {
    Hyperparams h;
    h.sigma_power = fc.sigma_power_init;
    h.sigma_noise = fc.sigma_noise_init;
    h.lengthscales.resize(X.cols());
    for (Index q = 0; q < X.cols(); ++q)
        h.lengthscales(q) = lengthscale_from_range(X.col(q).maxCoeff() - X.col(q).minCoeff(), fc.lengthscale_rule);
    h.periods = VectorXd::Constant(X.cols(), kInf);
    return h;
}

// raw vector: [sigma_power, sigma_noise?, lengthscales, extra...]
VectorXd pack_hyper(const Hyperparams& h, bool noise) {
    VectorXd x(1 + (noise ? 1 : 0) + h.dim());
    Index i = 0;
    x(i++) = inverse_transform(h.sigma_power);
    if (noise) x(i++) = inverse_transform(h.sigma_noise);
    for (Index q = 0; q < h.dim(); ++q) x(i++) = inverse_transform(h.lengthscales(q));
    return x;
}

Index unpack_hyper(const VectorXd& x, Hyperparams& h, bool noise) {
    Index i = 0;
    h.sigma_power = positive_transform(x(i++));
    if (noise) h.sigma_noise = positive_transform(x(i++));
    for (Index q = 0; q < h.dim(); ++q) h.lengthscales(q) = positive_transform(x(i++));
    return i;
}

}  // namespace

double gp_ss_log_ml(const NarxDesign& d, const SpectralBasis& s, const Hyperparams& h) {
    PsiKernel k(s, h, Variant::SS);
    return eval_layer(k, design_input(d), h.sigma_noise, false, 1, "GP-SS").value;
}

GpSsNarx fit_gp_ss_narx(const NarxDesign& d, int M, std::uint64_t seed, const NarxFitConfig& fc) {
    if (M < 0) throw Error("GP-SS: M must be >= 0");
    const Index P = d.X.cols();
    const LayerInput in = design_input(d);
    Hyperparams h0 = initial_hyper(d.X, fc);
    SpectralBasis s0 = init_basis(M, P, seed, UInit::Zero);
    const bool tn = fc.train_noise;

    VectorXd hx = pack_hyper(h0, tn);
    VectorXd x0(hx.size() + M * P);
    x0 << hx, Eigen::Map<const VectorXd>(s0.z.data(), M * P);

    auto unpack = [&](const VectorXd& x, Hyperparams& h, SpectralBasis& s) {
        h = h0;
        s = s0;
        Index i = unpack_hyper(x, h, tn);
        s.z = Eigen::Map<const MatrixXd>(x.data() + i, M, P);
    };

    Objective fn = [&](const VectorXd& x, double* f, VectorXd* g) {
        Hyperparams h;
        SpectralBasis s;
        unpack(x, h, s);
        PsiKernel k(s, h, Variant::SS);
        LayerEval le;
        try {
            le = eval_layer(k, in, h.sigma_noise, g != nullptr, fc.workers, "GP-SS");
        } catch (const FactorError&) {
            return false;
        }
        *f = -le.value;
        if (g) {
            g->resize(x.size());
            Index i = 0;
            (*g)(i) = -le.basis.sigma_power * positive_transform_deriv(x(i));
            ++i;
            if (tn) {
                (*g)(i) = -le.sigma_noise * positive_transform_deriv(x(i));
                ++i;
            }
            for (Index q = 0; q < P; ++q, ++i) (*g)(i) = -le.basis.lengthscales(q) * positive_transform_deriv(x(i));
            g->segment(i, M * P) = -Eigen::Map<const VectorXd>(le.basis.z.data(), M * P);
        }
        return std::isfinite(*f);
    };

    MinimizeResult mr = minimize_lbfgs(fn, x0, fc.iterations);
    GpSsNarx out;
    out.Hy = d.Hy;
    out.Hx = d.Hx;
    Hyperparams h;
    SpectralBasis s;
    unpack(mr.x, h, s);
    PsiStats psi = psi_stats(in.mu, in.lam, s, h, Variant::SS);
    out.layer = make_layer_predictor(h, s, Variant::SS, psi, d.y);
    out.log_ml = -mr.f;
    out.history = std::move(mr.history);
    return out;
}

std::pair<double, double> GpSsNarx::predict(const VectorXd& u) const {
    auto [m, v] = predict_layer(layer, u, VectorXd::Zero(u.size()));
    const double sn = layer.hyper.sigma_noise;
    return {m, std::max(v, 0.0) + sn * sn};
}

MatrixXd se_ard_kernel(const MatrixXd& A, const MatrixXd& B, const Hyperparams& h) {
    MatrixXd K(A.rows(), B.rows());
    const double s2 = h.sigma_power * h.sigma_power;
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < B.rows(); ++j) {
            double r = 0.0;
            for (Index q = 0; q < A.cols(); ++q) {
                double t = (A(i, q) - B(j, q)) / h.lengthscales(q);
                r += t * t;
            }
            K(i, j) = s2 * std::exp(-0.5 * r);
        }
    return K;
}

double gp_full_log_ml(const MatrixXd& X, const VectorXd& y, const Hyperparams& h, VectorXd* grad) {
    const Index N = X.rows(), P = X.cols();
    if (y.size() != N) throw Error("GP-full: target length mismatch");
    MatrixXd Kf = se_ard_kernel(X, X, h);
    MatrixXd K = Kf;
    const double sn2 = h.sigma_noise * h.sigma_noise;
    K.diagonal().array() += sn2;
    SpdFactor f = factor_spd(K, "GP-full");
    VectorXd alpha = f.llt.solve(y);
    double v = -0.5 * y.dot(alpha) - 0.5 * f.logdet() - 0.5 * double(N) * kLog2Pi;
    if (grad) {
        MatrixXd W = alpha * alpha.transpose() - f.inverse();
        grad->resize(2 + P);
        (*grad)(0) = (W.array() * Kf.array()).sum() / h.sigma_power;
        (*grad)(1) = h.sigma_noise * W.trace();
        for (Index q = 0; q < P; ++q) {
            double s = 0.0;
            for (Index i = 0; i < N; ++i)
                for (Index j = 0; j < N; ++j) {
                    double dq = X(i, q) - X(j, q);
                    s += W(i, j) * Kf(i, j) * dq * dq;
                }
            const double l = h.lengthscales(q);
            (*grad)(2 + q) = 0.5 * s / (l * l * l);
        }
    }
    return v;
}

GpFullNarx fit_gp_full_narx(const NarxDesign& d, const NarxFitConfig& fc) {
    const Index P = d.X.cols();
    Hyperparams h0 = initial_hyper(d.X, fc);
    const bool tn = fc.train_noise;
    Objective fn = [&](const VectorXd& x, double* f, VectorXd* g) {
        Hyperparams h = h0;
        unpack_hyper(x, h, tn);
        VectorXd gn;
        try {
            *f = -gp_full_log_ml(d.X, d.y, h, g ? &gn : nullptr);
        } catch (const FactorError&) {
            return false;
        }
        if (g) {
            g->resize(x.size());
            Index i = 0;
            (*g)(i) = -gn(0) * positive_transform_deriv(x(i));
            ++i;
            if (tn) {
                (*g)(i) = -gn(1) * positive_transform_deriv(x(i));
                ++i;
            }
            for (Index q = 0; q < P; ++q, ++i) (*g)(i) = -gn(2 + q) * positive_transform_deriv(x(i));
        }
        return std::isfinite(*f);
    };
    MinimizeResult mr = minimize_lbfgs(fn, pack_hyper(h0, tn), fc.iterations);
    GpFullNarx out;
    out.Hy = d.Hy;
    out.Hx = d.Hx;
    out.hyper = h0;
    unpack_hyper(mr.x, out.hyper, tn);
    out.X = d.X;
    MatrixXd K = se_ard_kernel(d.X, d.X, out.hyper);
    K.diagonal().array() += out.hyper.sigma_noise * out.hyper.sigma_noise;
    SpdFactor f = factor_spd(K, "GP-full");
    out.llt = f.llt;
    out.alpha = f.llt.solve(d.y);
    out.log_ml = -0.5 * d.y.dot(out.alpha) - 0.5 * f.logdet() - 0.5 * double(d.y.size()) * kLog2Pi;
    out.history = std::move(mr.history);
    return out;
}

std::pair<double, double> GpFullNarx::predict(const VectorXd& u) const {
    MatrixXd k = se_ard_kernel(X, u.transpose(), hyper);
    double m = k.col(0).dot(alpha);
    VectorXd v = llt.matrixL().solve(k.col(0));
    const double sp2 = hyper.sigma_power * hyper.sigma_power, sn2 = hyper.sigma_noise * hyper.sigma_noise;
    return {m, std::max(sp2 - v.squaredNorm(), 0.0) + sn2};
}

NarxTrace narx_simulate(const std::function<std::pair<double, double>(const VectorXd&)>& predict, int Hy, int Hx,
                        const Dataset& history, const MatrixXd& X) {
    const Index Q = X.cols();
    if (history.dim() != Q) throw Error("narx simulate: exogenous width mismatch");
    if (history.size() < std::max(Hy, Hx)) throw Error("narx simulate: history shorter than the lags");
    std::vector<double> ys(history.outputs.data() + history.size() - Hy, history.outputs.data() + history.size());
    MatrixXd ex(Hx + X.rows(), Q);
    ex << history.inputs.bottomRows(Hx), X;
    NarxTrace tr;
    tr.mean.resize(X.rows());
    tr.var.resize(X.rows());
    VectorXd u(Hy + Q * Hx);
    for (Index t = 0; t < X.rows(); ++t) {
        for (int k = 1; k <= Hy; ++k) u(k - 1) = ys[ys.size() - k];
        for (int k = 1; k <= Hx; ++k)
            for (Index q = 0; q < Q; ++q) u(Hy + (k - 1) * Q + q) = ex(Hx + t - k, q);
        auto [m, v] = predict(u);
        tr.mean(t) = m;
        tr.var(t) = v;
        ys.push_back(m);
    }
    return tr;
}

}  // namespace drgp
