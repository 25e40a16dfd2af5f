#include "drgp/bound.hpp"

#include "drgp/parallel.hpp"

#include <cmath>

namespace drgp {

double BoundReport::sum_of_parts() const {
    double s = 0.0;
    for (double b : per_layer) s += b;
    return s + latent_var_penalty + entropy_H - kl_H - kl_omega - kl_A;
}

double SpdFactor::logdet() const {
    const auto& L = llt.matrixLLT();
    double s = 0.0;
    for (Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    return 2.0 * s;
}

MatrixXd SpdFactor::inverse() const {
    Index n = llt.matrixLLT().rows();
    return llt.solve(MatrixXd::Identity(n, n));
}

SpdFactor factor_spd(const MatrixXd& A, const std::string& context) {
    if (!A.allFinite()) throw FactorError(context + ": matrix has non-finite entries");
    SpdFactor f;
    f.llt.compute(A);
    if (f.llt.info() == Eigen::Success) return f;
    double jitter = 1e-10;
    for (int attempt = 0; attempt < 5; ++attempt, jitter *= 10.0) {
        MatrixXd Aj = A;
        Aj.diagonal().array() += jitter;
        f.llt.compute(Aj);
        if (f.llt.info() == Eigen::Success) {
            f.jitter = jitter;
            return f;
        }
    }
    throw FactorError(context + ": factorization failed after jitter up to 1e-6");
}

double kl_gauss_diag(const MatrixXd& means, const MatrixXd& vars) {
    if (means.rows() != vars.rows() || means.cols() != vars.cols()) throw Error("kl: shape mismatch");
    if ((vars.array() <= 0).any()) throw Error("kl: variances must be positive");
    return 0.5 * (vars.array() + means.array().square() - 1.0 - vars.array().log()).sum();
}

double kl_gauss(const MatrixXd& means, const MatrixXd& cov) {
    const Index M = means.rows();
    const double D = double(means.cols());
    if (cov.rows() != M || cov.cols() != M) throw Error("kl: covariance shape mismatch");
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw Error("kl: covariance is not positive definite");
    double logdet = 0.0;
    for (Index i = 0; i < M; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
    return 0.5 * (D * cov.trace() + means.squaredNorm() - D * logdet - D * double(M));
}

LayerSuff layer_suff(const PsiStats& psi, const MatrixXd& targets) {
    const Index N = psi.psi1.rows(), M = psi.psi1.cols(), D = targets.cols();
    if (targets.rows() != N) throw Error("layer bound: target/psi row mismatch");
    const Index nb = block_count(N);
    std::vector<std::pair<MatrixXd, double>> parts(nb);
    VectorXd row(M), y(D);
    for (Index blk = 0; blk < nb; ++blk) {
        MatrixXd c = MatrixXd::Zero(M, D);
        double yy = 0.0;
        for (Index n = blk * kBlock; n < std::min(N, (blk + 1) * kBlock); ++n) {
            row = psi.psi1.row(n).transpose();
            y = targets.row(n).transpose();
            add_sample_suff(c, yy, row.data(), y.data(), M, D);
        }
        parts[blk] = {std::move(c), yy};
    }
    LayerSuff s;
    s.psi2 = psi.psi2;
    s.n = N;
    if (nb == 0) {
        s.psi1t = MatrixXd::Zero(M, D);
        return s;
    }
    auto tot = tree_reduce(std::move(parts), [](auto& a, const auto& b) {
        a.first += b.first;
        a.second += b.second;
    });
    s.psi1t = std::move(tot.first);
    s.yy = tot.second;
    return s;
}

LayerSolve solve_layer(const LayerSuff& s, double sigma_noise, const std::string& context) {
    if (!(sigma_noise > 0)) throw Error(context + ": noise level must be positive");
    const Index M = s.psi2.rows();
    const double D = double(s.psi1t.cols());
    const double s2 = sigma_noise * sigma_noise;
    MatrixXd A = 0.5 * (s.psi2 + s.psi2.transpose());
    A.diagonal().array() += s2;
    LayerSolve r;
    r.factor = factor_spd(A, context);
    r.w = r.factor.solve(s.psi1t);
    double fit = (s.psi1t.array() * r.w.array()).sum();
    r.value = -0.5 * double(s.n - M) * D * std::log(s2) - 0.5 * double(s.n) * D * kLog2Pi - s.yy / (2.0 * s2) +
              fit / (2.0 * s2) - 0.5 * D * r.factor.logdet();
    return r;
}

double expected_loglik(const PsiStats& psi, const MatrixXd& Y, const WeightPosterior& q, double sigma_noise) {
    if (!(sigma_noise > 0)) throw Error("layer bound: noise level must be positive");
    const Index N = Y.rows();
    const double D = double(Y.cols());
    const double s2 = sigma_noise * sigma_noise;
    if (psi.psi1.rows() != N || q.mean.rows() != psi.psi1.cols() || q.mean.cols() != Y.cols())
        throw Error("layer bound: shape mismatch");
    double fit = (Y.transpose() * psi.psi1 * q.mean).trace();
    double quad = D * (psi.psi2 * q.cov).trace() + (q.mean.transpose() * psi.psi2 * q.mean).trace();
    return -0.5 * double(N) * D * std::log(kTwoPi * s2) - Y.squaredNorm() / (2.0 * s2) + fit / s2 - quad / (2.0 * s2);
}

double layer_bound(const PsiStats& psi, const MatrixXd& Y, const WeightPosterior& q, double sigma_noise,
                   double other_kl) {
    return expected_loglik(psi, Y, q, sigma_noise) - kl_gauss(q.mean, q.cov) - other_kl;
}

double optimal_layer_bound(const PsiStats& psi, const MatrixXd& Y, double sigma_noise, const std::string& context) {
    return solve_layer(layer_suff(psi, Y), sigma_noise, context).value;
}

WeightPosterior optimal_weight_posterior(const PsiStats& psi, const MatrixXd& Y, double sigma_noise) {
    LayerSolve s = solve_layer(layer_suff(psi, Y), sigma_noise);
    WeightPosterior q;
    q.mean = s.w;
    q.cov = sigma_noise * sigma_noise * s.factor.inverse();
    q.cov = 0.5 * (q.cov + q.cov.transpose()).eval();
    return q;
}

std::vector<LayerInput> build_layer_inputs(const ModelConfig& cfg, const std::vector<LatentState>& latent,
                                           const Dataset& data) {
    cfg.validate();
    const Index N = data.size(), Q = data.dim();
    if (N <= cfg.Hx) throw Error("recurrent inputs need N > H_x (N = " + std::to_string(N) + ")");
    const Index Nh = cfg.n_hat(N), T = cfg.latent_length(N);
    const int L = cfg.L, Hh = cfg.Hh, Hx = cfg.Hx;
    if ((int)latent.size() != L) throw Error("recurrent inputs: latent layer count mismatch");
    for (const auto& s : latent)
        if (s.mu.size() != T || s.lambda.size() != T) throw Error("recurrent inputs: latent length mismatch");

    std::vector<LayerInput> out(L + 1);
    for (int l = 0; l <= L; ++l) {
        const int Ql = cfg.input_dim(l, (int)Q);
        LayerInput& in = out[l];
        in.mu.resize(Nh, Ql);
        in.lam.resize(Nh, Ql);
        in.src.resize(Nh, Ql);
        in.target.resize(Nh);
        in.target_src.resize(Nh);
        auto put = [&](Index n, int col, int layer, Index j) {
            in.mu(n, col) = latent[layer].mu(j);
            in.lam(n, col) = latent[layer].lambda(j);
            in.src(n, col) = int(layer * T + j);
        };
        for (Index n = 0; n < Nh; ++n) {
            const Index i = Hx + n;
            if (l == 0) {
                for (int k = 0; k < Hh; ++k) put(n, k, 0, n + Hh - 1 - k);
                for (int k = 1; k <= Hx; ++k)
                    for (Index q = 0; q < Q; ++q) {
                        int col = Hh + (k - 1) * int(Q) + int(q);
                        in.mu(n, col) = data.inputs(i - k, q);
                        in.lam(n, col) = 0.0;
                        in.src(n, col) = -1;
                    }
            } else if (l < L) {
                for (int k = 0; k < Hh; ++k) put(n, k, l, n + Hh - 1 - k);
                for (int k = 0; k < Hh; ++k) put(n, Hh + k, l - 1, n + Hh - k);
            } else {
                for (int k = 0; k < Hh; ++k) put(n, k, L - 1, n + Hh - k);
            }
            if (l < L) {
                in.target(n) = latent[l].mu(n + Hh);
                in.target_src(n) = int(l * T + n + Hh);
            } else {
                in.target(n) = data.outputs(i);
                in.target_src(n) = -1;
            }
        }
    }
    return out;
}

RevarbProblem build_problem(const Model& model, const Dataset& data) {
    data.validate();
    model.validate(data.size(), data.dim());
    RevarbProblem p;
    p.config = model.config;
    p.N = data.size();
    p.n_hat = model.config.n_hat(p.N);
    p.T = model.config.latent_length(p.N);
    for (const auto& lp : model.layers) {
        p.hyper.push_back(lp.hyper());
        p.basis.push_back(lp.basis());
    }
    for (const auto& h : model.latent) p.latent.push_back(h.state());
    p.inputs = build_layer_inputs(model.config, p.latent, data);
    return p;
}

void add_latent_terms(const RevarbProblem& p, BoundReport& r) {
    const int Hh = p.config.Hh;
    r.kl_H = r.entropy_H = r.latent_var_penalty = r.kl_omega = 0.0;
    for (int l = 0; l < p.config.L; ++l) {
        const auto& st = p.latent[l];
        const double s2 = p.hyper[l].sigma_noise * p.hyper[l].sigma_noise;
        for (Index j = 0; j < p.T; ++j) {
            double lam = st.lambda(j), mu = st.mu(j);
            if (j < Hh) {
                r.kl_H += 0.5 * (lam + mu * mu - 1.0 - std::log(lam));
            } else {
                r.entropy_H += 0.5 * std::log(kTwoPi * lam) + 0.5;
                r.latent_var_penalty -= lam / (2.0 * s2);
            }
        }
    }
    if (p.config.variant == Variant::VSS)
        for (const auto& b : p.basis) r.kl_omega += kl_gauss_diag(b.z, b.beta);
}

void finish_report(BoundReport& r) {
    r.entropy_and_prior_H_terms = r.entropy_H - r.kl_H;
    r.total = r.sum_of_parts();
}

BoundReport revarb_objective(const RevarbProblem& p) {
    BoundReport r;
    for (int l = 0; l <= p.config.L; ++l) {
        const auto& in = p.inputs[l];
        PsiStats psi = psi_stats(in.mu, in.lam, p.basis[l], p.hyper[l], p.config.variant);
        r.per_layer.push_back(
            optimal_layer_bound(psi, in.target, p.hyper[l].sigma_noise, "layer " + std::to_string(l + 1)));
    }
    add_latent_terms(p, r);
    finish_report(r);
    return r;
}

BoundReport revarb_objective(const Model& model, const Dataset& data) {
    return revarb_objective(build_problem(model, data));
}

}  // namespace drgp
