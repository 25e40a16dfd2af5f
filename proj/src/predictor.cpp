#include "drgp/predictor.hpp"

#include <cmath>

namespace drgp {

LayerPredictor make_layer_predictor(const Hyperparams& h, const SpectralBasis& s, Variant v, const PsiStats& psi,
                                    const VectorXd& targets) {
    LayerPredictor p;
    p.hyper = h;
    p.basis = s;
    p.variant = v;
    WeightPosterior q = optimal_weight_posterior(psi, targets, h.sigma_noise);
    p.m = q.mean.col(0);
    p.S = q.cov;
    p.trained = true;
    return p;
}

std::pair<double, double> predict_layer(const LayerPredictor& p, const VectorXd& mu, const VectorXd& lam) {
    if (!p.trained) throw Error("predict_layer: layer has no trained posterior");
    const Index M = p.basis.size();
    if (M == 0) return {0.0, 0.0};
    if (mu.size() != p.basis.dim() || lam.size() != mu.size()) throw Error("predict_layer: input width mismatch");
    auto [psi1, psi2] = psi_star(mu, lam, p.basis, p.hyper, p.variant);
    const double mean = psi1.dot(p.m);
    double var = p.m.dot(psi2 * p.m) - mean * mean + (p.S.array() * psi2.array()).sum();
    return {mean, var};
}

Posterior make_posterior(const Model& model, const Dataset& train) {
    RevarbProblem pr = build_problem(model, train);
    Posterior post;
    post.config = model.config;
    post.Q = train.dim();
    for (int l = 0; l <= pr.config.L; ++l) {
        const auto& in = pr.inputs[l];
        PsiStats psi = psi_stats(in.mu, in.lam, pr.basis[l], pr.hyper[l], pr.config.variant);
        post.layers.push_back(make_layer_predictor(pr.hyper[l], pr.basis[l], pr.config.variant, psi, in.target));
    }
    const int Hx = pr.config.Hx, Hh = pr.config.Hh;
    post.x_tail = train.inputs.bottomRows(Hx);
    for (const auto& st : pr.latent) {
        post.mu_tail.push_back(st.mu.tail(Hh));
        post.lam_tail.push_back(st.lambda.tail(Hh));
    }
    return post;
}

std::string to_string(Warmup w) { return w == Warmup::Cold ? "cold" : "continuation"; }

Warmup parse_warmup(const std::string& s) {
    if (s == "cold") return Warmup::Cold;
    if (s == "continuation") return Warmup::Continuation;
    throw Error("unknown warmup policy '" + s + "'");
}

SimTrace free_simulate(const Posterior& post, const MatrixXd& X, Warmup warmup) {
    const auto& cfg = post.config;
    const int L = cfg.L, Hx = cfg.Hx, Hh = cfg.Hh;
    if ((int)post.layers.size() != L + 1) throw Error("free_simulate: posterior has wrong layer count");
    if (X.cols() != post.Q) throw Error("free_simulate: exogenous width mismatch");

    MatrixXd ex;
    Index steps;
    if (warmup == Warmup::Continuation) {
        if (X.rows() < 1) throw Error("free_simulate: no exogenous rows");
        if (post.x_tail.rows() != Hx) throw Error("free_simulate: continuation needs the training tail");
        ex.resize(Hx + X.rows(), X.cols());
        ex << post.x_tail, X;
        steps = X.rows();
    } else {
        if (X.rows() <= Hx)
            throw Error("free_simulate: need more than H_x = " + std::to_string(Hx) + " exogenous rows, got " +
                        std::to_string(X.rows()));
        ex = X;
        steps = X.rows() - Hx;
    }

    // per hidden layer: first Hh warmup entries, then one per step
    std::vector<std::vector<double>> hm(L), hv(L);
    for (int l = 0; l < L; ++l) {
        if (warmup == Warmup::Continuation) {
            hm[l].assign(post.mu_tail[l].data(), post.mu_tail[l].data() + Hh);
            hv[l].assign(post.lam_tail[l].data(), post.lam_tail[l].data() + Hh);
        } else {
            hm[l].assign(Hh, 0.0);
            hv[l].assign(Hh, 1.0);
        }
    }

    SimTrace tr;
    tr.mean.resize(steps, L + 1);
    tr.var.resize(steps, L + 1);
    const Index Q = post.Q;
    for (Index t = 0; t < steps; ++t) {
        const Index e = Hx + t;
        for (int l = 0; l <= L; ++l) {
            const auto& lp = post.layers[l];
            VectorXd mu(lp.basis.dim()), lam(lp.basis.dim());
            if (l == 0) {
                for (int k = 0; k < Hh; ++k) {
                    mu(k) = hm[0][Hh + t - 1 - k];
                    lam(k) = hv[0][Hh + t - 1 - k];
                }
                for (int k = 1; k <= Hx; ++k)
                    for (Index q = 0; q < Q; ++q) {
                        mu(Hh + (k - 1) * Q + q) = ex(e - k, q);
                        lam(Hh + (k - 1) * Q + q) = 0.0;
                    }
            } else if (l < L) {
                for (int k = 0; k < Hh; ++k) {
                    mu(k) = hm[l][Hh + t - 1 - k];
                    lam(k) = hv[l][Hh + t - 1 - k];
                    mu(Hh + k) = hm[l - 1][Hh + t - k];
                    lam(Hh + k) = hv[l - 1][Hh + t - k];
                }
            } else {
                for (int k = 0; k < Hh; ++k) {
                    mu(k) = hm[L - 1][Hh + t - k];
                    lam(k) = hv[L - 1][Hh + t - k];
                }
            }
            auto [m, v] = predict_layer(lp, mu, lam);
            const double sn = lp.hyper.sigma_noise;
            v = std::max(v, 0.0) + sn * sn;
            tr.mean(t, l) = m;
            tr.var(t, l) = v;
            if (l < L) {
                hm[l].push_back(m);
                hv[l].push_back(v);
            }
        }
    }
    return tr;
}

double rmse(const VectorXd& pred, const VectorXd& truth) {
    if (pred.size() != truth.size())
        throw Error("rmse: length mismatch (" + std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) +
                    ")");
    if (pred.size() == 0) throw Error("rmse: empty input");
    return std::sqrt((pred - truth).squaredNorm() / double(pred.size()));
}

}  // namespace drgp
