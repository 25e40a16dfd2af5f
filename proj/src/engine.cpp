#include "drgp/engine.hpp"

#include "drgp/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace drgp {

namespace {

BlockStats block_stats(const PsiKernel& k, const LayerInput& in, Index s, Index e) {
    const Index M = k.M(), Q = k.Q();
    BlockStats b;
    b.begin = s;
    b.end = e;
    b.psi2 = MatrixXd::Zero(M, M);
    b.psi1t = MatrixXd::Zero(M, 1);
    VectorXd mu(Q), lam(Q), row(M);
    for (Index n = s; n < e; ++n) {
        mu = in.mu.row(n).transpose();
        lam = in.lam.row(n).transpose();
        k.sample(mu.data(), lam.data(), row.data(), &b.psi2);
        add_sample_suff(b.psi1t, b.tt, row.data(), &in.target(n), M, 1);
    }
    return b;
}

std::vector<PsiKernel> make_kernels(const RevarbProblem& p) {
    std::vector<PsiKernel> ks;
    for (int l = 0; l <= p.config.L; ++l) ks.emplace_back(p.basis[l], p.hyper[l], p.config.variant);
    return ks;
}

LayerSuff reduce_blocks(std::vector<BlockStats> blocks, Index n, Index M, int layer) {
    std::sort(blocks.begin(), blocks.end(), [](const BlockStats& a, const BlockStats& b) { return a.begin < b.begin; });
    Index next = 0;
    for (const auto& b : blocks) {
        if (b.begin != next)
            throw Error("reduce: layer " + std::to_string(layer + 1) + " samples [" + std::to_string(std::min(next, b.begin)) +
                        ", " + std::to_string(std::max(next, b.begin)) + ") are " +
                        (b.begin > next ? "missing" : "covered twice"));
        next = b.end;
    }
    if (next != n)
        throw Error("reduce: layer " + std::to_string(layer + 1) + " samples [" + std::to_string(next) + ", " +
                    std::to_string(n) + ") are missing");
    LayerSuff s;
    s.n = n;
    if (blocks.empty()) {
        s.psi2 = MatrixXd::Zero(M, M);
        s.psi1t = MatrixXd::Zero(M, 1);
        return s;
    }
    BlockStats tot = tree_reduce(std::move(blocks), [](BlockStats& a, const BlockStats& b) {
        a.psi2 += b.psi2;
        a.psi1t += b.psi1t;
        a.tt += b.tt;
    });
    s.psi2 = std::move(tot.psi2);
    s.psi1t = std::move(tot.psi1t);
    s.yy = tot.tt;
    return s;
}

}  // namespace

std::vector<std::pair<Index, Index>> split_ranges(Index n, int workers) {
    if (workers < 1) throw Error("split_ranges: need at least one worker");
    const Index nb = block_count(n);
    std::vector<std::pair<Index, Index>> r;
    for (int w = 0; w < workers; ++w) {
        Index b0 = nb * w / workers, b1 = nb * (w + 1) / workers;
        r.emplace_back(std::min(n, b0 * kBlock), std::min(n, b1 * kBlock));
    }
    return r;
}

PartialStats map_partial(const RevarbProblem& p, Index begin, Index end, int worker) {
    if (begin < 0 || end < begin || end > p.n_hat)
        throw Error("map_partial: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside [0, " +
                    std::to_string(p.n_hat) + ")");
    auto kernels = make_kernels(p);
    PartialStats out;
    out.worker = worker;
    out.begin = begin;
    out.end = end;
    out.layers.resize(p.config.L + 1);
    for (int l = 0; l <= p.config.L; ++l) {
        for (Index s = begin; s < end;) {
            Index e = std::min(end, (s / kBlock + 1) * kBlock);
            out.layers[l].push_back(block_stats(kernels[l], p.inputs[l], s, e));
            s = e;
        }
    }
    return out;
}

BoundReport reduce_bound(const RevarbProblem& p, const std::vector<PartialStats>& partials) {
    BoundReport r;
    for (int l = 0; l <= p.config.L; ++l) {
        std::vector<BlockStats> blocks;
        for (const auto& part : partials) {
            if ((int)part.layers.size() != p.config.L + 1) throw Error("reduce: partial has wrong layer count");
            blocks.insert(blocks.end(), part.layers[l].begin(), part.layers[l].end());
        }
        LayerSuff s = reduce_blocks(std::move(blocks), p.n_hat, p.basis[l].size(), l);
        r.per_layer.push_back(solve_layer(s, p.hyper[l].sigma_noise, "layer " + std::to_string(l + 1)).value);
    }
    add_latent_terms(p, r);
    finish_report(r);
    return r;
}

BoundReport distributed_objective(const RevarbProblem& p, int workers) {
    auto ranges = split_ranges(p.n_hat, workers);
    std::vector<PartialStats> parts(ranges.size());
    parallel_for((Index)ranges.size(), workers, [&](Index w) {
        parts[w] = map_partial(p, ranges[w].first, ranges[w].second, (int)w);
    });
    return reduce_bound(p, parts);
}

LayerEval eval_layer(const PsiKernel& k, const LayerInput& in, double sn, bool with_grad, int workers,
                     const std::string& context) {
    const Index Nh = in.mu.rows(), nb = block_count(Nh);
    const Index M = k.M(), Q = k.Q();
    const bool vss = k.variant() == Variant::VSS;
    LayerEval out;
    std::vector<BlockStats> blocks(nb);
    parallel_for(nb, workers, [&](Index b) { blocks[b] = block_stats(k, in, b * kBlock, std::min(Nh, (b + 1) * kBlock)); });
    out.suff = reduce_blocks(std::move(blocks), Nh, M, 0);
    LayerSolve sol = solve_layer(out.suff, sn, context);
    out.value = sol.value;
    if (!with_grad) return out;

    const LayerSuff& s = out.suff;
    const double s2 = sn * sn;
    const VectorXd w = sol.w.col(0);
    const MatrixXd Ainv = sol.factor.inverse();
    const MatrixXd G = -(w * w.transpose()) / (2.0 * s2) - 0.5 * Ainv;
    double gs2 = -0.5 * double(Nh - M) / s2 + s.yy / (2.0 * s2 * s2) - s.psi1t.col(0).dot(w) / (2.0 * s2 * s2) +
                 G.trace();
    out.sigma_noise = 2.0 * sn * gs2;

    out.gmu = MatrixXd::Zero(Nh, Q);
    out.glam = MatrixXd::Zero(Nh, Q);
    out.dtarget.resize(Nh);
    std::vector<PsiGrad> grads(nb);
    parallel_for(nb, workers, [&](Index b) {
        PsiGrad acc;
        acc.resize(M, Q, vss);
        VectorXd mu(Q), lam(Q), row(M), g1(M), gm(Q), gl(Q);
        for (Index n = b * kBlock; n < std::min(Nh, (b + 1) * kBlock); ++n) {
            mu = in.mu.row(n).transpose();
            lam = in.lam.row(n).transpose();
            k.sample(mu.data(), lam.data(), row.data(), nullptr);
            g1 = w * (in.target(n) / s2);
            gm.setZero();
            gl.setZero();
            k.backward(mu.data(), lam.data(), g1.data(), G, acc, gm.data(), gl.data());
            out.gmu.row(n) = gm.transpose();
            out.glam.row(n) = gl.transpose();
            out.dtarget(n) = (row.dot(w) - in.target(n)) / s2;
        }
        grads[b] = std::move(acc);
    });
    PsiGrad tot;
    if (nb) {
        tot = tree_reduce(std::move(grads), [](PsiGrad& a, const PsiGrad& b) { a += b; });
    } else {
        tot.resize(M, Q, vss);
    }
    out.basis = k.finalize(tot);
    return out;
}

void natural_to_raw(const Model& model, Model& g) {
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const auto& p = model.layers[l];
        auto& q = g.layers[l];
        q.sigma_power *= positive_transform_deriv(p.sigma_power);
        q.sigma_noise *= positive_transform_deriv(p.sigma_noise);
        for (Index i = 0; i < p.lengthscales.size(); ++i) q.lengthscales(i) *= positive_transform_deriv(p.lengthscales(i));
        for (Index i = 0; i < p.beta.size(); ++i) q.beta(i) *= positive_transform_deriv(p.beta(i));
    }
    for (size_t l = 0; l < model.latent.size(); ++l)
        for (Index j = 0; j < model.latent[l].lambda.size(); ++j)
            g.latent[l].lambda(j) *= positive_transform_deriv(model.latent[l].lambda(j));
}

Evaluation evaluate(const Model& model, const Dataset& data, bool with_grad, int workers) {
    RevarbProblem p = build_problem(model, data);
    auto kernels = make_kernels(p);
    const int L = p.config.L;
    const Index Nh = p.n_hat;
    const bool vss = p.config.variant == Variant::VSS;

    Evaluation ev;
    if (with_grad) ev.grad = zeros_like(model);
    BoundReport& r = ev.report;

    for (int l = 0; l <= L; ++l) {
        const auto& in = p.inputs[l];
        LayerEval le = eval_layer(kernels[l], in, p.hyper[l].sigma_noise, with_grad, workers,
                                  "layer " + std::to_string(l + 1));
        r.per_layer.push_back(le.value);
        if (!with_grad) continue;

        auto& gl = ev.grad.layers[l];
        gl.sigma_power = le.basis.sigma_power;
        gl.sigma_noise = le.sigma_noise;
        gl.lengthscales = le.basis.lengthscales;
        gl.z = le.basis.z;
        if (vss) gl.beta = le.basis.beta;
        gl.u = le.basis.u;
        gl.b = le.basis.b;

        for (Index n = 0; n < Nh; ++n) {
            for (Index q = 0; q < in.src.cols(); ++q) {
                int src = in.src(n, q);
                if (src < 0) continue;
                ev.grad.latent[src / p.T].mu(src % p.T) += le.gmu(n, q);
                ev.grad.latent[src / p.T].lambda(src % p.T) += le.glam(n, q);
            }
            int ts = in.target_src(n);
            if (ts >= 0) ev.grad.latent[ts / p.T].mu(ts % p.T) += le.dtarget(n);
        }
    }

    add_latent_terms(p, r);
    finish_report(r);

    if (with_grad) {
        const int Hh = p.config.Hh;
        for (int l = 0; l < L; ++l) {
            const auto& st = p.latent[l];
            auto& g = ev.grad.latent[l];
            const double sn = p.hyper[l].sigma_noise, s2 = sn * sn;
            double lam_sum = 0.0;
            for (Index j = 0; j < p.T; ++j) {
                double lam = st.lambda(j);
                if (j < Hh) {
                    g.mu(j) -= st.mu(j);
                    g.lambda(j) -= 0.5 * (1.0 - 1.0 / lam);
                } else {
                    g.lambda(j) += 0.5 / lam - 0.5 / s2;
                    lam_sum += lam;
                }
            }
            ev.grad.layers[l].sigma_noise += 2.0 * sn * lam_sum / (2.0 * s2 * s2);
        }
        if (vss) {
            for (int l = 0; l <= L; ++l) {
                const auto& bs = p.basis[l];
                ev.grad.layers[l].z -= bs.z;
                ev.grad.layers[l].beta.array() -= 0.5 * (1.0 - bs.beta.array().inverse());
            }
        }
        natural_to_raw(model, ev.grad);
    }
    return ev;
}

VectorXd revarb_gradient(const Model& model, const Dataset& data, const ParamLayout& layout, int workers) {
    return flatten_with(evaluate(model, data, true, workers).grad, layout);
}

}  // namespace drgp
