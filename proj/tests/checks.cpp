#include "checks.hpp"

#include "oracles.hpp"

#include "drgp/engine.hpp"
#include "drgp/features.hpp"
#include "drgp/psi.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

namespace drgp::checks {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

struct Instance {
    SpectralBasis basis;
    Hyperparams hyper;
    MatrixXd mu, lam;
};

// Random small instance; some inputs are exact and some columns periodic.
Instance random_instance(std::mt19937_64& rng, Index N, Index M, Index Q, bool vss) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    Instance in;
    in.basis.z = MatrixXd(M, Q);
    in.basis.u = MatrixXd(M, Q);
    in.basis.b = VectorXd(M);
    for (Index m = 0; m < M; ++m) {
        for (Index q = 0; q < Q; ++q) {
            in.basis.z(m, q) = nd(rng);
            in.basis.u(m, q) = 2.0 * ud(rng) - 1.0;
        }
        in.basis.b(m) = kTwoPi * ud(rng);
    }
    if (vss) {
        in.basis.beta = MatrixXd(M, Q);
        for (Index m = 0; m < M; ++m)
            for (Index q = 0; q < Q; ++q) in.basis.beta(m, q) = 0.05 + 0.45 * ud(rng);
    }
    in.hyper.sigma_power = 0.5 + ud(rng);
    in.hyper.sigma_noise = 0.1 + 0.4 * ud(rng);
    in.hyper.lengthscales = VectorXd(Q);
    in.hyper.periods = VectorXd::Constant(Q, kInf);
    for (Index q = 0; q < Q; ++q) {
        in.hyper.lengthscales(q) = 0.5 + 1.5 * ud(rng);
        if (ud(rng) < 0.3) in.hyper.periods(q) = 2.0 + 3.0 * ud(rng);
    }
    in.mu = MatrixXd(N, Q);
    in.lam = MatrixXd(N, Q);
    for (Index n = 0; n < N; ++n)
        for (Index q = 0; q < Q; ++q) {
            in.mu(n, q) = nd(rng);
            in.lam(n, q) = ud(rng) < 0.2 ? 0.0 : 0.5 * ud(rng);
        }
    return in;
}

double min_eig_sym(const MatrixXd& A) {
    if (A.size() == 0) return 0.0;
    MatrixXd S = 0.5 * (A + A.transpose());
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Dataset toy_data(std::mt19937_64& rng, Index N, Index Q) {
    std::normal_distribution<double> nd;
    Dataset d;
    d.inputs.resize(N, Q);
    d.outputs.resize(N);
    for (Index i = 0; i < N; ++i) {
        for (Index q = 0; q < Q; ++q) d.inputs(i, q) = std::sin(0.3 * double(i) + double(q)) + 0.1 * nd(rng);
        d.outputs(i) = std::cos(0.2 * double(i)) + 0.1 * nd(rng);
    }
    return d;
}

// random model in raw space with every group populated
Model random_model(std::mt19937_64& rng, const ModelConfig& c, Index N, Index Q) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    auto rnd = [&](Index r, Index k, double scale, double shift) {
        MatrixXd A(r, k);
        for (Index i = 0; i < A.size(); ++i) A.data()[i] = scale * ud(rng) + shift;
        return A;
    };
    Model m;
    m.config = c;
    for (int l = 0; l <= c.L; ++l) {
        const int q = c.input_dim(l, (int)Q);
        LayerParams p;
        p.sigma_power = 0.3 * nd(rng);
        p.sigma_noise = 0.3 * nd(rng) - 1.0;
        p.lengthscales = rnd(q, 1, 0.3, 0.0);
        p.periods = VectorXd::Constant(q, kInf);
        p.z = rnd(c.M, q, 1.0, 0.0);
        p.u = rnd(c.M, q, 1.0, 0.0);
        p.b = rnd(c.M, 1, 1.0, 2.0);
        if (c.variant == Variant::VSS) p.beta = rnd(c.M, q, 1.0, -1.5);
        m.layers.push_back(p);
    }
    for (int l = 0; l < c.L; ++l) {
        LatentParams h;
        h.mu = rnd(c.latent_length(N), 1, 1.0, 0.0);
        h.lambda = rnd(c.latent_length(N), 1, 1.0, -1.0);
        m.latent.push_back(h);
    }
    return m;
}

}  // namespace

Result psi_monte_carlo(const Options& o) {
    Result r{1, "psi statistics agree with Monte-Carlo within 3 standard errors", false, ""};
    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<int> dq(1, 3), dm(1, 5), dn(1, 4);
    long entries = 0, bad = 0;
    double worst = 0.0;
    std::ostringstream misses;
    for (Variant v : {Variant::SS, Variant::VSS}) {
        for (int i = 0; i < o.mc_instances; ++i) {
            const Index Q = dq(rng), M = dm(rng), N = dn(rng);
            Instance in = random_instance(rng, N, M, Q, v == Variant::VSS);
            PsiStats ps = psi_stats(in.mu, in.lam, in.basis, in.hyper, v);
            auto mc = oracle::mc_psi(in.mu, in.lam, in.basis.z, in.basis.beta, in.basis.u, in.basis.b,
                                     in.hyper.sigma_power, in.hyper.lengthscales, in.hyper.periods, o.mc_draws, rng());
            auto test = [&](double got, double est, double se, const char* what, Index a, Index b) {
                ++entries;
                double z = std::abs(got - est) / std::max(se, 1e-300);
                if (se > 0) worst = std::max(worst, z);
                if (std::abs(got - est) > std::max(3.0 * se, 1e-12)) {
                    ++bad;
                    misses << " " << to_string(v) << "#" << i << " " << what << "(" << a << "," << b
                           << ") z=" << fmt("%.3g", z);
                    // diagnostic only: the same entry on two fresh streams with 4x the draws
                    misses << ", rerun z";
                    for (int k = 0; k < 2; ++k) {
                        auto re = oracle::mc_psi(in.mu, in.lam, in.basis.z, in.basis.beta, in.basis.u, in.basis.b,
                                                 in.hyper.sigma_power, in.hyper.lengthscales, in.hyper.periods,
                                                 4 * o.mc_draws, o.seed + 7919 * (k + 1) + i);
                        bool p1 = std::string(what) == "psi1";
                        double e2 = p1 ? re.psi1(a, b) : re.psi2(a, b), s2 = p1 ? re.psi1_se(a, b) : re.psi2_se(a, b);
                        misses << " " << fmt("%.2f", std::abs(got - e2) / std::max(s2, 1e-300));
                    }
                    misses << ";";
                }
            };
            for (Index n = 0; n < N; ++n)
                for (Index m = 0; m < M; ++m) test(ps.psi1(n, m), mc.psi1(n, m), mc.psi1_se(n, m), "psi1", n, m);
            for (Index m = 0; m < M; ++m)
                for (Index k = m; k < M; ++k) test(ps.psi2(m, k), mc.psi2(m, k), mc.psi2_se(m, k), "psi2", m, k);
        }
    }
    r.pass = bad == 0;
    double expected = double(entries) * 0.0027;
    r.detail = std::to_string(entries) + " entries, " + std::to_string(bad) + " outside 3 SE (about " +
               fmt("%.1f", expected) + " expected by chance), max |z| " + fmt("%.2f", worst) +
               (bad ? ";" + misses.str() : "");
    return r;
}

Result bound_tightness(const Options& o) {
    Result r{2, "optimal bound equals exact Gaussian log-density when inputs are exact", false, ""};
    std::mt19937_64 rng(o.seed + 2);
    std::uniform_int_distribution<int> dq(1, 3), dm(1, 10), dn(2, 40);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const Index Q = dq(rng), M = dm(rng), N = dn(rng);
        Instance in = random_instance(rng, N, M, Q, false);
        in.lam.setZero();
        VectorXd y(N);
        for (Index n = 0; n < N; ++n) y(n) = nd(rng);
        PsiStats ps = psi_stats(in.mu, in.lam, in.basis, in.hyper, Variant::SS);
        double got = optimal_layer_bound(ps, y, in.hyper.sigma_noise);
        MatrixXd F = oracle::feature_rows(in.mu, in.basis.z, in.basis.u, in.basis.b, in.hyper.sigma_power,
                                          in.hyper.lengthscales, in.hyper.periods);
        MatrixXd C = F * F.transpose();
        C.diagonal().array() += in.hyper.sigma_noise * in.hyper.sigma_noise;
        double want = oracle::gauss_logpdf(y, C);
        worst = std::max(worst, std::abs(got - want) / std::abs(want));
    }
    r.pass = worst <= 1e-8;
    r.detail = "10 instances, max relative difference " + fmt("%.3g", worst);
    return r;
}

Result optimality(const Options& o) {
    Result r{3, "optimal bound dominates the bound at any weight posterior", false, ""};
    std::mt19937_64 rng(o.seed + 3);
    std::normal_distribution<double> nd;
    const Index N = 30, M = 7, Q = 2;
    Instance in = random_instance(rng, N, M, Q, false);
    VectorXd y(N);
    for (Index n = 0; n < N; ++n) y(n) = nd(rng);
    PsiStats ps = psi_stats(in.mu, in.lam, in.basis, in.hyper, Variant::SS);
    const double sn = in.hyper.sigma_noise;
    const double opt = optimal_layer_bound(ps, y, sn);
    double min_slack = kInf;
    for (int t = 0; t < 100; ++t) {
        WeightPosterior q;
        q.mean = MatrixXd(M, 1);
        MatrixXd B(M, M);
        for (Index i = 0; i < M; ++i) q.mean(i, 0) = nd(rng);
        for (Index i = 0; i < B.size(); ++i) B.data()[i] = 0.5 * nd(rng);
        q.cov = B * B.transpose() + 1e-3 * MatrixXd::Identity(M, M);
        min_slack = std::min(min_slack, opt - layer_bound(ps, y, q, sn));
    }
    WeightPosterior qs = optimal_weight_posterior(ps, y, sn);
    double at_opt = layer_bound(ps, y, qs, sn);
    double rel = std::abs(at_opt - opt) / std::abs(opt);
    r.pass = min_slack >= -1e-9 && rel <= 1e-8;
    r.detail = "min slack over 100 draws " + fmt("%.4g", min_slack) + ", bound at optimum vs optimal bound rel diff " +
               fmt("%.3g", rel);
    return r;
}

Result gradient_check(const Options& o) {
    Result r{4, "gradient matches central finite differences for every parameter group", false, ""};
    std::mt19937_64 rng(o.seed + 4);
    double worst = 0.0;
    std::ostringstream per;
    bool covered = true;
    for (Variant v : {Variant::SS, Variant::VSS}) {
        const Index N = 40, Q = 1;
        ModelConfig c;
        c.L = 2;
        c.Hx = 3;
        c.Hh = 2;
        c.M = 5;
        c.variant = v;
        Dataset d = toy_data(rng, N, Q);
        Model m = random_model(rng, c, N, Q);
        ParamLayout lay = make_layout(m);
        VectorXd x = flatten_with(m, lay);
        VectorXd g = revarb_gradient(m, d, lay);
        auto f = [&](const VectorXd& xx) { return revarb_objective(unflatten_params(ParamVector{xx, lay}, m), d).total; };
        VectorXd fd = oracle::fd_gradient(f, x);
        std::set<ParamGroup> seen;
        std::map<ParamGroup, double> gw;
        for (const auto& s : lay.slices) {
            seen.insert(s.group);
            for (Index i = 0; i < s.size; ++i) {
                Index k = s.offset + i;
                double den = std::max({std::abs(fd(k)), std::abs(g(k)), 1e-10});
                double e = std::abs(fd(k) - g(k)) / den;
                gw[s.group] = std::max(gw[s.group], e);
                worst = std::max(worst, e);
            }
        }
        for (ParamGroup grp : all_groups())
            if (!seen.count(grp) && !(v == Variant::SS && grp == ParamGroup::SpectralVar)) covered = false;
        per << " " << to_string(v) << ":";
        for (auto& [grp, e] : gw) per << " " << to_string(grp) << "=" << fmt("%.1e", e);
        per << ";";
    }
    r.pass = worst <= 1e-4 && covered;
    r.detail = "max relative error " + fmt("%.3g", worst) + (covered ? "" : " (some group missing)") + ";" + per.str();
    return r;
}

Result psd(const Options& o) {
    Result r{5, "symmetrized psi2 is positive semi-definite", false, ""};
    std::mt19937_64 rng(o.seed + 5);
    std::uniform_int_distribution<int> dq(1, 4), dm(1, 30), dn(1, 50);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double worst = kInf;
    int count = 0;
    for (Variant v : {Variant::SS, Variant::VSS}) {
        for (int i = 0; i < 200; ++i) {
            const Index Q = dq(rng), M = dm(rng), N = dn(rng);
            Instance in = random_instance(rng, N, M, Q, v == Variant::VSS);
            if (i % 4 == 0) {
                // clustered basis: nearly repeated spectral points
                for (Index m = 1; m < M; ++m) {
                    in.basis.z.row(m) = in.basis.z.row(0).array() + 1e-7 * ud(rng);
                    in.basis.u.row(m) = in.basis.u.row(0);
                    in.basis.b(m) = in.basis.b(0) + 1e-7 * ud(rng);
                }
            }
            if (i % 5 == 1) in.lam *= 20.0;
            PsiStats ps = psi_stats(in.mu, in.lam, in.basis, in.hyper, v, true);
            worst = std::min(worst, min_eig_sym(ps.psi2));
            for (const auto& P : ps.psi2_per_sample) worst = std::min(worst, min_eig_sym(P));
            ++count;
        }
    }
    r.pass = worst >= -1e-10;
    r.detail = std::to_string(count) + " instances (sums and per-sample terms), min eigenvalue " + fmt("%.3g", worst);
    return r;
}

Result distributed_equality(const Options& o) {
    Result r{6, "distributed bound equals the serial objective for 1, 2, 4 and 7 workers", false, ""};
    std::mt19937_64 rng(o.seed + 6);
    double worst = 0.0;
    bool identical = true;
    for (Variant v : {Variant::SS, Variant::VSS}) {
        const Index N = 150, Q = 2;
        ModelConfig c;
        c.L = 2;
        c.Hx = 4;
        c.Hh = 3;
        c.M = 8;
        c.variant = v;
        Dataset d = toy_data(rng, N, Q);
        Model m = random_model(rng, c, N, Q);
        RevarbProblem p = build_problem(m, d);
        const double serial = revarb_objective(p).total;
        double first = 0.0;
        for (int w : {1, 2, 4, 7}) {
            double t = distributed_objective(p, w).total;
            double e = evaluate(m, d, true, w).report.total;
            if (w == 1) first = t;
            if (t != first || e != first) identical = false;
            worst = std::max(worst, std::abs(t - serial) / std::abs(serial));
        }
    }
    r.pass = worst <= 1e-10 && identical;
    r.detail = "max relative difference to serial " + fmt("%.3g", worst) +
               (identical ? ", bit-identical across worker counts" : ", totals differ across worker counts");
    return r;
}

Result degenerate_limits(const Options& o) {
    Result r{7, "small spectral variance recovers SS, exact inputs recover the feature map", false, ""};
    std::mt19937_64 rng(o.seed + 7);
    double worst = 0.0;
    bool exact = true;
    for (int i = 0; i < 20; ++i) {
        Instance in = random_instance(rng, 6, 5, 3, true);
        in.basis.beta.setConstant(1e-10);
        PsiStats vs = psi_stats(in.mu, in.lam, in.basis, in.hyper, Variant::VSS);
        SpectralBasis ss = in.basis;
        ss.beta.resize(0, 0);
        PsiStats sv = psi_stats(in.mu, in.lam, ss, in.hyper, Variant::SS);
        worst = std::max({worst, (vs.psi1 - sv.psi1).cwiseAbs().maxCoeff(), (vs.psi2 - sv.psi2).cwiseAbs().maxCoeff()});

        MatrixXd zero = MatrixXd::Zero(in.mu.rows(), in.mu.cols());
        MatrixXd p1 = psi1_ss(in.mu, zero, ss, in.hyper);
        MatrixXd F = feature_matrix(in.mu, ss, in.hyper);
        if (!(p1.array() == F.array()).all()) {
            exact = false;
            if (o.verbose) std::printf("  instance %d: max row difference %.3g\n", i, (p1 - F).cwiseAbs().maxCoeff());
        }
    }
    r.pass = worst <= 1e-6 && exact;
    r.detail = "max |VSS - SS| " + fmt("%.3g", worst) + (exact ? ", exact-input rows equal features bitwise" :
                                                                   ", exact-input rows differ from features");
    return r;
}

std::vector<std::function<Result(const Options&)>> all() {
    return {psi_monte_carlo, bound_tightness, optimality, gradient_check, psd, distributed_equality, degenerate_limits};
}

}  // namespace drgp::checks

namespace drgp::checks {

const std::vector<BenchGate>& bench_gates() {
    static const std::vector<BenchGate> g = {
        {8, "drive", 0.0, 0.37},
        {9, "damper", 0.0, 6.9},
        {10, "actuator", 0.0, 0.43},
        {11, "drive-gp-ss", 0.30, 0.45},
    };
    return g;
}

}  // namespace drgp::checks
