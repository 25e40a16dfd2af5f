#include "drgp/trainer.hpp"

#include "drgp/parallel.hpp"

#include <ceres/ceres.h>

#include <chrono>
#include <cmath>
#include <memory>

namespace drgp {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

class FnAdapter : public ceres::FirstOrderFunction {
public:
    FnAdapter(const Objective& fn, int n) : fn_(fn), n_(n) {}
    bool Evaluate(const double* p, double* cost, double* grad) const override {
        VectorXd x = Eigen::Map<const VectorXd>(p, n_), g;
        bool ok = fn_(x, cost, grad ? &g : nullptr);
        if (!ok || !std::isfinite(*cost)) return false;
        if (grad) {
            if (g.size() != n_ || !g.allFinite()) return false;
            Eigen::Map<VectorXd>(grad, n_) = g;
        }
        return true;
    }
    int NumParameters() const override { return n_; }

private:
    const Objective& fn_;
    int n_;
};

class Recorder : public ceres::IterationCallback {
public:
    Recorder(std::vector<HistoryRecord>& h, int phase, int first, double t0) : h_(h), phase_(phase), first_(first), t0_(t0) {}
    ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
        // iteration 0 of a later phase repeats the last record of the previous one
        if (s.iteration == 0 && first_ > 0) return ceres::SOLVER_CONTINUE;
        if (s.iteration > 0 && !s.step_is_successful) return ceres::SOLVER_CONTINUE;
        HistoryRecord r;
        r.iteration = first_ + s.iteration;
        r.phase = phase_;
        r.loss = s.cost;
        r.grad_norm = s.gradient_norm;
        r.seconds = t0_ + s.cumulative_time_in_seconds;
        h_.push_back(r);
        return ceres::SOLVER_CONTINUE;
    }

private:
    std::vector<HistoryRecord>& h_;
    int phase_, first_;
    double t0_;
};

}  // namespace

void TrainConfig::validate() const {
    if (I1 < 0 || I2 < 1 || I1 >= I2) throw Error("train config: need 0 <= I1 < I2");
    if (restarts < 1) throw Error("train config: restarts must be >= 1");
    if (!(beta_init > 0) || !(lambda_init > 0) || !(sigma_noise_init > 0) || !(sigma_power_init > 0))
        throw Error("train config: initial variances must be positive");
}

std::string to_string(LengthscaleRule r) { return r == LengthscaleRule::Range ? "range" : "sqrt-range"; }

LengthscaleRule parse_lengthscale_rule(const std::string& s) {
    if (s == "range") return LengthscaleRule::Range;
    if (s == "sqrt-range") return LengthscaleRule::SqrtRange;
    throw Error("unknown lengthscale rule '" + s + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 step
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MinimizeResult minimize_lbfgs(const Objective& fn, const VectorXd& x0, int max_iterations, double grad_tol, int phase,
                              int first_iteration, double t0) {
    MinimizeResult res;
    res.x = x0;
    if (x0.size() == 0 || max_iterations <= 0) {
        if (!fn(x0, &res.f, nullptr)) throw Error("minimize: objective invalid at the starting point");
        res.termination = "nothing to optimize";
        return res;
    }
    ceres::GradientProblem problem(new FnAdapter(fn, (int)x0.size()));
    ceres::GradientProblemSolver::Options o;
    o.line_search_direction_type = ceres::LBFGS;
    o.line_search_type = ceres::WOLFE;
    o.max_lbfgs_rank = 10;
    o.line_search_sufficient_function_decrease = 1e-4;
    o.line_search_sufficient_curvature_decrease = 0.9;
    o.max_num_iterations = max_iterations;
    o.gradient_tolerance = grad_tol;
    o.function_tolerance = 1e-15;
    o.parameter_tolerance = 1e-15;
    o.logging_type = ceres::SILENT;
    o.minimizer_progress_to_stdout = false;
    Recorder rec(res.history, phase, first_iteration, t0);
    o.callbacks.push_back(&rec);
    ceres::GradientProblemSolver::Summary s;
    ceres::Solve(o, problem, res.x.data(), &s);
    if (s.termination_type == ceres::FAILURE && s.iterations.empty())
        throw Error("minimize: " + s.message);
    res.f = s.final_cost;
    res.iterations = s.iterations.empty() ? 0 : s.iterations.back().iteration;
    res.termination = s.message;
    return res;
}

double lengthscale_from_range(double range, LengthscaleRule rule) {
    if (!(range > 0) || !std::isfinite(range)) return 1.0;
    return rule == LengthscaleRule::SqrtRange ? std::sqrt(range) : range;
}

Model initialize(const ModelConfig& cfg, const TrainConfig& tc, const Dataset& data, std::uint64_t seed) {
    cfg.validate();
    tc.validate();
    if (data.size() == 0) throw Error("initialize: empty dataset");
    data.validate();
    const Index N = data.size(), Q = data.dim();
    if (N <= cfg.Hx) throw Error("initialize: need N > H_x");
    const Index T = cfg.latent_length(N);

    std::vector<LatentState> latent(cfg.L);
    for (auto& st : latent) {
        st.mu.resize(T);
        st.lambda = VectorXd::Constant(T, tc.lambda_init);
        for (Index j = 0; j < T; ++j) {
            Index t = j + cfg.Hx - cfg.Hh;
            st.mu(j) = t >= 0 ? data.outputs(t) : 0.0;
        }
    }
    auto inputs = build_layer_inputs(cfg, latent, data);

    Model m;
    m.config = cfg;
    for (int l = 0; l <= cfg.L; ++l) {
        const MatrixXd& X = inputs[l].mu;
        Hyperparams h;
        h.sigma_power = tc.sigma_power_init;
        h.sigma_noise = tc.sigma_noise_init;
        h.lengthscales.resize(X.cols());
        for (Index q = 0; q < X.cols(); ++q)
            h.lengthscales(q) = lengthscale_from_range(X.col(q).maxCoeff() - X.col(q).minCoeff(), tc.lengthscale_rule);
        h.periods = VectorXd::Constant(X.cols(), kInf);
        SpectralBasis s = init_basis(cfg.M, X.cols(), derive_seed(seed, (std::uint64_t)l), tc.u_init, X);
        if (cfg.variant == Variant::VSS) s.beta = MatrixXd::Constant(cfg.M, X.cols(), tc.beta_init);
        m.layers.push_back(LayerParams::from(h, s));
    }
    for (const auto& st : latent) m.latent.push_back(LatentParams::from(st));
    m.validate(N, Q);
    return m;
}

void check_finite(const BoundReport& r) {
    for (size_t l = 0; l < r.per_layer.size(); ++l)
        if (!std::isfinite(r.per_layer[l]))
            throw Error("objective is not finite: bound of layer " + std::to_string(l + 1) + " = " +
                        std::to_string(r.per_layer[l]));
    auto chk = [](double v, const char* name) {
        if (!std::isfinite(v)) throw Error(std::string("objective is not finite: ") + name + " = " + std::to_string(v));
    };
    chk(r.kl_omega, "spectral KL");
    chk(r.kl_H, "initial state KL");
    chk(r.entropy_H, "latent entropy");
    chk(r.latent_var_penalty, "latent variance term");
    chk(r.total, "total");
}

TrainResult train(const Model& init, const Dataset& data, const TrainConfig& tc) {
    tc.validate();
    auto start = Clock::now();
    TrainResult res;
    res.model = init;
    check_finite(evaluate(init, data, false, tc.workers).report);

    auto run_phase = [&](const GroupSet& frozen, int iterations, int phase) {
        if (iterations <= 0) return;
        ParamVector pv = flatten_params(res.model, frozen);
        const Model base = res.model;
        Objective fn = [&](const VectorXd& x, double* f, VectorXd* g) {
            ParamVector p{x, pv.layout};
            Model m = unflatten_params(p, base);
            try {
                Evaluation ev = evaluate(m, data, g != nullptr, tc.workers);
                *f = -ev.report.total;
                if (g) *g = -flatten_with(ev.grad, pv.layout);
            } catch (const FactorError&) {
                return false;
            }
            return std::isfinite(*f);
        };
        int first = res.history.empty() ? 0 : res.history.back().iteration;
        MinimizeResult mr = minimize_lbfgs(fn, pv.values, iterations, tc.grad_tol, phase, first, since(start));
        res.history.insert(res.history.end(), mr.history.begin(), mr.history.end());
        res.model = unflatten_params(ParamVector{mr.x, pv.layout}, base);
    };

    GroupSet p1 = tc.frozen;
    p1.insert(tc.phase1_frozen.begin(), tc.phase1_frozen.end());
    run_phase(p1, tc.I1, 1);
    run_phase(tc.frozen, tc.I2 - tc.I1, 2);
    res.report = evaluate(res.model, data, false, tc.workers).report;
    res.seconds = since(start);
    return res;
}

RestartResult train_restarts(const ModelConfig& cfg, const Dataset& data, const TrainConfig& tc,
                             const Dataset* validation) {
    tc.validate();
    if (tc.select_by_validation && !validation) throw Error("train: validation selection needs a validation set");
    RestartResult out;
    out.runs.resize(tc.restarts);
    const int workers = resolve_workers(tc.workers);
    const int outer = std::min(workers, tc.restarts);
    TrainConfig inner = tc;
    inner.workers = std::max(1, workers / outer);
    parallel_for(tc.restarts, outer, [&](Index r) {
        std::uint64_t seed = derive_seed(tc.seed, 1000 + (std::uint64_t)r);
        Model m = initialize(cfg, inner, data, seed);
        out.runs[r] = train(m, data, inner);
        out.runs[r].seed = seed;
    });
    if (validation) {
        for (const auto& run : out.runs) {
            Posterior post = make_posterior(run.model, data);
            SimTrace tr = free_simulate(post, validation->inputs, Warmup::Continuation);
            out.validation_rmse.push_back(rmse(tr.y_mean(), validation->outputs));
        }
    }
    for (int r = 1; r < tc.restarts; ++r) {
        bool better = tc.select_by_validation ? out.validation_rmse[r] < out.validation_rmse[out.best]
                                              : out.runs[r].report.total > out.runs[out.best].report.total;
        if (better) out.best = r;
    }
    return out;
}

}  // namespace drgp
