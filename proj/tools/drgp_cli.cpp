#include "drgp/harness.hpp"
#include "drgp/parallel.hpp"

#include "checks.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace drgp;

namespace {

struct Knobs {
    std::string family = "drgp", variant = "ss", norm = "stddev", warmup = "continuation";
    std::string ls_rule = "sqrt-range", u_init = "subset", frozen = "phase,spectral_var";
    std::string phase1 = "sigma_power,sigma_noise";
    int workers = 0;
};

void add_model_flags(CLI::App* c, ExperimentSpec& s, Knobs& k) {
    c->add_option("--family", k.family, "drgp, gp-ss or gp-full")->capture_default_str();
    c->add_option("--variant", k.variant, "ss or vss")->capture_default_str();
    c->add_option("-L,--layers", s.model.L, "hidden layers")->capture_default_str();
    c->add_option("-M,--features", s.model.M, "spectral points per layer")->capture_default_str();
    c->add_option("--hx", s.model.Hx, "exogenous lag window")->capture_default_str();
    c->add_option("--hh", s.model.Hh, "latent lag window")->capture_default_str();
    c->add_option("--narx-hy", s.narx_hy, "output lags of the NARX baselines")->capture_default_str();
    c->add_option("--narx-hx", s.narx_hx, "input lags of the NARX baselines")->capture_default_str();
    c->add_option("--narx-iterations", s.narx_iterations)->capture_default_str();
    c->add_option("--i1", s.train.I1, "iterations with the phase-1 groups frozen")->capture_default_str();
    c->add_option("--i2", s.train.I2, "total iterations")->capture_default_str();
    c->add_option("--restarts", s.train.restarts)->capture_default_str();
    c->add_option("--seed", s.train.seed)->capture_default_str();
    c->add_option("--workers", k.workers, "threads (DRGP_WORKERS overrides)");
    c->add_option("--norm", k.norm, "stddev or variance")->capture_default_str();
    c->add_flag("--report-normalized", s.report_normalized, "report RMSE on the normalized scale");
    c->add_option("--warmup", k.warmup, "continuation or cold")->capture_default_str();
    c->add_option("--lengthscale-rule", k.ls_rule, "sqrt-range or range")->capture_default_str();
    c->add_option("--u-init", k.u_init, "subset or zero")->capture_default_str();
    c->add_option("--frozen", k.frozen, "groups frozen throughout")->capture_default_str();
    c->add_option("--phase1-frozen", k.phase1, "groups frozen for the first phase")->capture_default_str();
    c->add_option("--lambda-init", s.train.lambda_init)->capture_default_str();
    c->add_option("--beta-init", s.train.beta_init)->capture_default_str();
    c->add_flag("--select-by-test", s.train.select_by_validation, "pick the restart with the lowest test RMSE");
}

void apply_knobs(ExperimentSpec& s, const Knobs& k) {
    s.family = parse_family(k.family);
    s.model.variant = parse_variant(k.variant);
    s.norm = parse_norm_mode(k.norm);
    s.warmup = parse_warmup(k.warmup);
    s.train.lengthscale_rule = parse_lengthscale_rule(k.ls_rule);
    s.train.u_init = parse_u_init(k.u_init);
    s.train.frozen = parse_groups(k.frozen);
    s.train.phase1_frozen = parse_groups(k.phase1);
    s.train.workers = resolve_workers(k.workers);
}

int run_train(ExperimentSpec& s, const Knobs& k) {
    apply_knobs(s, k);
    ExperimentResult r = run_experiment(s);
    std::printf("rmse=%.10g\n", r.rmse);
    for (size_t i = 0; i < r.objectives.size(); ++i) std::printf("objective_%zu=%.10g\n", i, r.objectives[i]);
    std::printf("best_restart=%d\ntrain_seconds=%.3f\n", r.best, r.train_seconds);
    if (!s.out_dir.empty()) std::printf("report=%s\n", (std::filesystem::path(s.out_dir) / "report.txt").c_str());
    return 0;
}

int run_simulate(const std::string& model_path, const std::string& data_path, int output_col, const std::string& warm,
                 bool report_normalized, const std::string& out) {
    SavedModel sm = load_model(model_path);
    Dataset raw = load_csv(data_path, output_col);
    Dataset d = sm.norm.apply(raw);
    SimTrace tr = free_simulate(sm.posterior, d.inputs, parse_warmup(warm));
    const Index off = d.size() - tr.size();
    VectorXd yt = report_normalized ? VectorXd(d.outputs.tail(tr.size())) : VectorXd(raw.outputs.tail(tr.size()));
    VectorXd yp = tr.y_mean(), yv = tr.y_var();
    if (!report_normalized) {
        yp = yp.unaryExpr([&](double v) { return sm.norm.output_value(v); });
        yv = yv.unaryExpr([&](double v) { return sm.norm.output_variance(v); });
    }
    if (!out.empty()) {
        std::ofstream f(out);
        f << "time,y_true,y_pred,lower,upper\n";
        f.precision(17);
        for (Index t = 0; t < yp.size(); ++t) {
            double sd = std::sqrt(yv(t));
            f << off + t << "," << yt(t) << "," << yp(t) << "," << yp(t) - 2 * sd << "," << yp(t) + 2 * sd << "\n";
        }
    }
    std::printf("steps=%ld\nrmse=%.10g\n", (long)yp.size(), rmse(yp, yt));
    return 0;
}

int run_bench(const std::string& data_dir, const std::vector<std::string>& names, const std::string& out_dir,
              int workers, bool select_by_test) {
    int failed = 0, ran = 0;
    for (const auto& g : checks::bench_gates()) {
        if (!names.empty() && std::find(names.begin(), names.end(), g.preset) == names.end()) continue;
        ExperimentSpec s = bench_preset(g.preset, data_dir);
        s.train.workers = resolve_workers(workers);
        s.train.select_by_validation = select_by_test;
        if (!out_dir.empty()) s.out_dir = (std::filesystem::path(out_dir) / g.preset).string();
        if (!std::filesystem::exists(s.data_path)) {
            std::printf("BLOCKED %d %s: %s not found\n", g.id, g.preset.c_str(), s.data_path.c_str());
            continue;
        }
        ++ran;
        ExperimentResult r = run_experiment(s);
        bool ok = r.rmse >= g.lo && r.rmse <= g.hi;
        failed += !ok;
        std::printf("%s %d %s: rmse %.4f, band [%.2f, %.2f], %.0f s\n", ok ? "PASS" : "FAIL", g.id, g.preset.c_str(),
                    r.rmse, g.lo, g.hi, r.total_seconds);
    }
    if (!ran) return 77;
    return failed ? 1 : 0;
}

int run_check(bool fast, bool only_fast_criteria) {
    checks::Options o;
    if (fast) {
        o.mc_draws = 100000;
        o.mc_instances = 5;
    }
    int failed = 0;
    auto list = checks::all();
    for (auto& fn : list) {
        if (only_fast_criteria && &fn == &list.front()) continue;
        auto t = std::chrono::steady_clock::now();
        checks::Result r = fn(o);
        double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
        std::printf("%s %d %s (%s) [%.1f s]\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str(), sec);
        failed += !r.pass;
    }
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep recurrent sparse spectrum Gaussian processes"};
    app.require_subcommand(1);

    ExperimentSpec spec;
    Knobs knobs;
    auto* train = app.add_subcommand("train", "train on a CSV split, simulate the test part and write a report");
    train->add_option("--data", spec.data_path, "CSV file, header row, output column last")->required();
    train->add_option("--output-col", spec.output_col, "output column index (negative counts from the end)");
    train->add_option("--train", spec.n_train, "training rows (prefix)")->required();
    train->add_option("--test", spec.n_test, "test rows following the training rows (default: the rest)");
    train->add_option("--out", spec.out_dir, "directory for report.txt, predictions.csv, history.txt, model.json");
    train->add_option("--name", spec.name);
    add_model_flags(train, spec, knobs);

    std::string model_path, data_path, warm = "continuation", out;
    int output_col = -1;
    bool report_normalized = false;
    auto* sim = app.add_subcommand("simulate", "free simulation with a saved model");
    sim->add_option("--model", model_path, "model.json written by train")->required();
    sim->add_option("--data", data_path, "CSV with the rows to simulate")->required();
    sim->add_option("--output-col", output_col);
    sim->add_option("--warmup", warm)->capture_default_str();
    sim->add_flag("--report-normalized", report_normalized);
    sim->add_option("--out", out, "prediction CSV");

    std::string data_dir = "data", bench_out;
    std::vector<std::string> names;
    int bench_workers = 0;
    bool select_by_test = false;
    auto* bench = app.add_subcommand("bench", "benchmark presets with their RMSE bands");
    bench->add_option("--data-dir", data_dir)->capture_default_str();
    bench->add_option("--only", names, "preset names (drive, damper, actuator, drive-gp-ss)");
    bench->add_option("--out", bench_out, "directory for per-preset reports");
    bench->add_option("--workers", bench_workers);
    bench->add_flag("--select-by-test", select_by_test);

    bool fast = false, skip_mc = false;
    auto* check = app.add_subcommand("check", "run the oracle and property checks");
    check->add_flag("--fast", fast, "fewer Monte-Carlo draws (not the acceptance setting)");
    check->add_flag("--skip-mc", skip_mc, "skip the Monte-Carlo comparison");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return run_train(spec, knobs);
        if (*sim) return run_simulate(model_path, data_path, output_col, warm, report_normalized, out);
        if (*bench) return run_bench(data_dir, names, bench_out, bench_workers, select_by_test);
        if (*check) return run_check(fast, skip_mc);
    } catch (const StageError& e) {
        std::fprintf(stderr, "error in stage %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
