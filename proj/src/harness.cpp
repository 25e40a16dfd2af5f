#include "drgp/harness.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace drgp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

json jvec(const VectorXd& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}
VectorXd to_vec(const json& a) {
    VectorXd v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v(i) = num(a[i]);
    return v;
}
json jmat(const MatrixXd& m) {
    json a = json::array();
    for (Index i = 0; i < m.rows(); ++i) a.push_back(jvec(m.row(i).transpose()));
    return a;
}
MatrixXd to_mat(const json& a, Index cols) {
    MatrixXd m(a.size(), cols);
    for (size_t i = 0; i < a.size(); ++i) {
        if ((Index)a[i].size() != cols) throw Error("model file: ragged matrix");
        m.row(i) = to_vec(a[i]).transpose();
    }
    return m;
}

double elapsed(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

Dataset parse_csv(const std::string& text, int output_col, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (header.empty()) {
            header = cells;
            continue;
        }
        if (cells.size() != header.size())
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " columns, found " + std::to_string(cells.size()));
        std::vector<double> r;
        for (const auto& c : cells) {
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(c, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (c.empty() || used != c.size() || !std::isfinite(v))
                throw ParseError(source + ":" + std::to_string(lineno) + ": non-numeric cell '" + c + "'");
            r.push_back(v);
        }
        rows.push_back(std::move(r));
    }
    if (header.empty()) throw ParseError(source + ": empty file");
    if (rows.empty()) throw ParseError(source + ": no data rows");
    const int C = (int)header.size();
    if (C < 2) throw ParseError(source + ": need at least one input and one output column");
    const int oc = output_col < 0 ? C + output_col : output_col;
    if (oc < 0 || oc >= C) throw ParseError(source + ": output column " + std::to_string(output_col) + " out of range");
    Dataset d;
    d.inputs.resize(rows.size(), C - 1);
    d.outputs.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        int k = 0;
        for (int c = 0; c < C; ++c) {
            if (c == oc)
                d.outputs(i) = rows[i][c];
            else
                d.inputs(i, k++) = rows[i][c];
        }
    }
    for (int c = 0; c < C; ++c)
        if (c != oc) d.names.push_back(header[c]);
    d.names.push_back(header[oc]);
    return d;
}

Dataset load_csv(const std::string& path, int output_col) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), output_col, path);
}

void write_csv(const std::string& path, const Dataset& d) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    const Index Q = d.dim();
    for (Index q = 0; q < Q; ++q) f << ((Index)d.names.size() == Q + 1 ? d.names[q] : "x" + std::to_string(q + 1)) << ",";
    f << ((Index)d.names.size() == Q + 1 ? d.names[Q] : "y") << "\n";
    for (Index i = 0; i < d.size(); ++i) {
        for (Index q = 0; q < Q; ++q) f << fmt(d.inputs(i, q)) << ",";
        f << fmt(d.outputs(i)) << "\n";
    }
}

std::string to_string(NormMode m) { return m == NormMode::Variance ? "variance" : "stddev"; }
NormMode parse_norm_mode(const std::string& s) {
    if (s == "stddev") return NormMode::StdDev;
    if (s == "variance") return NormMode::Variance;
    throw Error("unknown normalization mode '" + s + "'");
}
std::string to_string(UInit u) { return u == UInit::Zero ? "zero" : "subset"; }
UInit parse_u_init(const std::string& s) {
    if (s == "zero") return UInit::Zero;
    if (s == "subset") return UInit::SubsetOfInputs;
    throw Error("unknown pseudo-input init '" + s + "'");
}

GroupSet parse_groups(const std::string& csv) {
    GroupSet g;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        bool found = false;
        for (ParamGroup p : all_groups())
            if (to_string(p) == tok) {
                g.insert(p);
                found = true;
            }
        if (!found) throw Error("unknown parameter group '" + tok + "'");
    }
    return g;
}

std::string to_string(const GroupSet& g) {
    std::string s;
    for (ParamGroup p : g) s += (s.empty() ? "" : ",") + to_string(p);
    return s;
}

std::string to_string(Family f) {
    switch (f) {
        case Family::GpSs: return "gp-ss";
        case Family::GpFull: return "gp-full";
        default: return "drgp";
    }
}
Family parse_family(const std::string& s) {
    if (s == "drgp") return Family::DRGP;
    if (s == "gp-ss") return Family::GpSs;
    if (s == "gp-full") return Family::GpFull;
    throw Error("unknown model family '" + s + "'");
}

void save_model(const std::string& path, const SavedModel& sm) {
    const Posterior& p = sm.posterior;
    json j;
    j["format"] = "drgp-posterior-1";
    j["config"] = {{"L", p.config.L}, {"Hx", p.config.Hx}, {"Hh", p.config.Hh}, {"M", p.config.M},
                   {"variant", to_string(p.config.variant)}, {"D", p.config.D}};
    j["Q"] = p.Q;
    json layers = json::array();
    for (const auto& lp : p.layers) {
        json l;
        l["sigma_power"] = lp.hyper.sigma_power;
        l["sigma_noise"] = lp.hyper.sigma_noise;
        l["lengthscales"] = jvec(lp.hyper.lengthscales);
        l["periods"] = jvec(lp.hyper.periods);
        l["z"] = jmat(lp.basis.z);
        l["beta"] = jmat(lp.basis.beta);
        l["u"] = jmat(lp.basis.u);
        l["b"] = jvec(lp.basis.b);
        l["m"] = jvec(lp.m);
        l["S"] = jmat(lp.S);
        layers.push_back(l);
    }
    j["layers"] = layers;
    j["x_tail"] = jmat(p.x_tail);
    json mt = json::array(), lt = json::array();
    for (size_t l = 0; l < p.mu_tail.size(); ++l) {
        mt.push_back(jvec(p.mu_tail[l]));
        lt.push_back(jvec(p.lam_tail[l]));
    }
    j["mu_tail"] = mt;
    j["lambda_tail"] = lt;
    j["norm"] = {{"mode", to_string(sm.norm.mode)}, {"mean", jvec(sm.norm.mean)}, {"scale", jvec(sm.norm.scale)}};
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << j.dump(1) << "\n";
}

SavedModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (j.value("format", "") != "drgp-posterior-1") throw ParseError(path + ": not a drgp model file");
    SavedModel sm;
    Posterior& p = sm.posterior;
    const auto& c = j.at("config");
    p.config.L = c.at("L");
    p.config.Hx = c.at("Hx");
    p.config.Hh = c.at("Hh");
    p.config.M = c.at("M");
    p.config.variant = parse_variant(c.at("variant"));
    p.config.D = c.at("D");
    p.config.validate();
    p.Q = j.at("Q");
    for (const auto& l : j.at("layers")) {
        LayerPredictor lp;
        lp.variant = p.config.variant;
        lp.hyper.sigma_power = l.at("sigma_power");
        lp.hyper.sigma_noise = l.at("sigma_noise");
        lp.hyper.lengthscales = to_vec(l.at("lengthscales"));
        lp.hyper.periods = to_vec(l.at("periods"));
        const Index Ql = lp.hyper.lengthscales.size();
        lp.basis.z = to_mat(l.at("z"), Ql);
        lp.basis.beta = to_mat(l.at("beta"), Ql);
        lp.basis.u = to_mat(l.at("u"), Ql);
        lp.basis.b = to_vec(l.at("b"));
        lp.m = to_vec(l.at("m"));
        lp.S = to_mat(l.at("S"), lp.m.size());
        lp.trained = true;
        p.layers.push_back(std::move(lp));
    }
    if ((int)p.layers.size() != p.config.L + 1) throw ParseError(path + ": layer count does not match L");
    p.x_tail = to_mat(j.at("x_tail"), p.Q);
    for (const auto& v : j.at("mu_tail")) p.mu_tail.push_back(to_vec(v));
    for (const auto& v : j.at("lambda_tail")) p.lam_tail.push_back(to_vec(v));
    sm.norm.mode = parse_norm_mode(j.at("norm").at("mode"));
    sm.norm.mean = to_vec(j.at("norm").at("mean"));
    sm.norm.scale = to_vec(j.at("norm").at("scale"));
    return sm;
}

void ExperimentSpec::validate() const {
    if (data_path.empty()) throw Error("experiment: no data path");
    if (!fs::exists(data_path)) throw Error("experiment: data file " + data_path + " does not exist");
    if (n_train < 1 || n_test < 0) throw Error("experiment: invalid split sizes");
    model.validate();
    train.validate();
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    auto t0 = std::chrono::steady_clock::now();
    std::string stage = "config";
    ExperimentResult res;
    try {
        spec.validate();
        stage = "load";
        Dataset all = load_csv(spec.data_path, spec.output_col);
        Index n_test = spec.n_test ? spec.n_test : all.size() - spec.n_train;
        if (spec.n_train + n_test > all.size() || n_test < 1)
            throw Error("split " + std::to_string(spec.n_train) + "/" + std::to_string(n_test) + " exceeds " +
                        std::to_string(all.size()) + " rows");

        stage = "normalize";
        Dataset train_raw = all.slice(0, spec.n_train), test_raw = all.slice(spec.n_train, n_test);
        res.norm = fit_normalization(train_raw, spec.norm);
        Dataset train = res.norm.apply(train_raw), test = res.norm.apply(test_raw);

        stage = "train";
        auto tt = std::chrono::steady_clock::now();
        VectorXd pred_n, var_n;
        std::vector<std::pair<int, HistoryRecord>> history;
        std::optional<SavedModel> saved;
        if (spec.family == Family::DRGP) {
            RestartResult rr = train_restarts(spec.model, train, spec.train, &test);
            res.train_seconds = elapsed(tt);
            res.best = rr.best;
            res.test_rmse = rr.validation_rmse;
            for (size_t r = 0; r < rr.runs.size(); ++r) {
                res.objectives.push_back(rr.runs[r].report.total);
                for (const auto& h : rr.runs[r].history) history.emplace_back((int)r, h);
            }
            stage = "simulate";
            Posterior post = make_posterior(rr.best_run().model, train);
            SimTrace tr = free_simulate(post, test.inputs, spec.warmup);
            pred_n = tr.y_mean();
            var_n = tr.y_var();
            saved = SavedModel{std::move(post), res.norm};
        } else {
            NarxDesign d = build_narx(train, spec.narx_hy, spec.narx_hx);
            NarxFitConfig fc;
            fc.iterations = spec.narx_iterations;
            fc.lengthscale_rule = spec.train.lengthscale_rule;
            fc.workers = spec.train.workers;
            std::function<std::pair<double, double>(const VectorXd&)> predict;
            GpSsNarx ss;
            GpFullNarx full;
            if (spec.family == Family::GpSs) {
                ss = fit_gp_ss_narx(d, spec.model.M, derive_seed(spec.train.seed, 1000), fc);
                res.objectives.push_back(ss.log_ml);
                for (const auto& h : ss.history) history.emplace_back(0, h);
                predict = [&](const VectorXd& u) { return ss.predict(u); };
            } else {
                full = fit_gp_full_narx(d, fc);
                res.objectives.push_back(full.log_ml);
                for (const auto& h : full.history) history.emplace_back(0, h);
                predict = [&](const VectorXd& u) { return full.predict(u); };
            }
            res.train_seconds = elapsed(tt);
            stage = "simulate";
            NarxTrace tr = narx_simulate(predict, spec.narx_hy, spec.narx_hx, train, test.inputs);
            pred_n = tr.mean;
            var_n = tr.var;
            res.test_rmse.push_back(rmse(pred_n, test.outputs));
        }
        const Index off = test.size() - pred_n.size();  // cold warmup skips the first H_x rows

        stage = "report";
        if (spec.report_normalized) {
            res.y_true = test.outputs.tail(pred_n.size());
            res.y_pred = pred_n;
            res.y_var = var_n;
        } else {
            res.y_true = test_raw.outputs.tail(pred_n.size());
            res.y_pred = pred_n.unaryExpr([&](double v) { return res.norm.output_value(v); });
            res.y_var = var_n.unaryExpr([&](double v) { return res.norm.output_variance(v); });
        }
        res.rmse = rmse(res.y_pred, res.y_true);
        if (!spec.report_normalized) {
            // per-restart test errors were taken on the normalized scale; the output map is affine
            double k = std::abs(res.norm.output_value(1.0) - res.norm.output_value(0.0));
            for (double& e : res.test_rmse) e *= k;
        }
        res.total_seconds = elapsed(t0);

        if (!spec.out_dir.empty()) {
            fs::create_directories(spec.out_dir);
            const fs::path dir(spec.out_dir);
            {
                std::ofstream f(dir / "predictions.csv");
                f << "time,y_true,y_pred,lower,upper\n";
                for (Index t = 0; t < res.y_pred.size(); ++t) {
                    double sd = std::sqrt(res.y_var(t));
                    f << spec.n_train + off + t << "," << fmt(res.y_true(t)) << "," << fmt(res.y_pred(t)) << ","
                      << fmt(res.y_pred(t) - 2 * sd) << "," << fmt(res.y_pred(t) + 2 * sd) << "\n";
                }
            }
            {
                std::ofstream f(dir / "history.txt");
                for (const auto& [r, h] : history)
                    f << "restart=" << r << " iteration=" << h.iteration << " phase=" << h.phase
                      << " objective=" << fmt(-h.loss) << " grad_norm=" << fmt(h.grad_norm)
                      << " seconds=" << fmt(h.seconds) << "\n";
            }
            if (saved) save_model((dir / "model.json").string(), *saved);
            std::ofstream f(dir / "report.txt");
            const auto& m = spec.model;
            const auto& tc = spec.train;
            f << "name=" << spec.name << "\n"
              << "data=" << spec.data_path << "\n"
              << "output_col=" << spec.output_col << "\n"
              << "n_train=" << spec.n_train << "\n"
              << "n_test=" << n_test << "\n"
              << "family=" << to_string(spec.family) << "\n"
              << "variant=" << to_string(m.variant) << "\n"
              << "L=" << m.L << "\nHx=" << m.Hx << "\nHh=" << m.Hh << "\nM=" << m.M << "\n"
              << "narx_hy=" << spec.narx_hy << "\nnarx_hx=" << spec.narx_hx
              << "\nnarx_iterations=" << spec.narx_iterations << "\n"
              << "I1=" << tc.I1 << "\nI2=" << tc.I2 << "\nrestarts=" << tc.restarts << "\nseed=" << tc.seed << "\n"
              << "frozen=" << to_string(tc.frozen) << "\nphase1_frozen=" << to_string(tc.phase1_frozen) << "\n"
              << "lengthscale_rule=" << to_string(tc.lengthscale_rule) << "\nu_init=" << to_string(tc.u_init) << "\n"
              << "beta_init=" << fmt(tc.beta_init) << "\nlambda_init=" << fmt(tc.lambda_init) << "\n"
              << "sigma_noise_init=" << fmt(tc.sigma_noise_init) << "\nsigma_power_init=" << fmt(tc.sigma_power_init)
              << "\ngrad_tol=" << fmt(tc.grad_tol) << "\n"
              << "select_by_test=" << (tc.select_by_validation ? 1 : 0) << "\n"
              << "norm=" << to_string(spec.norm) << "\nreport_normalized=" << (spec.report_normalized ? 1 : 0) << "\n"
              << "warmup=" << to_string(spec.warmup) << "\n"
              << "workers=" << tc.workers << "\n";
            for (size_t r = 0; r < res.objectives.size(); ++r) f << "objective_" << r << "=" << fmt(res.objectives[r]) << "\n";
            for (size_t r = 0; r < res.test_rmse.size(); ++r) f << "test_rmse_" << r << "=" << fmt(res.test_rmse[r]) << "\n";
            f << "best_restart=" << res.best << "\n"
              << "rmse=" << fmt(res.rmse) << "\n"
              << "train_seconds=" << fmt(res.train_seconds) << "\n"
              << "total_seconds=" << fmt(elapsed(t0)) << "\n";
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
    return res;
}

const std::vector<std::string>& bench_names() {
    static const std::vector<std::string> n = {"drive", "damper", "actuator", "drive-gp-ss"};
    return n;
}

ExperimentSpec bench_preset(const std::string& name, const std::string& data_dir) {
    ExperimentSpec s;
    s.name = name;
    s.model.L = 2;
    s.model.Hx = s.model.Hh = 10;
    s.model.M = 100;
    s.model.variant = Variant::SS;
    s.train.restarts = 5;
    s.out_dir = "";
    if (name == "drive" || name == "drive-gp-ss") {
        s.data_path = (fs::path(data_dir) / "drive.csv").string();
        s.n_train = 250;
        s.n_test = 250;
        if (name == "drive-gp-ss") s.family = Family::GpSs;
    } else if (name == "damper") {
        s.data_path = (fs::path(data_dir) / "damper.csv").string();
        s.n_train = 2000;
        s.n_test = 1499;
        s.model.M = 125;
    } else if (name == "actuator") {
        s.data_path = (fs::path(data_dir) / "actuator.csv").string();
        s.n_train = 512;
        s.n_test = 512;
    } else {
        throw Error("unknown benchmark '" + name + "'");
    }
    return s;
}

}  // namespace drgp
