#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drgp/features.hpp"
#include "drgp/harness.hpp"
#include "drgp/predictor.hpp"
#include "drgp/psi.hpp"
#include "drgp/trainer.hpp"

namespace py = pybind11;
using namespace drgp;

namespace {

Hyperparams hyper(double sp, double sn, const VectorXd& ls, const std::optional<VectorXd>& periods) {
    Hyperparams h;
    h.sigma_power = sp;
    h.sigma_noise = sn;
    h.lengthscales = ls;
    h.periods = periods ? *periods : VectorXd::Constant(ls.size(), kInf);
    return h;
}

SpectralBasis basis(const MatrixXd& z, const MatrixXd& u, const VectorXd& b, const std::optional<MatrixXd>& beta) {
    SpectralBasis s;
    s.z = z;
    s.u = u;
    s.b = b;
    if (beta) s.beta = *beta;
    return s;
}

Dataset dataset(const MatrixXd& X, const VectorXd& y) {
    Dataset d;
    d.inputs = X;
    d.outputs = y;
    d.validate();
    return d;
}

py::dict history_dict(const std::vector<HistoryRecord>& h) {
    std::vector<int> it, ph;
    std::vector<double> obj, gn, sec;
    for (const auto& r : h) {
        it.push_back(r.iteration);
        ph.push_back(r.phase);
        obj.push_back(-r.loss);
        gn.push_back(r.grad_norm);
        sec.push_back(r.seconds);
    }
    py::dict d;
    d["iteration"] = it;
    d["phase"] = ph;
    d["objective"] = obj;
    d["grad_norm"] = gn;
    d["seconds"] = sec;
    return d;
}

struct Fitted {
    Posterior posterior;
    std::vector<double> objectives;
    std::vector<py::dict> histories;
    int best = 0;
};

py::tuple simulate(const Posterior& p, const MatrixXd& X, const std::string& warmup) {
    SimTrace t = free_simulate(p, X, parse_warmup(warmup));
    return py::make_tuple(VectorXd(t.y_mean()), VectorXd(t.y_var()));
}

}  // namespace

PYBIND11_MODULE(_drgp, m) {
    m.doc() = "deep recurrent sparse spectrum Gaussian processes";
    py::register_exception<Error>(m, "DrgpError", PyExc_ValueError);

    m.def(
        "feature_matrix",
        [](const MatrixXd& X, const MatrixXd& z, const MatrixXd& u, const VectorXd& b, double sigma_power,
           const VectorXd& lengthscales, const std::optional<VectorXd>& periods) {
            return feature_matrix(X, basis(z, u, b, std::nullopt), hyper(sigma_power, 0.1, lengthscales, periods));
        },
        py::arg("X"), py::arg("z"), py::arg("u"), py::arg("b"), py::arg("sigma_power"), py::arg("lengthscales"),
        py::arg("periods") = py::none());

    m.def(
        "psi_stats",
        [](const MatrixXd& mu, const MatrixXd& lam, const MatrixXd& z, const MatrixXd& u, const VectorXd& b,
           double sigma_power, const VectorXd& lengthscales, const std::optional<MatrixXd>& beta,
           const std::optional<VectorXd>& periods) {
            PsiStats ps = psi_stats(mu, lam, basis(z, u, b, beta), hyper(sigma_power, 0.1, lengthscales, periods),
                                    beta ? Variant::VSS : Variant::SS);
            return py::make_tuple(ps.psi1, ps.psi2);
        },
        py::arg("mu"), py::arg("lam"), py::arg("z"), py::arg("u"), py::arg("b"), py::arg("sigma_power"),
        py::arg("lengthscales"), py::arg("beta") = py::none(), py::arg("periods") = py::none(),
        "expected features and their second moment; passing beta selects the variational variant");

    m.def(
        "optimal_bound",
        [](const MatrixXd& psi1, const MatrixXd& psi2, const VectorXd& y, double sigma_noise) {
            PsiStats ps{psi1, psi2, {}};
            return optimal_layer_bound(ps, y, sigma_noise);
        },
        py::arg("psi1"), py::arg("psi2"), py::arg("y"), py::arg("sigma_noise"));

    py::class_<Fitted>(m, "Fitted")
        .def_readonly("objectives", &Fitted::objectives)
        .def_readonly("histories", &Fitted::histories)
        .def_readonly("best", &Fitted::best)
        .def(
            "simulate",
            [](const Fitted& f, const MatrixXd& X, const std::string& warmup) {
                return simulate(f.posterior, X, warmup);
            },
            py::arg("X"), py::arg("warmup") = "continuation",
            "free simulation; returns (mean, variance) of the output")
        .def("save", [](const Fitted& f, const std::string& path) {
            Normalization id;
            id.mean = VectorXd::Zero(f.posterior.Q + 1);
            id.scale = VectorXd::Ones(f.posterior.Q + 1);
            save_model(path, SavedModel{f.posterior, id});
        });

    m.def(
        "fit",
        [](const MatrixXd& X, const VectorXd& y, int L, int M, int hx, int hh, const std::string& variant, int i1,
           int i2, int restarts, std::uint64_t seed, int workers) {
            ModelConfig c;
            c.L = L;
            c.M = M;
            c.Hx = hx;
            c.Hh = hh;
            c.variant = parse_variant(variant);
            TrainConfig tc;
            tc.I1 = i1;
            tc.I2 = i2;
            tc.restarts = restarts;
            tc.seed = seed;
            tc.workers = workers;
            Dataset d = dataset(X, y);
            RestartResult rr;
            Fitted f;
            {
                py::gil_scoped_release nogil;
                rr = train_restarts(c, d, tc);
                f.posterior = make_posterior(rr.best_run().model, d);
            }
            f.best = rr.best;
            for (const auto& r : rr.runs) {
                f.objectives.push_back(r.report.total);
                f.histories.push_back(history_dict(r.history));
            }
            return f;
        },
        py::arg("X"), py::arg("y"), py::arg("L") = 2, py::arg("M") = 100, py::arg("hx") = 10, py::arg("hh") = 10,
        py::arg("variant") = "ss", py::arg("i1") = 15, py::arg("i2") = 75, py::arg("restarts") = 5,
        py::arg("seed") = 1, py::arg("workers") = 1,
        "train on already normalized data; the best restart by objective is kept");

    m.def(
        "load_model",
        [](const std::string& path) {
            SavedModel sm = load_model(path);
            Fitted f;
            f.posterior = std::move(sm.posterior);
            return f;
        },
        py::arg("path"));

    m.def(
        "run_experiment",
        [](const std::string& data, Index n_train, Index n_test, const std::string& out, const std::string& family,
           const std::string& variant, int L, int M, int hx, int hh, int i1, int i2, int restarts,
           std::uint64_t seed) {
            ExperimentSpec s;
            s.data_path = data;
            s.n_train = n_train;
            s.n_test = n_test;
            s.out_dir = out;
            s.family = parse_family(family);
            s.model.variant = parse_variant(variant);
            s.model.L = L;
            s.model.M = M;
            s.model.Hx = hx;
            s.model.Hh = hh;
            s.narx_hy = s.narx_hx = hx;
            s.train.I1 = i1;
            s.train.I2 = i2;
            s.train.restarts = restarts;
            s.train.seed = seed;
            ExperimentResult r;
            {
                py::gil_scoped_release nogil;
                r = run_experiment(s);
            }
            py::dict d;
            d["rmse"] = r.rmse;
            d["objectives"] = r.objectives;
            d["test_rmse"] = r.test_rmse;
            d["best"] = r.best;
            d["y_true"] = r.y_true;
            d["y_pred"] = r.y_pred;
            d["y_var"] = r.y_var;
            d["train_seconds"] = r.train_seconds;
            return d;
        },
        py::arg("data"), py::arg("n_train"), py::arg("n_test") = 0, py::arg("out") = "", py::arg("family") = "drgp",
        py::arg("variant") = "ss", py::arg("L") = 2, py::arg("M") = 100, py::arg("hx") = 10, py::arg("hh") = 10,
        py::arg("i1") = 15, py::arg("i2") = 75, py::arg("restarts") = 5, py::arg("seed") = 1);
}
