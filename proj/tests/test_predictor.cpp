#include <doctest.h>

#include "drgp/predictor.hpp"
#include "drgp/trainer.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace drgp;

namespace {

Dataset series(Index N, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Dataset d;
    d.inputs.resize(N, 1);
    d.outputs.resize(N);
    for (Index i = 0; i < N; ++i) {
        d.inputs(i, 0) = std::sin(0.25 * double(i)) + 0.1 * nd(rng);
        d.outputs(i) = std::cos(0.1 * double(i)) + 0.1 * nd(rng);
    }
    return d;
}

Model init_model(int L, int M, Variant v, const Dataset& d, std::uint64_t seed) {
    ModelConfig c;
    c.L = L;
    c.Hx = 3;
    c.Hh = 2;
    c.M = M;
    c.variant = v;
    TrainConfig tc;
    tc.u_init = UInit::Zero;
    return initialize(c, tc, d, seed);
}

}  // namespace

TEST_CASE("rmse") {
    VectorXd a(2), b(2);
    a << 1, 2;
    b << 2, 4;
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(a, b) == doctest::Approx(std::sqrt(2.5)));
    CHECK(rmse(-3.0 * a, -3.0 * b) == doctest::Approx(3.0 * rmse(a, b)));
    CHECK_THROWS(rmse(a, VectorXd::Zero(3)));
    CHECK_THROWS(rmse(VectorXd(), VectorXd()));
}

TEST_CASE("predict layer trivial cases") {
    LayerPredictor p;
    CHECK_THROWS(predict_layer(p, VectorXd::Zero(1), VectorXd::Zero(1)));
    p.trained = true;
    p.basis.z.resize(0, 2);
    auto [m0, v0] = predict_layer(p, VectorXd::Zero(2), VectorXd::Zero(2));
    CHECK(m0 == 0.0);
    CHECK(v0 == 0.0);

    Dataset d = series(30, 1);
    Model m = init_model(1, 6, Variant::SS, d, 2);
    Posterior post = make_posterior(m, d);
    LayerPredictor lp = post.layers[0];
    lp.S.setZero();
    VectorXd mu = VectorXd::Random(lp.basis.dim());
    auto [mean, var] = predict_layer(lp, mu, VectorXd::Zero(mu.size()));
    CHECK(std::abs(var) < 1e-12);
    (void)mean;
}

TEST_CASE("exact-input single layer equals the bayesian linear regression predictive") {
    // features phi, weights N(0, I), noise s^2: compare against the dense conditional
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    const Index N = 25, M = 8, Q = 2;
    MatrixXd X(N, Q);
    VectorXd y(N);
    for (Index i = 0; i < X.size(); ++i) X.data()[i] = nd(rng);
    for (Index i = 0; i < N; ++i) y(i) = nd(rng);
    Hyperparams h;
    h.sigma_power = 1.2;
    h.sigma_noise = 0.25;
    h.lengthscales = VectorXd::Constant(Q, 0.8);
    h.periods = VectorXd::Constant(Q, kInf);
    SpectralBasis s = init_basis(M, Q, 4, UInit::Zero);
    s.u.setRandom();
    PsiStats ps = psi_stats(X, MatrixXd::Zero(N, Q), s, h, Variant::SS);
    LayerPredictor lp = make_layer_predictor(h, s, Variant::SS, ps, y);

    MatrixXd F = oracle::feature_rows(X, s.z, s.u, s.b, h.sigma_power, h.lengthscales, h.periods);
    MatrixXd C = F * F.transpose();
    C.diagonal().array() += h.sigma_noise * h.sigma_noise;
    Eigen::LDLT<MatrixXd> ldlt(C);
    for (int t = 0; t < 5; ++t) {
        VectorXd xs(Q);
        xs << nd(rng), nd(rng);
        VectorXd fs = oracle::features(xs, s.z, s.u, s.b, h.sigma_power, h.lengthscales, h.periods);
        VectorXd k = F * fs;
        double want_m = k.dot(ldlt.solve(y));
        double want_v = fs.squaredNorm() - k.dot(ldlt.solve(k));
        auto [m, v] = predict_layer(lp, xs, VectorXd::Zero(Q));
        CHECK(std::abs(m - want_m) <= 1e-8 * std::max(1.0, std::abs(want_m)));
        CHECK(std::abs(v - want_v) <= 1e-8 * std::max(1.0, std::abs(want_v)));
    }
}

TEST_CASE("free simulation of the training inputs") {
    for (Variant v : {Variant::SS, Variant::VSS}) {
        Dataset d = series(60, 5);
        Model m = init_model(2, 10, v, d, 6);
        Posterior post = make_posterior(m, d);
        SimTrace tr = free_simulate(post, d.inputs, Warmup::Cold);
        CHECK(tr.size() == 57);
        CHECK(tr.mean.allFinite());
        CHECK((tr.var.array() > 0).all());
        for (int l = 0; l <= 2; ++l) {
            double s2 = post.layers[l].hyper.sigma_noise * post.layers[l].hyper.sigma_noise;
            CHECK((tr.var.col(l).array() >= s2).all());
        }
        SimTrace tc = free_simulate(post, d.inputs.topRows(20), Warmup::Continuation);
        CHECK(tc.size() == 20);
        SimTrace again = free_simulate(post, d.inputs.topRows(20), Warmup::Continuation);
        CHECK(again.mean == tc.mean);
        CHECK(again.var == tc.var);
        CHECK_THROWS(free_simulate(post, d.inputs.topRows(3), Warmup::Cold));
        CHECK_THROWS(free_simulate(post, MatrixXd::Zero(5, 2), Warmup::Cold));
    }
}

TEST_CASE("infinite lengthscales give a constant simulation") {
    Dataset d = series(40, 7);
    Model m = init_model(2, 6, Variant::SS, d, 8);
    for (auto& l : m.layers) l.lengthscales.setConstant(inverse_transform(1e30));
    Posterior post = make_posterior(m, d);
    SimTrace tr = free_simulate(post, series(30, 9).inputs, Warmup::Cold);
    VectorXd y = tr.y_mean();
    CHECK((y.array() - y(0)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("single layer simulation matches a hand-rolled two-step oracle") {
    Dataset d = series(30, 10);
    Model m = init_model(1, 5, Variant::SS, d, 11);
    Posterior post = make_posterior(m, d);
    MatrixXd X = series(8, 12).inputs;
    SimTrace tr = free_simulate(post, X, Warmup::Cold);
    // Hx = 3, Hh = 2: step t uses x rows t+2, t+1, t and latent predictions
    const auto& L0 = post.layers[0];
    const auto& L1 = post.layers[1];
    auto moments = [](const LayerPredictor& lp, const VectorXd& mu, const VectorXd& lam) {
        auto [p1, p2] = psi_star(mu, lam, lp.basis, lp.hyper, lp.variant);
        double mean = p1.dot(lp.m);
        double var = lp.m.dot(p2 * lp.m) - mean * mean + (lp.S.array() * p2.array()).sum();
        return std::pair<double, double>{mean, var + lp.hyper.sigma_noise * lp.hyper.sigma_noise};
    };
    std::vector<double> hm = {0.0, 0.0}, hv = {1.0, 1.0};
    for (int t = 0; t < 2; ++t) {
        VectorXd mu(5), lam(5);
        mu << hm[t + 1], hm[t], X(t + 2, 0), X(t + 1, 0), X(t, 0);
        lam << hv[t + 1], hv[t], 0, 0, 0;
        auto [m0, v0] = moments(L0, mu, lam);
        hm.push_back(m0);
        hv.push_back(v0);
        VectorXd mu1(2), lam1(2);
        mu1 << hm[t + 2], hm[t + 1];
        lam1 << hv[t + 2], hv[t + 1];
        auto [m1, v1] = moments(L1, mu1, lam1);
        CHECK(std::abs(tr.mean(t, 0) - m0) <= 1e-12 * std::max(1.0, std::abs(m0)));
        CHECK(std::abs(tr.var(t, 0) - v0) <= 1e-12 * std::max(1.0, v0));
        CHECK(std::abs(tr.y_mean()(t) - m1) <= 1e-12 * std::max(1.0, std::abs(m1)));
        CHECK(std::abs(tr.y_var()(t) - v1) <= 1e-12 * std::max(1.0, v1));
    }
}

TEST_CASE("predictive variance is non-negative on random models") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 10; ++t) {
        Dataset d = series(40, 20 + t);
        Model m = init_model(2, 8, t % 2 ? Variant::VSS : Variant::SS, d, 30 + t);
        for (auto& l : m.layers) l.z += 0.3 * MatrixXd::Random(l.z.rows(), l.z.cols());
        Posterior post = make_posterior(m, d);
        for (int k = 0; k < 20; ++k) {
            for (const auto& lp : post.layers) {
                VectorXd mu(lp.basis.dim()), lam(lp.basis.dim());
                for (Index q = 0; q < mu.size(); ++q) {
                    mu(q) = nd(rng);
                    lam(q) = std::abs(nd(rng));
                }
                CHECK(predict_layer(lp, mu, lam).second >= -1e-10);
            }
        }
    }
}
