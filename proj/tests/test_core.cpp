#include <doctest.h>

#include "drgp/core.hpp"

#include <cmath>
#include <random>

using namespace drgp;

TEST_CASE("positive transform") {
    CHECK(positive_transform(0.0) == doctest::Approx(0.480453013918201).epsilon(1e-12));
    CHECK(positive_transform(50.0) == doctest::Approx(2500.0).epsilon(1e-12));
    CHECK(std::isfinite(positive_transform(1000.0)));
    CHECK(positive_transform(-800.0) >= 0.0);
    for (double x : {-3.0, 0.0, 5.0}) CHECK(std::abs(inverse_transform(positive_transform(x)) - x) < 1e-10);
    CHECK_THROWS_AS(positive_transform(std::nan("")), std::domain_error);
    CHECK_THROWS_AS(positive_transform(kInf), std::domain_error);

    for (double x : {-4.0, -0.3, 0.0, 1.7, 30.0}) {
        double h = 1e-6 * std::max(1.0, std::abs(x));
        double fd = (positive_transform(x + h) - positive_transform(x - h)) / (2 * h);
        CHECK(positive_transform_deriv(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("dataset validation and slicing") {
    Dataset d;
    CHECK_THROWS(d.validate());
    d.inputs = MatrixXd::Random(5, 2);
    d.outputs = VectorXd::Random(5);
    CHECK_NOTHROW(d.validate());
    Dataset s = d.slice(1, 3);
    CHECK(s.size() == 3);
    CHECK(s.inputs(0, 1) == d.inputs(1, 1));
    CHECK_THROWS(d.slice(3, 3));
    d.outputs(2) = std::nan("");
    CHECK_THROWS(d.validate());
}

TEST_CASE("normalization") {
    Dataset d;
    d.inputs.resize(3, 2);
    d.inputs << 1, 5, 2, 5, 3, 5;
    d.outputs.resize(3);
    d.outputs << 0.5, -1.0, 4.0;
    auto [n, st] = normalize(d);
    CHECK(std::abs(n.inputs.col(0).mean()) < 1e-12);
    CHECK(st.mean(0) == doctest::Approx(2.0));
    CHECK(n.inputs.col(1).isZero());
    CHECK(st.scale(1) == 1.0);
    CHECK(std::abs(n.outputs.mean()) < 1e-12);
    double sd = std::sqrt(n.outputs.squaredNorm() / 3.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
    Dataset back = st.invert(n);
    CHECK((back.inputs - d.inputs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.outputs - d.outputs).cwiseAbs().maxCoeff() < 1e-12);

    auto [nv, sv] = normalize(d, NormMode::Variance);
    CHECK(std::abs(nv.outputs.mean()) < 1e-12);
    Dataset bv = sv.invert(nv);
    CHECK((bv.outputs - d.outputs).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(st.output_value(n.outputs(2)) == doctest::Approx(4.0));

    Dataset empty;
    CHECK_THROWS(normalize(empty));
}

TEST_CASE("config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.input_dim(0, 1) == 20);
    CHECK(c.input_dim(1, 1) == 20);
    CHECK(c.input_dim(2, 1) == 10);
    c.Hh = 11;
    CHECK_THROWS(c.validate());
    c.Hh = 10;
    c.D = 2;
    CHECK_THROWS(c.validate());
    CHECK(parse_variant("vss") == Variant::VSS);
    CHECK_THROWS(parse_variant("nystrom"));
}

namespace {
Model random_model(std::mt19937_64& rng, Variant v) {
    std::normal_distribution<double> nd;
    ModelConfig c;
    c.L = 2;
    c.Hx = 3;
    c.Hh = 2;
    c.M = 4;
    c.variant = v;
    const Index N = 20, Q = 2;
    auto r = [&](Index a, Index b) {
        MatrixXd m(a, b);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
        return m;
    };
    Model m;
    m.config = c;
    for (int l = 0; l <= c.L; ++l) {
        int q = c.input_dim(l, Q);
        LayerParams p;
        p.sigma_power = nd(rng);
        p.sigma_noise = nd(rng);
        p.lengthscales = r(q, 1);
        p.periods = VectorXd::Constant(q, kInf);
        p.z = r(c.M, q);
        if (v == Variant::VSS) p.beta = r(c.M, q);
        p.u = r(c.M, q);
        p.b = r(c.M, 1);
        m.layers.push_back(p);
    }
    for (int l = 0; l < c.L; ++l) m.latent.push_back({r(c.latent_length(N), 1), r(c.latent_length(N), 1)});
    return m;
}
}  // namespace

TEST_CASE("flatten and unflatten") {
    std::mt19937_64 rng(5);
    for (Variant v : {Variant::SS, Variant::VSS}) {
        Model m = random_model(rng, v);
        ParamVector pv = flatten_params(m);
        Index total = 0;
        for (const auto& s : pv.layout.slices) total += s.size;
        CHECK(total == pv.layout.size);
        CHECK(pv.values.size() == pv.layout.size);
        Model back = unflatten_params(pv, zeros_like(m));
        CHECK(flatten_params(back).values == pv.values);
        CHECK(back.layers[1].u == m.layers[1].u);
        CHECK(back.latent[1].lambda == m.latent[1].lambda);

        ParamVector frozen = flatten_params(m, {ParamGroup::Pseudo});
        Index pseudo = 0;
        for (const auto& l : m.layers) pseudo += l.u.size();
        CHECK(frozen.values.size() == pv.values.size() - pseudo);

        ParamVector bad = pv;
        bad.values.conservativeResize(bad.values.size() - 1);
        CHECK_THROWS(unflatten_params(bad, m));
    }
}

TEST_CASE("natural views") {
    std::mt19937_64 rng(6);
    Model m = random_model(rng, Variant::SS);
    Hyperparams h = m.layers[0].hyper();
    CHECK(h.sigma_noise == positive_transform(m.layers[0].sigma_noise));
    SpectralBasis b = m.layers[0].basis();
    CHECK((b.b.array() >= 0).all());
    CHECK((b.b.array() < kTwoPi).all());
    CHECK(!b.variational());
    CHECK(h.period_offset(0) == 0.0);
}
