#include "drgp/core.hpp"

#include <cmath>

namespace drgp {

namespace {

double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

double positive_transform(double x) {
    if (!std::isfinite(x)) throw std::domain_error("positive_transform: non-finite input");
    double s = softplus(x);
    return s * s;
}

double inverse_transform(double y) {
    if (!(y > 0) || !std::isfinite(y)) throw std::domain_error("inverse_transform: input must be positive and finite");
    double s = std::sqrt(y);
    // log(exp(s) - 1) without overflow
    return s + std::log(-std::expm1(-s));
}

double positive_transform_deriv(double x) {
    return 2.0 * softplus(x) * sigmoid(x);
}

VectorXd positive_transform(const VectorXd& x) {
    return x.unaryExpr([](double v) { return positive_transform(v); });
}
MatrixXd positive_transform(const MatrixXd& x) {
    return x.unaryExpr([](double v) { return positive_transform(v); });
}
VectorXd inverse_transform(const VectorXd& y) {
    return y.unaryExpr([](double v) { return inverse_transform(v); });
}
MatrixXd inverse_transform(const MatrixXd& y) {
    return y.unaryExpr([](double v) { return inverse_transform(v); });
}

void Dataset::validate() const {
    if (outputs.size() < 1) throw Error("dataset is empty");
    if (inputs.rows() != outputs.size()) throw Error("dataset: input/output row count mismatch");
    if (inputs.cols() < 1) throw Error("dataset: no input columns");
    if (!inputs.allFinite() || !outputs.allFinite()) throw Error("dataset: non-finite entries");
}

Dataset Dataset::slice(Index begin, Index count) const {
    if (begin < 0 || count < 0 || begin + count > size()) throw Error("dataset slice out of range");
    Dataset d;
    d.inputs = inputs.middleRows(begin, count);
    d.outputs = outputs.segment(begin, count);
    d.names = names;
    return d;
}

Normalization fit_normalization(const Dataset& d, NormMode mode) {
    if (d.size() < 1) throw Error("normalize: empty dataset");
    const Index Q = d.dim();
    Normalization n;
    n.mode = mode;
    n.mean.resize(Q + 1);
    n.scale.resize(Q + 1);
    auto fit = [&](const Eigen::Ref<const VectorXd>& col, Index k) {
        double mu = col.mean();
        double var = (col.array() - mu).square().sum() / double(col.size());
        n.mean(k) = mu;
        if (!(var > 0)) {
            n.scale(k) = 1.0;
        } else {
            n.scale(k) = mode == NormMode::StdDev ? std::sqrt(var) : var;
        }
    };
    for (Index q = 0; q < Q; ++q) fit(d.inputs.col(q), q);
    fit(d.outputs, Q);
    return n;
}

std::pair<Dataset, Normalization> normalize(const Dataset& d, NormMode mode) {
    Normalization n = fit_normalization(d, mode);
    return {n.apply(d), n};
}

Dataset Normalization::apply(const Dataset& d) const {
    const Index Q = d.dim();
    if (mean.size() != Q + 1) throw Error("normalization: column count mismatch");
    Dataset r = d;
    for (Index q = 0; q < Q; ++q) r.inputs.col(q) = (d.inputs.col(q).array() - mean(q)) / scale(q);
    r.outputs = (d.outputs.array() - mean(Q)) / scale(Q);
    return r;
}

Dataset Normalization::invert(const Dataset& d) const {
    const Index Q = d.dim();
    if (mean.size() != Q + 1) throw Error("normalization: column count mismatch");
    Dataset r = d;
    for (Index q = 0; q < Q; ++q) r.inputs.col(q) = d.inputs.col(q).array() * scale(q) + mean(q);
    r.outputs = d.outputs.array() * scale(Q) + mean(Q);
    return r;
}

std::string to_string(Variant v) { return v == Variant::SS ? "SS" : "VSS"; }

Variant parse_variant(const std::string& s) {
    if (s == "SS" || s == "ss") return Variant::SS;
    if (s == "VSS" || s == "vss") return Variant::VSS;
    throw Error("unknown variant '" + s + "'");
}

void ModelConfig::validate() const {
    if (L < 1) throw Error("config: L must be >= 1");
    if (Hx < 0) throw Error("config: H_x must be >= 0");
    if (Hh < 1) throw Error("config: H_h must be >= 1");
    if (M < 0) throw Error("config: M must be >= 0");
    if (D != 1) throw Error("config: recurrent model supports D = 1 only");
    if (Hx > 0 && Hh > Hx) throw Error("config: H_h must not exceed H_x");
}

int ModelConfig::input_dim(int l, int Q) const {
    if (l == 0) return Hh + Hx * Q;
    if (l < L) return 2 * Hh;
    return Hh;
}

double Hyperparams::period_offset(Index q) const {
    if (periods.size() == 0) return 0.0;
    double p = periods(q);
    if (std::isinf(p)) return 0.0;
    return kTwoPi / p;
}

void Hyperparams::validate() const {
    if (!(sigma_power > 0) || !(sigma_noise > 0)) throw Error("hyperparameters: sigmas must be positive");
    if ((lengthscales.array() <= 0).any()) throw Error("hyperparameters: lengthscales must be positive");
    if (periods.size() != 0 && periods.size() != lengthscales.size()) throw Error("hyperparameters: periods size mismatch");
    if (periods.size() && (periods.array() <= 0).any()) throw Error("hyperparameters: periods must be positive");
}

WeightPosterior WeightPosterior::diagonal(const MatrixXd& mean, const VectorXd& s) {
    WeightPosterior w;
    w.mean = mean;
    w.cov = s.asDiagonal();
    return w;
}

Hyperparams LayerParams::hyper() const {
    Hyperparams h;
    h.sigma_power = positive_transform(sigma_power);
    h.sigma_noise = positive_transform(sigma_noise);
    h.lengthscales = positive_transform(lengthscales);
    h.periods = periods;
    return h;
}

SpectralBasis LayerParams::basis() const {
    SpectralBasis s;
    s.z = z;
    if (beta.size()) s.beta = positive_transform(beta);
    s.u = u;
    s.b = b.unaryExpr([](double v) {
        double w = std::fmod(v, kTwoPi);
        return w < 0 ? w + kTwoPi : w;
    });
    return s;
}

LayerParams LayerParams::from(const Hyperparams& h, const SpectralBasis& s) {
    LayerParams p;
    p.sigma_power = inverse_transform(h.sigma_power);
    p.sigma_noise = inverse_transform(h.sigma_noise);
    p.lengthscales = inverse_transform(h.lengthscales);
    p.periods = h.periods.size() ? h.periods : VectorXd::Constant(h.lengthscales.size(), kInf);
    p.z = s.z;
    if (s.beta.size()) p.beta = inverse_transform(s.beta);
    p.u = s.u;
    p.b = s.b;
    return p;
}

LatentState LatentParams::state() const { return {mu, positive_transform(lambda)}; }

LatentParams LatentParams::from(const LatentState& s) { return {s.mu, inverse_transform(s.lambda)}; }

void Model::validate(Index N, Index Q) const {
    config.validate();
    if ((int)layers.size() != config.L + 1) throw Error("model: expected L+1 layers");
    if ((int)latent.size() != config.L) throw Error("model: expected L latent states");
    for (int l = 0; l <= config.L; ++l) {
        const auto& p = layers[l];
        Index q = config.input_dim(l, (int)Q);
        if (p.lengthscales.size() != q || p.z.cols() != q || p.u.cols() != q)
            throw Error("model: layer " + std::to_string(l) + " has wrong input dimension");
        if (p.z.rows() != config.M || p.u.rows() != config.M || p.b.size() != config.M)
            throw Error("model: layer " + std::to_string(l) + " has wrong feature count");
        bool vss = config.variant == Variant::VSS;
        if (vss && (p.beta.rows() != config.M || p.beta.cols() != q))
            throw Error("model: layer " + std::to_string(l) + " is missing spectral variances");
        if (!vss && p.beta.size()) throw Error("model: SS layer carries spectral variances");
    }
    for (const auto& h : latent)
        if (h.mu.size() != config.latent_length(N) || h.lambda.size() != h.mu.size())
            throw Error("model: latent state length mismatch");
}

std::string to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::SigmaPower: return "sigma_power";
        case ParamGroup::SigmaNoise: return "sigma_noise";
        case ParamGroup::Lengthscale: return "lengthscale";
        case ParamGroup::Spectral: return "spectral";
        case ParamGroup::SpectralVar: return "spectral_var";
        case ParamGroup::Pseudo: return "pseudo";
        case ParamGroup::Phase: return "phase";
        case ParamGroup::LatentMean: return "latent_mean";
        case ParamGroup::LatentVar: return "latent_var";
    }
    return "?";
}

const std::vector<ParamGroup>& all_groups() {
    static const std::vector<ParamGroup> g = {
        ParamGroup::SigmaPower, ParamGroup::SigmaNoise, ParamGroup::Lengthscale,
        ParamGroup::Spectral,   ParamGroup::SpectralVar, ParamGroup::Pseudo,
        ParamGroup::Phase,      ParamGroup::LatentMean,  ParamGroup::LatentVar,
    };
    return g;
}

namespace {

// Returns a mutable pointer/size pair for a group inside a model.
std::pair<double*, Index> group_data(Model& m, int layer, ParamGroup g) {
    if (g == ParamGroup::LatentMean || g == ParamGroup::LatentVar) {
        if (layer >= (int)m.latent.size()) return {nullptr, 0};
        auto& v = g == ParamGroup::LatentMean ? m.latent[layer].mu : m.latent[layer].lambda;
        return {v.data(), v.size()};
    }
    auto& p = m.layers[layer];
    switch (g) {
        case ParamGroup::SigmaPower: return {&p.sigma_power, 1};
        case ParamGroup::SigmaNoise: return {&p.sigma_noise, 1};
        case ParamGroup::Lengthscale: return {p.lengthscales.data(), p.lengthscales.size()};
        case ParamGroup::Spectral: return {p.z.data(), p.z.size()};
        case ParamGroup::SpectralVar: return {p.beta.data(), p.beta.size()};
        case ParamGroup::Pseudo: return {p.u.data(), p.u.size()};
        case ParamGroup::Phase: return {p.b.data(), p.b.size()};
        default: break;
    }
    return {nullptr, 0};
}

std::pair<const double*, Index> group_data(const Model& m, int layer, ParamGroup g) {
    auto r = group_data(const_cast<Model&>(m), layer, g);
    return {r.first, r.second};
}

}  // namespace

ParamLayout make_layout(const Model& m, const GroupSet& frozen) {
    ParamLayout lay;
    for (int l = 0; l < (int)m.layers.size(); ++l) {
        for (ParamGroup g : all_groups()) {
            Index n = group_data(m, l, g).second;
            lay.shape.push_back(n);
            if (n == 0 || frozen.count(g)) continue;
            lay.slices.push_back({l, g, lay.size, n});
            lay.size += n;
        }
    }
    return lay;
}

namespace {

void check_shape(const Model& m, const ParamLayout& layout) {
    std::vector<Index> shape;
    for (int l = 0; l < (int)m.layers.size(); ++l)
        for (ParamGroup g : all_groups()) shape.push_back(group_data(m, l, g).second);
    if (shape != layout.shape) throw Error("parameter layout does not match model shape");
}

}  // namespace

VectorXd flatten_with(const Model& m, const ParamLayout& layout) {
    check_shape(m, layout);
    VectorXd v(layout.size);
    for (const auto& s : layout.slices) {
        auto d = group_data(m, s.layer, s.group);
        std::copy(d.first, d.first + s.size, v.data() + s.offset);
    }
    return v;
}

ParamVector flatten_params(const Model& m, const GroupSet& frozen) {
    ParamVector p;
    p.layout = make_layout(m, frozen);
    p.values = flatten_with(m, p.layout);
    return p;
}

Model unflatten_params(const ParamVector& p, const Model& base) {
    if (p.values.size() != p.layout.size) throw Error("parameter vector size does not match its layout");
    check_shape(base, p.layout);
    Model m = base;
    for (const auto& s : p.layout.slices) {
        auto d = group_data(m, s.layer, s.group);
        std::copy(p.values.data() + s.offset, p.values.data() + s.offset + s.size, d.first);
    }
    return m;
}

Model zeros_like(const Model& m) {
    Model z = m;
    for (auto& p : z.layers) {
        p.sigma_power = 0;
        p.sigma_noise = 0;
        p.lengthscales.setZero();
        p.z.setZero();
        p.beta.setZero();
        p.u.setZero();
        p.b.setZero();
    }
    for (auto& h : z.latent) {
        h.mu.setZero();
        h.lambda.setZero();
    }
    return z;
}

}  // namespace drgp
