#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace drgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::RowVectorXd;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kExpFloor = -700.0;
const double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// softplus(x)^2 and friends
double positive_transform(double x);
double inverse_transform(double y);
double positive_transform_deriv(double x);
VectorXd positive_transform(const VectorXd& x);
MatrixXd positive_transform(const MatrixXd& x);
VectorXd inverse_transform(const VectorXd& y);
MatrixXd inverse_transform(const MatrixXd& y);

struct Dataset {
    MatrixXd inputs;   // N x Q
    VectorXd outputs;  // N
    std::vector<std::string> names;

    Index size() const { return outputs.size(); }
    Index dim() const { return inputs.cols(); }
    void validate() const;
    Dataset slice(Index begin, Index count) const;
};

enum class NormMode { StdDev, Variance };

// column statistics; the last entry belongs to the output column
struct Normalization {
    VectorXd mean;
    VectorXd scale;
    NormMode mode = NormMode::StdDev;

    Dataset apply(const Dataset& d) const;
    Dataset invert(const Dataset& d) const;
    double output_value(double y) const { return y * scale(scale.size() - 1) + mean(mean.size() - 1); }
    double output_variance(double v) const {
        double s = scale(scale.size() - 1);
        return v * s * s;
    }
};

std::pair<Dataset, Normalization> normalize(const Dataset& d, NormMode mode = NormMode::StdDev);
Normalization fit_normalization(const Dataset& d, NormMode mode = NormMode::StdDev);

enum class Variant { SS, VSS };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
    int L = 2;
    int Hx = 10;
    int Hh = 10;
    int M = 100;
    Variant variant = Variant::SS;
    int D = 1;

    void validate() const;
    // dimensionality of the input of layer l (0-based, L hidden + 1 output)
    int input_dim(int l, int Q) const;
    Index n_hat(Index N) const { return N - Hx; }
    Index latent_length(Index N) const { return N + Hh - Hx; }
};

struct Hyperparams {
    double sigma_power = 1.0;
    double sigma_noise = 0.1;
    VectorXd lengthscales;
    VectorXd periods;  // +inf entries drop out of the frequency

    Index dim() const { return lengthscales.size(); }
    double period_offset(Index q) const;
    void validate() const;
};

struct SpectralBasis {
    MatrixXd z;     // M x Q (alpha for VSS)
    MatrixXd beta;  // M x Q, empty for SS
    MatrixXd u;     // M x Q
    VectorXd b;     // M

    Index size() const { return z.rows(); }
    Index dim() const { return z.cols(); }
    bool variational() const { return beta.size() > 0; }
};

struct LatentState {
    VectorXd mu;
    VectorXd lambda;
};

struct WeightPosterior {
    MatrixXd mean;  // M x D
    MatrixXd cov;   // M x M, shared across outputs

    static WeightPosterior diagonal(const MatrixXd& mean, const VectorXd& s);
};

// Per-layer parameters in optimizer space: positive fields hold the
// unconstrained value, the natural value is positive_transform(raw).
struct LayerParams {
    double sigma_power = 0.0;
    double sigma_noise = 0.0;
    VectorXd lengthscales;
    VectorXd periods;
    MatrixXd z;
    MatrixXd beta;
    MatrixXd u;
    VectorXd b;

    Hyperparams hyper() const;
    SpectralBasis basis() const;
    static LayerParams from(const Hyperparams& h, const SpectralBasis& s);
};

struct LatentParams {
    VectorXd mu;
    VectorXd lambda;  // unconstrained

    LatentState state() const;
    static LatentParams from(const LatentState& s);
};

struct Model {
    ModelConfig config;
    std::vector<LayerParams> layers;   // L + 1
    std::vector<LatentParams> latent;  // L

    void validate(Index N, Index Q) const;
};

enum class ParamGroup {
    SigmaPower,
    SigmaNoise,
    Lengthscale,
    Spectral,
    SpectralVar,
    Pseudo,
    Phase,
    LatentMean,
    LatentVar,
};
using GroupSet = std::set<ParamGroup>;
std::string to_string(ParamGroup g);
const std::vector<ParamGroup>& all_groups();

struct Slice {
    int layer;
    ParamGroup group;
    Index offset;
    Index size;
};

struct ParamLayout {
    std::vector<Slice> slices;
    Index size = 0;
    std::vector<Index> shape;  // group sizes per (layer, group), used for consistency checks
};

struct ParamVector {
    VectorXd values;
    ParamLayout layout;
};

ParamLayout make_layout(const Model& m, const GroupSet& frozen = {});
ParamVector flatten_params(const Model& m, const GroupSet& frozen = {});
VectorXd flatten_with(const Model& m, const ParamLayout& layout);
Model unflatten_params(const ParamVector& p, const Model& base);

// Zero-valued model of the same shape (used to hold gradients).
Model zeros_like(const Model& m);

}  // namespace drgp
