#include "prkit/models.hpp"

#include "prkit/errors.hpp"
#include "prkit/io.hpp"
#include "prkit/rng.hpp"

#include <cmath>
#include <numbers>

namespace prkit {

namespace {

using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::tanh_fn: return "tanh";
        case Activation::relu: return "relu";
        case Activation::erf_fn: return "erf";
        case Activation::identity: return "identity";
    }
    throw ConfigError("unknown activation enum value");
}

Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "relu") return Activation::relu;
    if (s == "erf") return Activation::erf_fn;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation: " + s);
}

std::string to_string(Parametrization p) {
    return p == Parametrization::standard ? "standard" : "ntk";
}

Parametrization parametrization_from_string(const std::string& s) {
    if (s == "standard") return Parametrization::standard;
    if (s == "ntk") return Parametrization::ntk;
    throw ConfigError("unknown parametrization: " + s);
}

std::string to_string(BiasMode b) { return b == BiasMode::matched ? "matched" : "none"; }

BiasMode bias_mode_from_string(const std::string& s) {
    if (s == "matched") return BiasMode::matched;
    if (s == "none") return BiasMode::none;
    throw ConfigError("unknown bias_mode: " + s);
}

double activation_value(Activation a, double x) {
    switch (a) {
        case Activation::silu: return x * sigmoid(x);
        case Activation::tanh_fn: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::erf_fn: return std::erf(x);
        case Activation::identity: return x;
    }
    throw ConfigError("unknown activation enum value");
}

double activation_derivative(Activation a, double x) {
    switch (a) {
        case Activation::silu: {
            const double s = sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        }
        case Activation::tanh_fn: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::erf_fn:
            return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
        case Activation::identity: return 1.0;
    }
    throw ConfigError("unknown activation enum value");
}

void MlpArchitecture::validate() const {
    if (input_dim < 1) throw ConfigError("mlp: input_dim must be >= 1");
    if (hidden_widths.empty()) throw ConfigError("mlp: at least one hidden layer required");
    for (int w : hidden_widths) {
        if (w < 1) throw ConfigError("mlp: hidden widths must be >= 1");
    }
    if (!(init_scale > 0.0)) throw ConfigError("mlp: init_scale must be > 0");
}

double KernelSpec::operator()(const Vector& a, const Vector& b) const {
    if (a.size() != b.size()) {
        throw DimensionMismatch("kernel: inputs of size " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
    }
    switch (kind) {
        case Kind::linear: return a.dot(b);
        case Kind::rbf:
            return std::exp(-(a - b).squaredNorm() / (2.0 * lengthscale * lengthscale));
    }
    throw ConfigError("unknown kernel kind");
}

void Regressor::check_input(const Vector& x) const {
    if (static_cast<int>(x.size()) != input_dim()) {
        throw DimensionMismatch(kind() + ": input of size " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(input_dim()));
    }
}

// ---------------------------------------------------------------------------
// LinearModel

LinearModel::LinearModel(int input_dim) {
    if (input_dim < 1) throw ConfigError("linear: input_dim must be >= 1");
    w_ = Vector::Zero(input_dim);
}

LinearModel::LinearModel(const Vector& weights) : w_(weights) {
    if (w_.size() == 0) throw ConfigError("linear: empty weight vector");
}

void LinearModel::set_parameters(const Vector& w) {
    if (w.size() != w_.size()) {
        throw DimensionMismatch("linear: parameter vector of size " + std::to_string(w.size()) +
                                ", expected " + std::to_string(w_.size()));
    }
    w_ = w;
}

double LinearModel::predict(const Vector& x) const {
    check_input(x);
    return w_.dot(x);
}

Vector LinearModel::param_gradient(const Vector& x) const {
    check_input(x);
    return x;
}

Vector LinearModel::input_gradient(const Vector& x) const {
    check_input(x);
    return w_;
}

Vector LinearModel::last_layer_features(const Vector& x) const {
    check_input(x);
    return x;
}

std::unique_ptr<Regressor> LinearModel::clone() const {
    return std::make_unique<LinearModel>(*this);
}

nlohmann::json LinearModel::architecture_json() const {
    return {{"input_dim", input_dim()}};
}

// ---------------------------------------------------------------------------
// PolynomialModel

PolynomialModel::PolynomialModel(int degree) {
    if (degree < 0) throw ConfigError("polynomial: degree must be >= 0");
    w_ = Vector::Zero(degree + 1);
}

PolynomialModel::PolynomialModel(const Vector& coefficients) : w_(coefficients) {
    if (w_.size() == 0) throw ConfigError("polynomial: empty coefficients");
}

void PolynomialModel::set_parameters(const Vector& w) {
    if (w.size() != w_.size()) {
        throw DimensionMismatch("polynomial: parameter vector of size " +
                                std::to_string(w.size()) + ", expected " +
                                std::to_string(w_.size()));
    }
    w_ = w;
}

double PolynomialModel::predict(const Vector& x) const {
    check_input(x);
    double acc = 0.0;
    for (long i = w_.size() - 1; i >= 0; --i) acc = acc * x(0) + w_(i);
    return acc;
}

Vector PolynomialModel::param_gradient(const Vector& x) const {
    return last_layer_features(x);
}

Vector PolynomialModel::input_gradient(const Vector& x) const {
    check_input(x);
    double acc = 0.0;
    for (long i = w_.size() - 1; i >= 1; --i) acc = acc * x(0) + w_(i) * static_cast<double>(i);
    Vector g(1);
    g(0) = acc;
    return g;
}

Vector PolynomialModel::last_layer_features(const Vector& x) const {
    check_input(x);
    Vector f(w_.size());
    double p = 1.0;
    for (long i = 0; i < w_.size(); ++i) {
        f(i) = p;
        p *= x(0);
    }
    return f;
}

std::unique_ptr<Regressor> PolynomialModel::clone() const {
    return std::make_unique<PolynomialModel>(*this);
}

nlohmann::json PolynomialModel::architecture_json() const {
    return {{"degree", degree()}};
}

// ---------------------------------------------------------------------------
// GaussianSumModel

GaussianSumModel::GaussianSumModel(int n_gaussians) : k_(n_gaussians) {
    if (k_ < 1) throw ConfigError("gaussian-sum: need at least one component");
    w_ = Vector::Zero(3 * k_);
    w_.head(k_).setOnes();  // prefactors 1, means 0, unit variances
}

GaussianSumModel::GaussianSumModel(const Vector& params, int n_gaussians)
    : k_(n_gaussians), w_(params) {
    if (k_ < 1) throw ConfigError("gaussian-sum: need at least one component");
    if (w_.size() != 3 * k_) {
        throw DimensionMismatch("gaussian-sum: " + std::to_string(w_.size()) +
                                " parameters for " + std::to_string(k_) + " components");
    }
}

void GaussianSumModel::set_parameters(const Vector& w) {
    if (w.size() != w_.size()) {
        throw DimensionMismatch("gaussian-sum: parameter vector of size " +
                                std::to_string(w.size()) + ", expected " +
                                std::to_string(w_.size()));
    }
    w_ = w;
}

double GaussianSumModel::predict(const Vector& x) const {
    check_input(x);
    double acc = 0.0;
    for (int k = 0; k < k_; ++k) {
        const double d = x(0) - w_(k_ + k);
        const double v = std::exp(w_(2 * k_ + k));
        acc += w_(k) * std::exp(-d * d / (2.0 * v));
    }
    return acc;
}

Vector GaussianSumModel::param_gradient(const Vector& x) const {
    check_input(x);
    Vector g(3 * k_);
    for (int k = 0; k < k_; ++k) {
        const double d = x(0) - w_(k_ + k);
        const double v = std::exp(w_(2 * k_ + k));
        const double e = std::exp(-d * d / (2.0 * v));
        g(k) = e;                                      // prefactor
        g(k_ + k) = w_(k) * e * d / v;                 // mean
        g(2 * k_ + k) = w_(k) * e * d * d / (2.0 * v); // log-variance
    }
    return g;
}

Vector GaussianSumModel::input_gradient(const Vector& x) const {
    check_input(x);
    double acc = 0.0;
    for (int k = 0; k < k_; ++k) {
        const double d = x(0) - w_(k_ + k);
        const double v = std::exp(w_(2 * k_ + k));
        acc += -w_(k) * std::exp(-d * d / (2.0 * v)) * d / v;
    }
    Vector g(1);
    g(0) = acc;
    return g;
}

Vector GaussianSumModel::last_layer_features(const Vector& x) const {
    check_input(x);
    Vector f(k_);
    for (int k = 0; k < k_; ++k) {
        const double d = x(0) - w_(k_ + k);
        const double v = std::exp(w_(2 * k_ + k));
        f(k) = std::exp(-d * d / (2.0 * v));
    }
    return f;
}

void GaussianSumModel::set_last_layer_weights(const Vector& w) {
    if (w.size() != k_) {
        throw DimensionMismatch("gaussian-sum: " + std::to_string(w.size()) +
                                " prefactors for " + std::to_string(k_) + " components");
    }
    w_.head(k_) = w;
}

std::unique_ptr<Regressor> GaussianSumModel::clone() const {
    return std::make_unique<GaussianSumModel>(*this);
}

nlohmann::json GaussianSumModel::architecture_json() const {
    return {{"n_gaussians", k_}};
}

// ---------------------------------------------------------------------------
// GprSorModel

GprSorModel::GprSorModel(Matrix inducing, KernelSpec kernel)
    : inducing_(std::move(inducing)), kernel_(kernel) {
    if (inducing_.rows() == 0) throw ConfigError("gpr-sor: no inducing points");
    w_ = Vector::Zero(inducing_.rows());
}

GprSorModel::GprSorModel(Matrix inducing, KernelSpec kernel, const Vector& weights)
    : GprSorModel(std::move(inducing), kernel) {
    set_parameters(weights);
}

void GprSorModel::set_parameters(const Vector& w) {
    if (w.size() != inducing_.rows()) {
        throw DimensionMismatch("gpr-sor: " + std::to_string(w.size()) + " weights for " +
                                std::to_string(inducing_.rows()) + " inducing points");
    }
    w_ = w;
}

double GprSorModel::predict(const Vector& x) const {
    return w_.dot(last_layer_features(x));
}

Vector GprSorModel::param_gradient(const Vector& x) const {
    return last_layer_features(x);
}

Vector GprSorModel::input_gradient(const Vector& x) const {
    check_input(x);
    Vector g = Vector::Zero(x.size());
    for (long j = 0; j < inducing_.rows(); ++j) {
        const Vector m = inducing_.row(j).transpose();
        switch (kernel_.kind) {
            case KernelSpec::Kind::linear:
                g += w_(j) * m;
                break;
            case KernelSpec::Kind::rbf: {
                const double k = kernel_(x, m);
                g += w_(j) * k * (m - x) / (kernel_.lengthscale * kernel_.lengthscale);
                break;
            }
        }
    }
    return g;
}

Vector GprSorModel::last_layer_features(const Vector& x) const {
    check_input(x);
    Vector f(inducing_.rows());
    for (long j = 0; j < inducing_.rows(); ++j) {
        f(j) = kernel_(x, inducing_.row(j).transpose());
    }
    return f;
}

std::unique_ptr<Regressor> GprSorModel::clone() const {
    return std::make_unique<GprSorModel>(*this);
}

Matrix GprSorModel::inducing_gram() const {
    const long m = inducing_.rows();
    Matrix k(m, m);
    for (long i = 0; i < m; ++i) {
        for (long j = 0; j <= i; ++j) {
            k(i, j) = k(j, i) = kernel_(inducing_.row(i).transpose(), inducing_.row(j).transpose());
        }
    }
    return k;
}

nlohmann::json GprSorModel::architecture_json() const {
    return {{"kernel",
             {{"kind", kernel_.kind == KernelSpec::Kind::linear ? "linear" : "rbf"},
              {"lengthscale", kernel_.lengthscale}}},
            {"inducing", mat_to_json(inducing_)}};
}

GprSorModel gpr_sor_fit(const Dataset& train, const Matrix& inducing,
                        const KernelSpec& kernel, double sigma2) {
    train.validate();
    if (train.n_samples() == 0) throw EmptyInput("gpr_sor_fit: empty training set");
    if (inducing.rows() > train.n_samples()) {
        throw ConfigError("gpr_sor_fit: more inducing points than training samples");
    }
    if (sigma2 < 0.0) throw ConfigError("gpr_sor_fit: negative sigma2");

    GprSorModel model(inducing, kernel);
    const long n = train.n_samples();
    const long m = inducing.rows();
    Matrix k_nm(n, m);
    for (long i = 0; i < n; ++i) {
        k_nm.row(i) = model.last_layer_features(train.features.row(i).transpose()).transpose();
    }
    const Matrix a = k_nm.transpose() * k_nm + sigma2 * model.inducing_gram();
    const Vector b = k_nm.transpose() * train.targets;
    model.set_parameters(cholesky_factor(a).solve(b));
    return model;
}

// ---------------------------------------------------------------------------
// MlpModel

namespace {

long mlp_param_count(const MlpArchitecture& arch) {
    const int bias = arch.bias_mode == BiasMode::matched ? 1 : 0;
    long total = 0;
    int in = arch.input_dim;
    for (int h : arch.hidden_widths) {
        total += static_cast<long>(h) * (in + bias);
        in = h;
    }
    total += in + bias;  // scalar readout
    return total;
}

}  // namespace

MlpModel::MlpModel(const MlpArchitecture& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    w_.resize(mlp_param_count(arch_));
    Rng rng(seed);
    const int bias = arch_.bias_mode == BiasMode::matched ? 1 : 0;
    long off = 0;
    int in = arch_.input_dim;
    for (int layer = 0; layer < n_layers(); ++layer) {
        const int out = layer < n_layers() - 1 ? arch_.hidden_widths[layer] : 1;
        const int cols = in + bias;
        const double stddev = arch_.parametrization == Parametrization::standard
                                  ? arch_.init_scale / std::sqrt(static_cast<double>(cols))
                                  : arch_.init_scale;
        for (long i = 0; i < static_cast<long>(out) * cols; ++i) {
            w_(off + i) = stddev * rng.normal();
        }
        off += static_cast<long>(out) * cols;
        in = out;
    }
}

MlpModel::MlpModel(const MlpArchitecture& arch, const Vector& params) : arch_(arch) {
    arch_.validate();
    if (params.size() != mlp_param_count(arch_)) {
        throw DimensionMismatch("mlp: " + std::to_string(params.size()) + " parameters, expected " +
                                std::to_string(mlp_param_count(arch_)));
    }
    w_ = params;
}

void MlpModel::set_parameters(const Vector& w) {
    if (w.size() != w_.size()) {
        throw DimensionMismatch("mlp: parameter vector of size " + std::to_string(w.size()) +
                                ", expected " + std::to_string(w_.size()));
    }
    w_ = w;
}

int MlpModel::layer_rows(int layer) const {
    return layer < n_layers() - 1 ? arch_.hidden_widths[layer] : 1;
}

int MlpModel::layer_cols(int layer) const {
    const int bias = arch_.bias_mode == BiasMode::matched ? 1 : 0;
    const int in = layer == 0 ? arch_.input_dim : arch_.hidden_widths[layer - 1];
    return in + bias;
}

long MlpModel::layer_offset(int layer) const {
    long off = 0;
    for (int l = 0; l < layer; ++l) off += static_cast<long>(layer_rows(l)) * layer_cols(l);
    return off;
}

struct MlpModel::Forward {
    std::vector<Vector> u;    // inputs to each layer, bias feature included
    std::vector<Vector> pre;  // pre-activations per layer
};

MlpModel::Forward MlpModel::forward(const Vector& x) const {
    check_input(x);
    const bool matched = arch_.bias_mode == BiasMode::matched;
    Forward fwd;
    fwd.u.reserve(n_layers());
    fwd.pre.reserve(n_layers());

    Vector carry = x;
    for (int layer = 0; layer < n_layers(); ++layer) {
        // NTK parametrization scales hidden activations by 1/sqrt(width);
        // the input layer is left unscaled.
        if (layer > 0 && arch_.parametrization == Parametrization::ntk) {
            carry /= std::sqrt(static_cast<double>(arch_.hidden_widths[layer - 1]));
        }
        Vector u;
        if (matched) {
            u.resize(carry.size() + 1);
            u.head(carry.size()) = carry;
            u(carry.size()) = 1.0;
        } else {
            u = carry;
        }
        RowMajorMap w(w_.data() + layer_offset(layer), layer_rows(layer), layer_cols(layer));
        Vector pre = w * u;
        fwd.u.push_back(std::move(u));
        fwd.pre.push_back(pre);
        if (layer < n_layers() - 1) {
            carry.resize(pre.size());
            for (long i = 0; i < pre.size(); ++i) {
                carry(i) = activation_value(arch_.activation, pre(i));
            }
        }
    }
    return fwd;
}

double MlpModel::predict(const Vector& x) const { return forward(x).pre.back()(0); }

std::vector<MlpModel::LayerTape> MlpModel::gradient_tape(const Vector& x) const {
    const Forward fwd = forward(x);
    const int bias = arch_.bias_mode == BiasMode::matched ? 1 : 0;

    std::vector<LayerTape> tape(static_cast<std::size_t>(n_layers()));
    Vector d = Vector::Ones(1);
    for (int layer = n_layers() - 1; layer >= 0; --layer) {
        tape[static_cast<std::size_t>(layer)].u = fwd.u[static_cast<std::size_t>(layer)];
        tape[static_cast<std::size_t>(layer)].d = d;
        if (layer == 0) break;
        RowMajorMap w(w_.data() + layer_offset(layer), layer_rows(layer), layer_cols(layer));
        // Sensitivity through the weights, bias column excluded.
        Vector back = w.leftCols(layer_cols(layer) - bias).transpose() * d;
        if (arch_.parametrization == Parametrization::ntk) {
            back /= std::sqrt(static_cast<double>(arch_.hidden_widths[layer - 1]));
        }
        const Vector& pre = fwd.pre[static_cast<std::size_t>(layer - 1)];
        d.resize(back.size());
        for (long i = 0; i < back.size(); ++i) {
            d(i) = back(i) * activation_derivative(arch_.activation, pre(i));
        }
    }
    return tape;
}

Vector MlpModel::param_gradient(const Vector& x) const {
    const auto tape = gradient_tape(x);
    Vector g(w_.size());
    for (int layer = 0; layer < n_layers(); ++layer) {
        RowMajorMutMap block(g.data() + layer_offset(layer), layer_rows(layer),
                             layer_cols(layer));
        block = tape[static_cast<std::size_t>(layer)].d *
                tape[static_cast<std::size_t>(layer)].u.transpose();
    }
    return g;
}

Vector MlpModel::input_gradient(const Vector& x) const {
    const Forward fwd = forward(x);
    const int bias = arch_.bias_mode == BiasMode::matched ? 1 : 0;
    Vector d = Vector::Ones(1);
    for (int layer = n_layers() - 1; layer >= 1; --layer) {
        RowMajorMap w(w_.data() + layer_offset(layer), layer_rows(layer), layer_cols(layer));
        Vector back = w.leftCols(layer_cols(layer) - bias).transpose() * d;
        if (arch_.parametrization == Parametrization::ntk) {
            back /= std::sqrt(static_cast<double>(arch_.hidden_widths[layer - 1]));
        }
        const Vector& pre = fwd.pre[static_cast<std::size_t>(layer - 1)];
        d.resize(back.size());
        for (long i = 0; i < back.size(); ++i) {
            d(i) = back(i) * activation_derivative(arch_.activation, pre(i));
        }
    }
    RowMajorMap w0(w_.data(), layer_rows(0), layer_cols(0));
    return w0.leftCols(layer_cols(0) - bias).transpose() * d;
}

Vector MlpModel::last_layer_features(const Vector& x) const {
    return forward(x).u.back();
}

Vector MlpModel::last_layer_weights() const {
    const int last = n_layers() - 1;
    return w_.segment(layer_offset(last), layer_cols(last));
}

void MlpModel::set_last_layer_weights(const Vector& w) {
    const int last = n_layers() - 1;
    if (w.size() != layer_cols(last)) {
        throw DimensionMismatch("mlp: readout vector of size " + std::to_string(w.size()) +
                                ", expected " + std::to_string(layer_cols(last)));
    }
    w_.segment(layer_offset(last), layer_cols(last)) = w;
}

std::unique_ptr<Regressor> MlpModel::clone() const {
    return std::make_unique<MlpModel>(*this);
}

nlohmann::json MlpModel::architecture_json() const {
    return {{"input_dim", arch_.input_dim},
            {"hidden_widths", arch_.hidden_widths},
            {"activation", to_string(arch_.activation)},
            {"bias_mode", to_string(arch_.bias_mode)},
            {"init_scale", arch_.init_scale},
            {"parametrization", to_string(arch_.parametrization)}};
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json model_to_json(const Regressor& model) {
    return {{"format", "prkit-model"},
            {"version", 1},
            {"kind", model.kind()},
            {"architecture", model.architecture_json()},
            {"parameters", vec_to_json(model.parameters())}};
}

std::unique_ptr<Regressor> model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "prkit-model") {
        throw ConfigError("model json: missing or wrong format tag");
    }
    if (j.value("version", 0) != 1) {
        throw ConfigError("model json: unsupported version");
    }
    const std::string kind = j.at("kind").get<std::string>();
    const auto& arch = j.at("architecture");
    const Vector params = vec_from_json(j.at("parameters"));

    if (kind == "linear") {
        if (params.size() != arch.at("input_dim").get<long>()) {
            throw ConfigError("model json: linear parameter count mismatch");
        }
        return std::make_unique<LinearModel>(params);
    }
    if (kind == "polynomial") {
        if (params.size() != arch.at("degree").get<long>() + 1) {
            throw ConfigError("model json: polynomial parameter count mismatch");
        }
        return std::make_unique<PolynomialModel>(params);
    }
    if (kind == "gaussian-sum") {
        return std::make_unique<GaussianSumModel>(params, arch.at("n_gaussians").get<int>());
    }
    if (kind == "gpr-sor") {
        KernelSpec kernel;
        const std::string kk = arch.at("kernel").at("kind").get<std::string>();
        if (kk == "linear") {
            kernel.kind = KernelSpec::Kind::linear;
        } else if (kk == "rbf") {
            kernel.kind = KernelSpec::Kind::rbf;
        } else {
            throw ConfigError("model json: unknown kernel kind " + kk);
        }
        kernel.lengthscale = arch.at("kernel").at("lengthscale").get<double>();
        return std::make_unique<GprSorModel>(mat_from_json(arch.at("inducing")), kernel, params);
    }
    if (kind == "mlp") {
        MlpArchitecture a;
        a.input_dim = arch.at("input_dim").get<int>();
        a.hidden_widths = arch.at("hidden_widths").get<std::vector<int>>();
        a.activation = activation_from_string(arch.at("activation").get<std::string>());
        a.bias_mode = bias_mode_from_string(arch.at("bias_mode").get<std::string>());
        a.init_scale = arch.at("init_scale").get<double>();
        a.parametrization =
            parametrization_from_string(arch.at("parametrization").get<std::string>());
        return std::make_unique<MlpModel>(a, params);
    }
    throw ConfigError("model json: unknown kind " + kind);
}

}  // namespace prkit
