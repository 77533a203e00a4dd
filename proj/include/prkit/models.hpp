#pragma once

#include "prkit/dataset.hpp"
#include "prkit/linalg.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace prkit {

enum class Activation { silu, tanh_fn, relu, erf_fn, identity };
enum class Parametrization { standard, ntk };
enum class BiasMode { matched, none };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(Parametrization p);
Parametrization parametrization_from_string(const std::string& s);
std::string to_string(BiasMode b);
BiasMode bias_mode_from_string(const std::string& s);

double activation_value(Activation a, double x);
double activation_derivative(Activation a, double x);

struct MlpArchitecture {
    int input_dim = 1;
    std::vector<int> hidden_widths{32};
    Activation activation = Activation::silu;
    BiasMode bias_mode = BiasMode::matched;
    double init_scale = 1.0;  // sigma_w
    Parametrization parametrization = Parametrization::standard;

    void validate() const;
};

struct KernelSpec {
    enum class Kind { linear, rbf };
    Kind kind = Kind::rbf;
    double lengthscale = 1.0;

    double operator()(const Vector& a, const Vector& b) const;
};

/// Uniform handle over the regressor family. Every kind has a final linear
/// readout: predict(x) = dot(last_layer_weights, last_layer_features(x)).
class Regressor {
public:
    virtual ~Regressor() = default;

    virtual std::string kind() const = 0;
    virtual int input_dim() const = 0;
    virtual int n_params() const = 0;
    virtual Vector parameters() const = 0;
    virtual void set_parameters(const Vector& w) = 0;

    virtual double predict(const Vector& x) const = 0;
    /// Exact analytic gradient of the prediction with respect to the flat
    /// parameter vector.
    virtual Vector param_gradient(const Vector& x) const = 0;
    /// Gradient of the prediction with respect to the input.
    virtual Vector input_gradient(const Vector& x) const = 0;

    virtual Vector last_layer_features(const Vector& x) const = 0;
    virtual Vector last_layer_weights() const = 0;
    virtual void set_last_layer_weights(const Vector& w) = 0;

    virtual std::unique_ptr<Regressor> clone() const = 0;
    virtual nlohmann::json architecture_json() const = 0;

protected:
    void check_input(const Vector& x) const;
};

class LinearModel final : public Regressor {
public:
    explicit LinearModel(int input_dim);
    LinearModel(const Vector& weights);

    std::string kind() const override { return "linear"; }
    int input_dim() const override { return static_cast<int>(w_.size()); }
    int n_params() const override { return static_cast<int>(w_.size()); }
    Vector parameters() const override { return w_; }
    void set_parameters(const Vector& w) override;
    double predict(const Vector& x) const override;
    Vector param_gradient(const Vector& x) const override;
    Vector input_gradient(const Vector& x) const override;
    Vector last_layer_features(const Vector& x) const override;
    Vector last_layer_weights() const override { return w_; }
    void set_last_layer_weights(const Vector& w) override { set_parameters(w); }
    std::unique_ptr<Regressor> clone() const override;
    nlohmann::json architecture_json() const override;

private:
    Vector w_;
};

/// Monomial-basis polynomial in one variable, coefficients lowest first.
class PolynomialModel final : public Regressor {
public:
    explicit PolynomialModel(int degree);
    PolynomialModel(const Vector& coefficients);

    std::string kind() const override { return "polynomial"; }
    int input_dim() const override { return 1; }
    int n_params() const override { return static_cast<int>(w_.size()); }
    Vector parameters() const override { return w_; }
    void set_parameters(const Vector& w) override;
    double predict(const Vector& x) const override;
    Vector param_gradient(const Vector& x) const override;
    Vector input_gradient(const Vector& x) const override;
    Vector last_layer_features(const Vector& x) const override;
    Vector last_layer_weights() const override { return w_; }
    void set_last_layer_weights(const Vector& w) override { set_parameters(w); }
    std::unique_ptr<Regressor> clone() const override;
    nlohmann::json architecture_json() const override;

    int degree() const { return static_cast<int>(w_.size()) - 1; }

private:
    Vector w_;
};

/// Sum of Gaussians in one variable. Parameters are laid out in blocks:
/// prefactors, then means, then log-variances (positivity by construction).
class GaussianSumModel final : public Regressor {
public:
    explicit GaussianSumModel(int n_gaussians);
    GaussianSumModel(const Vector& params, int n_gaussians);

    std::string kind() const override { return "gaussian-sum"; }
    int input_dim() const override { return 1; }
    int n_params() const override { return 3 * k_; }
    Vector parameters() const override { return w_; }
    void set_parameters(const Vector& w) override;
    double predict(const Vector& x) const override;
    Vector param_gradient(const Vector& x) const override;
    Vector input_gradient(const Vector& x) const override;
    Vector last_layer_features(const Vector& x) const override;
    Vector last_layer_weights() const override { return w_.head(k_); }
    void set_last_layer_weights(const Vector& w) override;
    std::unique_ptr<Regressor> clone() const override;
    nlohmann::json architecture_json() const override;

    int n_gaussians() const { return k_; }

private:
    int k_;
    Vector w_;
};

/// Subset-of-regressors GPR: prediction is a weighted sum of kernel
/// evaluations against a fixed set of inducing points.
class GprSorModel final : public Regressor {
public:
    GprSorModel(Matrix inducing, KernelSpec kernel);
    GprSorModel(Matrix inducing, KernelSpec kernel, const Vector& weights);

    std::string kind() const override { return "gpr-sor"; }
    int input_dim() const override { return static_cast<int>(inducing_.cols()); }
    int n_params() const override { return static_cast<int>(w_.size()); }
    Vector parameters() const override { return w_; }
    void set_parameters(const Vector& w) override;
    double predict(const Vector& x) const override;
    Vector param_gradient(const Vector& x) const override;
    Vector input_gradient(const Vector& x) const override;
    Vector last_layer_features(const Vector& x) const override;
    Vector last_layer_weights() const override { return w_; }
    void set_last_layer_weights(const Vector& w) override { set_parameters(w); }
    std::unique_ptr<Regressor> clone() const override;
    nlohmann::json architecture_json() const override;

    const Matrix& inducing_points() const { return inducing_; }
    const KernelSpec& kernel() const { return kernel_; }
    /// Gram matrix K_mm of the inducing points.
    Matrix inducing_gram() const;

private:
    Matrix inducing_;
    KernelSpec kernel_;
    Vector w_;
};

/// Fully connected network with a scalar readout. Biases (bias_mode=matched)
/// are weights on a constant-1 feature appended to each layer input, so all
/// downstream formulas stay bias-free.
class MlpModel final : public Regressor {
public:
    /// Seeded Gaussian initialization per the architecture's parametrization.
    MlpModel(const MlpArchitecture& arch, std::uint64_t seed);
    MlpModel(const MlpArchitecture& arch, const Vector& params);

    std::string kind() const override { return "mlp"; }
    int input_dim() const override { return arch_.input_dim; }
    int n_params() const override { return static_cast<int>(w_.size()); }
    Vector parameters() const override { return w_; }
    void set_parameters(const Vector& w) override;
    double predict(const Vector& x) const override;
    Vector param_gradient(const Vector& x) const override;
    Vector input_gradient(const Vector& x) const override;
    Vector last_layer_features(const Vector& x) const override;
    Vector last_layer_weights() const override;
    void set_last_layer_weights(const Vector& w) override;
    std::unique_ptr<Regressor> clone() const override;
    nlohmann::json architecture_json() const override;

    const MlpArchitecture& architecture() const { return arch_; }

    /// Per-layer factors of the prediction gradient: the gradient with
    /// respect to layer l's weight matrix is the outer product d * u^T. Lets
    /// kernel computations form gradient dot products layer by layer without
    /// materializing the full gradient at large widths.
    struct LayerTape {
        Vector u;  // layer input (bias feature included)
        Vector d;  // sensitivity of the output to the layer's pre-activation
    };
    std::vector<LayerTape> gradient_tape(const Vector& x) const;

    int n_layers() const { return static_cast<int>(arch_.hidden_widths.size()) + 1; }

private:
    struct Forward;
    Forward forward(const Vector& x) const;
    long layer_offset(int layer) const;
    int layer_rows(int layer) const;
    int layer_cols(int layer) const;

    MlpArchitecture arch_;
    Vector w_;
};

/// Closed-form subset-of-regressors fit:
/// w = (K_nm^T K_nm + sigma2 K_mm)^{-1} K_nm^T y.
GprSorModel gpr_sor_fit(const Dataset& train, const Matrix& inducing,
                        const KernelSpec& kernel, double sigma2);

std::unique_ptr<Regressor> model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const Regressor& model);

}  // namespace prkit
