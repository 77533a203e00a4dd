#pragma once

#include "prkit/dataset.hpp"
#include "prkit/linalg.hpp"
#include "prkit/models.hpp"
#include "prkit/train.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace prkit {

/// Normalized dual of a scalar activation:
///   phi_dual(xi) = E[phi(u) phi(v)] / E[phi(u)^2]
/// with (u, v) a standard bivariate Gaussian pair of correlation xi, so that
/// phi_dual(1) = 1 by construction. derivative() is the dual of phi' under
/// the same normalizer, which equals d/dxi phi_dual(xi).
///
/// Smooth activations are integrated by tensor-product Gauss-Hermite
/// quadrature; every evaluation is re-done at twice the order and
/// QuadratureUnstable is thrown if the two disagree by more than 1e-6.
/// ReLU's kinked integrand defeats Gauss-Hermite (the error decays like
/// 1/order, still ~5e-4 at order 256), so relu uses the exact arc-cosine
/// closed form instead.
class DualActivation {
public:
    explicit DualActivation(Activation activation, int order = 64);
    /// Custom scalar function and its derivative; always quadrature-backed.
    DualActivation(std::function<double(double)> phi,
                   std::function<double(double)> phi_prime, int order = 64);

    /// phi_dual(xi). Requires |xi| <= 1 up to rounding, else DomainExceeded.
    double value(double xi) const;
    /// Dual of phi' over E[phi(u)^2], i.e. the derivative of value().
    double derivative(double xi) const;

    /// E[phi(u)^2] under a standard Gaussian.
    double normalizer() const { return normalizer_; }
    int order() const { return order_; }

private:
    // Each order carries its own E[phi(u)^2] so that the normalized dual is
    // exactly 1 at xi = 1 regardless of quadrature error.
    struct Nodes {
        std::vector<double> t;
        std::vector<double> w;
        double norm = 1.0;
    };

    void init_quadrature();
    double pair_expectation(const Nodes& q, bool derivative, double xi) const;
    double checked_dual(bool derivative, double xi) const;

    std::function<double(double)> phi_;
    std::function<double(double)> phi_prime_;
    int order_ = 64;
    bool arc_cosine_ = false;
    double normalizer_ = 1.0;
    Nodes base_;
    Nodes doubled_;
};

/// Gram matrices of the infinite-width kernels at one layer of the
/// recursion. depth 0 holds the raw inner products; depth l >= 1 applies the
/// dual activation l times.
struct KernelPair {
    Matrix nngp;
    Matrix ntk;
    int depth = 0;
};

/// Infinite-width NNGP/NTK kernels of the architecture, one KernelPair per
/// layer from the inputs (depth 0) through every hidden activation. Rows of
/// `points` are the inputs; they are normalized to unit norm first so the
/// recursion arguments stay valid correlations. For the identity activation
/// the raw norms are reapplied as a rank-one scale, which keeps the linear
/// chain exact on unnormalized inputs.
std::vector<KernelPair> kernel_recursion(const Matrix& points, const MlpArchitecture& arch);
/// Two-point convenience wrapper: 2x2 Gram over {x_i, x_j}.
std::vector<KernelPair> kernel_recursion(const Vector& x_i, const Vector& x_j,
                                         const MlpArchitecture& arch);

enum class NtkScope { full, last_layer };

/// Finite-width tangent kernel of a trained model at two inputs.
/// full: dot product of the prediction gradients with respect to all
/// weights, accumulated layer by layer from the gradient tape (mlp only).
/// last_layer: dot product of the last-layer features (any regressor).
double empirical_ntk(const Regressor& model, const Vector& x_i, const Vector& x_j,
                     NtkScope scope);

/// Kernel evaluation callbacks for linearized_posterior. nngp and ntk must
/// be symmetric positive-definite kernels on the same input space.
struct KernelProvider {
    std::function<double(const Vector&, const Vector&)> nngp;
    std::function<double(const Vector&, const Vector&)> ntk;
};

/// Provider backed by kernel_recursion at the architecture's full depth.
KernelProvider recursion_kernels(const MlpArchitecture& arch);

struct LinearizedPosterior {
    double mean = 0.0;
    double variance = 0.0;
};

/// Output distribution of an infinitely wide network after gradient-flow
/// training for `time` under learning rate `learning_rate`:
///   mean     = k_ntk*^T K^{-1} (I - exp(-eta K t)) y
///   variance = k_nngp(*,*) + k_ntk*^T M K_nngp M k_ntk*
///              - k_ntk*^T M k_nngp* - k_nngp*^T M k_ntk*
/// with K the train NTK Gram, M = K^{-1}(I - exp(-eta K t)), and the matrix
/// exponential taken through the symmetric eigendecomposition. `time` may be
/// infinity (fully trained limit, M -> K^{-1}). `jitter` is added to K's
/// diagonal before factorization; a non-positive eigenvalue after that
/// throws NotPositiveDefinite.
LinearizedPosterior linearized_posterior(const Dataset& train, const Vector& x_star,
                                         const KernelProvider& kernels, double learning_rate,
                                         double time, double jitter = 0.0);

/// One (depth, input pair) row of the last-layer approximation study:
///   feature_gap = K_ntk^(l) - (l+1) a^l x_i.x_j   (a = phi_dual'(0))
///   kernel_gap  = K_ntk^(l) - (l+1) K_nngp^(l)
/// kernel_closer records |kernel_gap| <= |feature_gap|.
struct GapRow {
    int depth = 0;
    double inner_product = 0.0;
    double feature_gap = 0.0;
    double kernel_gap = 0.0;
    bool kernel_closer = false;
};

/// Evaluates both gaps for every depth in [min_depth, max_depth] and every
/// input pair. Inputs are unit-normalized as in kernel_recursion and should
/// have small inner products for the gaps to be meaningful. Activations
/// whose dual has a constant term at xi = 0 (relu) are rejected: the study
/// linearizes around 0. silu is accepted although its dual is not exactly
/// odd, so both gaps carry a small even offset.
std::vector<GapRow> approximation_gap_study(const MlpArchitecture& arch, int min_depth,
                                            int max_depth,
                                            const std::vector<std::pair<Vector, Vector>>& pairs);

void save_gap_study_csv(const std::string& path, const std::vector<GapRow>& rows);

struct WidthSweepRow {
    int width = 0;
    double rmse_value = 0.0;
    double nll_value = 0.0;
    double calibration_residual = 0.0;
    double varsigma2 = 0.0;
    double alpha2 = 1.0;
};

/// Trains one model per width (every hidden layer set to that width), runs
/// the last-layer uncertainty pipeline on each, and reports test metrics
/// plus the binned calibration residual. Widths must be ascending and >= 1.
std::vector<WidthSweepRow> width_sweep(const MlpArchitecture& base, const std::vector<int>& widths,
                                       const Dataset& train, const Dataset& val,
                                       const Dataset& test, const TrainConfig& config,
                                       int bin_size = 100);

void save_width_sweep_csv(const std::string& path, const std::vector<WidthSweepRow>& rows);

}  // namespace prkit
