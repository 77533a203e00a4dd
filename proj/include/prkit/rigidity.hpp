#pragma once

#include "prkit/dataset.hpp"
#include "prkit/linalg.hpp"
#include "prkit/models.hpp"
#include "prkit/train.hpp"

#include <string>

namespace prkit {

/// Gauss-Newton curvature over all model parameters:
/// H = sum_i g_i c_i g_i^T (+ the exact second derivative of any explicit
/// regularizer term), where g_i is the per-sample prediction gradient and
/// c_i the loss curvature d^2 l_i / d yhat_i^2.
struct PseudoHessian {
    Matrix matrix;
    SpdFactor factor;
    Vector loss_curvatures;  // per-sample c_i actually used
};

/// Accumulates sample-by-sample; the N x P gradient matrix is never formed.
/// `regularizer_hessian` is the second derivative of any explicit penalty in
/// the loss (e.g. Sigma for a ridge term, sigma^2 K_mm for subset-of-
/// regressors GPR). `jitter` seeds the factorization ladder; any boost
/// actually applied is visible in factor.jitter_applied. Models above
/// 20000 parameters are rejected: the dense P x P matrix is the point where
/// the last-layer treatment takes over.
PseudoHessian pseudo_hessian(const Regressor& model, const Dataset& train,
                             const LossSpec& loss,
                             const Matrix& regularizer_hessian = Matrix(),
                             double jitter = 0.0);

struct RigidityResult {
    double prediction = 0.0;
    double rigidity = 0.0;      // R, in loss-curvature units
    double raw_variance = 0.0;  // 1/R, uncalibrated
};

/// R = (g^T H^{-1} g)^{-1} with g the prediction gradient at the query.
/// A zero gradient means the prediction cannot move under any parameter
/// perturbation: the rigidity is infinite and reported as an error.
RigidityResult prediction_rigidity(const Regressor& model, const PseudoHessian& h,
                                   const Vector& x_star);

/// x*^T (X^T X + Sigma)^{-1} x*, the classic linear-regression variance
/// shape. X may have zero rows (prior only).
double linear_pr_closed_form(const Vector& x_star, const Matrix& x, const Matrix& sigma);

/// k*^T (K_nm^T K_nm + sigma2 K_mm)^{-1} k*, the subset-of-regressors GPR
/// variance shape.
double gpr_pr_closed_form(const Vector& k_star, const Matrix& k_nm, const Matrix& k_mm,
                          double sigma2);

void save_pseudo_hessian(const std::string& path, const PseudoHessian& h);
PseudoHessian load_pseudo_hessian(const std::string& path);

}  // namespace prkit
