#pragma once

#include "prkit/dataset.hpp"
#include "prkit/linalg.hpp"
#include "prkit/models.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace prkit {

/// Last-layer feature covariance with the calibrated variance rule
/// sigma_*^2 = alpha2 * f_*^T (F^T F + varsigma2 I)^{-1} f_*.
/// A fresh accumulation carries no factorization; set_regularizer installs
/// one. alpha2 stays 1 until calibration, so uncalibrated queries return the
/// raw value and the flag tells pipelines which one they got.
struct LlprState {
    Matrix ftf;             // N_L x N_L accumulated F^T F
    long n_accumulated = 0;
    double varsigma2 = 0.0;
    double alpha2 = 1.0;
    SpdFactor factor;       // of ftf + varsigma2 * I when installed
    bool calibrated = false;
};

/// F^T F summed over the training set in batches of at most batch_size rows;
/// the full N x N_L feature matrix is never formed. The result does not
/// depend on batch_size.
LlprState accumulate_covariance(const Regressor& model, const Dataset& train,
                                long batch_size = 256);

/// Install (or replace) the regularized factorization. A failure means the
/// features are too degenerate for this varsigma2; raise it. Clears the
/// calibrated flag.
void set_regularizer(LlprState& state, double varsigma2);

double llpr_variance(const LlprState& state, const Vector& f_star);

enum class CalibrationObjective { binned_residual, validation_nll };

struct CalibrationGrid {
    std::vector<double> varsigma2_grid;
    std::vector<double> alpha2_grid;
    CalibrationObjective objective = CalibrationObjective::binned_residual;
    long bin_size = 100;

    void validate() const;
};

/// Scale-relative defaults: varsigma2 spans [1e-8, 1e2] * mean diagonal of
/// F^T F over 11 log-spaced points; alpha2 spans [1e-4, 1e4] around the ratio
/// of the median squared validation residual to the median raw variance, over
/// 41 points.
CalibrationGrid default_calibration_grid(const LlprState& state, const Regressor& model,
                                         const Dataset& val);

/// Grid search minimizing the objective on the validation set. Only varsigma2
/// changes trigger a refactorization; alpha2 rescales analytically. Ties are
/// broken toward smaller varsigma2, then smaller alpha2.
LlprState calibrate(const LlprState& state, const Regressor& model, const Dataset& val,
                    const CalibrationGrid& grid);

/// Members share the model but redraw the readout weights from
/// N(w, alpha2 (F^T F + varsigma2 I)^{-1}). Seeded and reproducible.
std::vector<std::unique_ptr<Regressor>> sample_last_layer_ensemble(const LlprState& state,
                                                                   const Regressor& model,
                                                                   int n_members,
                                                                   std::uint64_t seed);

/// First-order propagation of input noise on top of the weight uncertainty:
/// llpr_variance + j^T input_covariance j with j the prediction's input
/// gradient. Assumes input and weight uncertainties are uncorrelated.
double propagate_input_uncertainty(const Regressor& model, const LlprState& state,
                                   const Vector& x_star, const Matrix& input_covariance);

void save_llpr_state(const std::string& path, const LlprState& state);
LlprState load_llpr_state(const std::string& path);

}  // namespace prkit
