#pragma once

#include "prkit/dataset.hpp"
#include "prkit/models.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace prkit {

/// Weighted squared-error loss: scale * sum_i (yhat_i - y_i)^2 / n_i.
/// The per-sample divisors n_i default to 1 (plain MSE); scale lets callers
/// work in Gaussian-negative-log-likelihood units (scale = 1/2) where the
/// loss curvature matches the closed-form uncertainty expressions.
struct LossSpec {
    Vector weights;     // empty = all ones
    double scale = 1.0;

    double weight_for(long i) const { return weights.size() == 0 ? 1.0 : weights(i); }
    /// d^2 loss_i / d yhat_i^2.
    double curvature(long i) const { return 2.0 * scale / weight_for(i); }
    void validate(long n_samples) const;

    static LossSpec mse() { return {}; }
    static LossSpec weighted(const Vector& n) { return {n, 1.0}; }
};

struct LossResult {
    double value = 0.0;
    Vector gradient;
};

LossResult loss_value_and_grad(const Regressor& model, const Dataset& data,
                               const LossSpec& loss);

enum class LossKind { mse, weighted_mse };
enum class OptimizerKind { adamw, lbfgs };

struct TrainConfig {
    int epochs = 400;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double lr_reduction_factor = 10.0;
    int patience_epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::mse;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::vector<int> lr_reductions;  // epochs where the LR was cut
};

struct TrainResult {
    MlpModel model;
    TrainLog log;
};

/// Mini-batch AdamW with seeded shuffling, validation-stagnation LR cuts,
/// and best-validation parameter snapshotting. Deterministic per seed.
TrainResult train_mlp(const MlpArchitecture& arch, const Dataset& train,
                      const Dataset& val, const TrainConfig& cfg);

struct LbfgsOptions {
    int max_iterations = 200;
    double gtol = 1e-8;        // infinity norm of the gradient
    int memory = 10;
    double c1 = 1e-4;          // sufficient decrease
    double c2 = 0.9;           // curvature
    int max_line_search = 60;
};

struct LbfgsResult {
    Vector x;
    double value = 0.0;
    Vector gradient;
    int iterations = 0;
    bool converged = false;
    bool line_search_failed = false;  // best iterate still returned
};

using Objective = std::function<std::pair<double, Vector>(const Vector&)>;

LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& options = {});

struct PolyfitModelResult {
    PolynomialModel model;
    bool rank_deficient = false;  // minimum-norm solution was taken
};

/// Closed-form least-squares polynomial fit on a one-feature dataset.
PolyfitModelResult polyfit(const Dataset& train, int degree);

}  // namespace prkit
