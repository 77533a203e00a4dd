#include "prkit/llpr.hpp"

#include "prkit/errors.hpp"
#include "prkit/eval.hpp"
#include "prkit/io.hpp"
#include "prkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace prkit {

namespace {

/// Median of an unsorted copy.
double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    const double step = (std::log(hi) - std::log(lo)) / (n - 1);
    for (int i = 0; i < n; ++i) g[i] = std::exp(std::log(lo) + i * step);
    return g;
}

void check_query_dim(const LlprState& state, long dim, const char* where) {
    if (state.factor.dim == 0) {
        throw ConfigError(std::string(where) +
                          ": state has no factorization; set a regularizer first");
    }
    if (dim != state.factor.dim) {
        throw DimensionMismatch(std::string(where) + ": feature vector of size " +
                                std::to_string(dim) + " against a state of size " +
                                std::to_string(state.factor.dim));
    }
}

}  // namespace

LlprState accumulate_covariance(const Regressor& model, const Dataset& train,
                                long batch_size) {
    train.validate();
    if (train.n_samples() == 0) throw EmptyInput("accumulate_covariance: empty training set");
    if (batch_size < 1) throw ConfigError("accumulate_covariance: batch_size must be >= 1");

    const long n_l = model.last_layer_weights().size();
    LlprState state;
    state.ftf = Matrix::Zero(n_l, n_l);

    const long n = train.n_samples();
    Matrix batch(std::min(batch_size, n), n_l);
    for (long start = 0; start < n; start += batch_size) {
        const long count = std::min(batch_size, n - start);
        for (long k = 0; k < count; ++k) {
            batch.row(k) = model.last_layer_features(train.features.row(start + k).transpose())
                               .transpose();
        }
        state.ftf.selfadjointView<Eigen::Lower>().rankUpdate(
            batch.topRows(count).transpose(), 1.0);
    }
    state.ftf.triangularView<Eigen::Upper>() = state.ftf.transpose();
    state.n_accumulated = n;
    return state;
}

void set_regularizer(LlprState& state, double varsigma2) {
    if (state.ftf.rows() == 0) throw EmptyInput("set_regularizer: state holds no covariance");
    if (varsigma2 < 0.0) throw ConfigError("set_regularizer: negative varsigma2");
    state.factor = cholesky_factor(state.ftf, varsigma2);
    state.varsigma2 = varsigma2;
    state.calibrated = false;
}

double llpr_variance(const LlprState& state, const Vector& f_star) {
    check_query_dim(state, f_star.size(), "llpr_variance");
    return state.alpha2 * f_star.dot(state.factor.solve(f_star));
}

void CalibrationGrid::validate() const {
    if (varsigma2_grid.empty() || alpha2_grid.empty()) {
        throw ConfigError("calibration grid: empty axis");
    }
    for (double v : varsigma2_grid) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError("calibration grid: varsigma2 values must be positive and finite");
        }
    }
    for (double a : alpha2_grid) {
        if (!(a > 0.0) || !std::isfinite(a)) {
            throw ConfigError("calibration grid: alpha2 values must be positive and finite");
        }
    }
    if (bin_size < 1) throw ConfigError("calibration grid: bin_size must be >= 1");
}

CalibrationGrid default_calibration_grid(const LlprState& state, const Regressor& model,
                                         const Dataset& val) {
    val.validate();
    if (val.n_samples() == 0) throw EmptyInput("default_calibration_grid: empty validation set");
    if (state.ftf.rows() == 0) {
        throw EmptyInput("default_calibration_grid: state holds no covariance");
    }

    double diag_scale = state.ftf.diagonal().mean();
    if (!(diag_scale > 0.0) || !std::isfinite(diag_scale)) diag_scale = 1.0;

    CalibrationGrid grid;
    grid.varsigma2_grid = log_grid(1e-8 * diag_scale, 1e2 * diag_scale, 11);

    // Raw variances at the first factorizable varsigma2 set the alpha2 scale.
    std::vector<double> raw, sq_err;
    for (double v : grid.varsigma2_grid) {
        SpdFactor factor;
        try {
            factor = cholesky_factor(state.ftf, v);
        } catch (const NotPositiveDefinite&) {
            continue;
        }
        for (long i = 0; i < val.n_samples(); ++i) {
            const Vector x = val.features.row(i).transpose();
            const Vector f = model.last_layer_features(x);
            raw.push_back(f.dot(factor.solve(f)));
            const double r = val.targets(i) - model.predict(x);
            sq_err.push_back(r * r);
        }
        break;
    }
    if (raw.empty()) {
        throw AllGridPointsFailed("default_calibration_grid: no varsigma2 factorizes");
    }

    double center = median(sq_err) / median(raw);
    if (!(center > 0.0) || !std::isfinite(center)) center = 1.0;
    grid.alpha2_grid = log_grid(1e-4 * center, 1e4 * center, 41);
    return grid;
}

LlprState calibrate(const LlprState& state, const Regressor& model, const Dataset& val,
                    const CalibrationGrid& grid) {
    grid.validate();
    val.validate();
    const long n = val.n_samples();
    if (n == 0) throw EmptyInput("calibrate: empty validation set");
    if (state.ftf.rows() == 0) throw EmptyInput("calibrate: state holds no covariance");
    if (grid.objective == CalibrationObjective::binned_residual && n < grid.bin_size) {
        throw ConfigError("calibrate: " + std::to_string(n) +
                          " validation samples cannot fill a bin of " +
                          std::to_string(grid.bin_size));
    }

    Vector predictions(n);
    Matrix features(n, state.ftf.rows());
    for (long i = 0; i < n; ++i) {
        const Vector x = val.features.row(i).transpose();
        predictions(i) = model.predict(x);
        features.row(i) = model.last_layer_features(x).transpose();
    }

    std::vector<double> varsigmas = grid.varsigma2_grid;
    std::vector<double> alphas = grid.alpha2_grid;
    std::sort(varsigmas.begin(), varsigmas.end());
    std::sort(alphas.begin(), alphas.end());

    double best_objective = std::numeric_limits<double>::infinity();
    double best_varsigma2 = 0.0, best_alpha2 = 0.0;
    bool any_factored = false;

    for (double v : varsigmas) {
        SpdFactor factor;
        try {
            factor = cholesky_factor(state.ftf, v);
        } catch (const NotPositiveDefinite&) {
            continue;
        }
        any_factored = true;

        const Matrix solved = factor.solve(Matrix(features.transpose()));
        Vector raw(n);
        for (long i = 0; i < n; ++i) raw(i) = features.row(i).dot(solved.col(i));

        for (double a : alphas) {
            double objective;
            try {
                const Vector variances = a * raw;
                objective = grid.objective == CalibrationObjective::validation_nll
                                ? nll(predictions, variances, val.targets)
                                : binned_calibration(predictions, variances, val.targets,
                                                     grid.bin_size)
                                      .log_residual;
            } catch (const NonPositiveVariance&) {
                continue;
            }
            // Ascending grids plus strict comparison break ties toward the
            // smaller varsigma2, then the smaller alpha2.
            if (objective < best_objective) {
                best_objective = objective;
                best_varsigma2 = v;
                best_alpha2 = a;
            }
        }
    }

    if (!any_factored) throw AllGridPointsFailed("calibrate: no varsigma2 factorizes");
    if (!std::isfinite(best_objective) || best_alpha2 == 0.0) {
        throw AllGridPointsFailed("calibrate: no grid point produced a finite objective");
    }

    LlprState out;
    out.ftf = state.ftf;
    out.n_accumulated = state.n_accumulated;
    out.varsigma2 = best_varsigma2;
    out.alpha2 = best_alpha2;
    out.factor = cholesky_factor(out.ftf, best_varsigma2);
    out.calibrated = true;
    return out;
}

std::vector<std::unique_ptr<Regressor>> sample_last_layer_ensemble(const LlprState& state,
                                                                   const Regressor& model,
                                                                   int n_members,
                                                                   std::uint64_t seed) {
    if (!state.calibrated) {
        throw ConfigError("sample_last_layer_ensemble: calibrate the state first");
    }
    if (n_members < 2) throw ConfigError("sample_last_layer_ensemble: need at least 2 members");
    const Vector w = model.last_layer_weights();
    check_query_dim(state, w.size(), "sample_last_layer_ensemble");

    const double alpha = std::sqrt(state.alpha2);
    Rng rng(seed);
    std::vector<std::unique_ptr<Regressor>> members;
    members.reserve(n_members);
    for (int m = 0; m < n_members; ++m) {
        Vector z(w.size());
        for (long i = 0; i < z.size(); ++i) z(i) = rng.normal();
        auto member = model.clone();
        member->set_last_layer_weights(w + alpha * state.factor.solve_lt(z));
        members.push_back(std::move(member));
    }
    return members;
}

double propagate_input_uncertainty(const Regressor& model, const LlprState& state,
                                   const Vector& x_star, const Matrix& input_covariance) {
    if (input_covariance.rows() != x_star.size() ||
        input_covariance.cols() != x_star.size()) {
        throw DimensionMismatch("propagate_input_uncertainty: covariance is " +
                                std::to_string(input_covariance.rows()) + "x" +
                                std::to_string(input_covariance.cols()) + " for a " +
                                std::to_string(x_star.size()) + "-dim input");
    }
    const double weight_term = llpr_variance(state, model.last_layer_features(x_star));
    const Vector j = model.input_gradient(x_star);
    return weight_term + j.dot(input_covariance * j);
}

void save_llpr_state(const std::string& path, const LlprState& state) {
    nlohmann::json header{{"format", "prkit-llpr-state"},
                          {"version", 1},
                          {"n_accumulated", state.n_accumulated},
                          {"varsigma2", state.varsigma2},
                          {"alpha2", state.alpha2},
                          {"calibrated", state.calibrated},
                          {"factored", state.factor.dim > 0}};
    save_matrix_blob(path, state.ftf, header);
}

LlprState load_llpr_state(const std::string& path) {
    MatrixBlob blob = load_matrix_blob(path);
    if (blob.header.value("format", "") != "prkit-llpr-state") {
        throw ConfigError("not an llpr state file: " + path);
    }
    if (blob.header.value("version", 0) != 1) {
        throw ConfigError("unsupported llpr state version in " + path);
    }
    LlprState state;
    state.ftf = std::move(blob.matrix);
    state.n_accumulated = blob.header.at("n_accumulated").get<long>();
    state.varsigma2 = blob.header.at("varsigma2").get<double>();
    state.alpha2 = blob.header.at("alpha2").get<double>();
    state.calibrated = blob.header.at("calibrated").get<bool>();
    if (blob.header.at("factored").get<bool>()) {
        state.factor = cholesky_factor(state.ftf, state.varsigma2);
    }
    return state;
}

}  // namespace prkit
