#include "prkit/ntk.hpp"

#include "prkit/errors.hpp"
#include "prkit/eval.hpp"
#include "prkit/io.hpp"
#include "prkit/llpr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <utility>

namespace prkit {

namespace {

constexpr double kCorrelationSlack = 1e-9;
constexpr double kDoublingTolerance = 1e-6;

/// Clamps a kernel argument into [-1, 1], allowing rounding slack only.
double clamp_correlation(double xi) {
    if (!(std::fabs(xi) <= 1.0 + kCorrelationSlack)) {
        std::ostringstream msg;
        msg << "kernel argument " << xi << " outside [-1, 1]";
        throw DomainExceeded(msg.str());
    }
    return std::clamp(xi, -1.0, 1.0);
}

/// Gauss-Hermite nodes and weights for weight exp(-t^2), via the symmetric
/// eigenproblem of the Jacobi matrix (Golub-Welsch).
void gauss_hermite(int order, std::vector<double>& t, std::vector<double>& w) {
    Matrix jacobi = Matrix::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double off = std::sqrt(k / 2.0);
        jacobi(k, k - 1) = off;
        jacobi(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("Gauss-Hermite eigensolve failed", 0.0);
    }
    t.resize(order);
    w.resize(order);
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (int i = 0; i < order; ++i) {
        t[i] = es.eigenvalues()(i);
        const double first = es.eigenvectors()(0, i);
        w[i] = sqrt_pi * first * first;
    }
}

double relu_pair_value(double xi) {
    // E[relu(u) relu(v)] = (sqrt(1-xi^2) + xi (pi - acos xi)) / (2 pi)
    return (std::sqrt(std::max(0.0, 1.0 - xi * xi)) + xi * (std::numbers::pi - std::acos(xi))) /
           (2.0 * std::numbers::pi);
}

double relu_pair_derivative(double xi) {
    // E[step(u) step(v)] = (pi - acos xi) / (2 pi)
    return (std::numbers::pi - std::acos(xi)) / (2.0 * std::numbers::pi);
}

}  // namespace

DualActivation::DualActivation(Activation activation, int order) : order_(order) {
    if (order_ < 2) throw ConfigError("quadrature order must be at least 2");
    if (activation == Activation::relu) {
        arc_cosine_ = true;
        normalizer_ = 0.5;
        return;
    }
    phi_ = [activation](double x) { return activation_value(activation, x); };
    phi_prime_ = [activation](double x) { return activation_derivative(activation, x); };
    init_quadrature();
}

DualActivation::DualActivation(std::function<double(double)> phi,
                               std::function<double(double)> phi_prime, int order)
    : phi_(std::move(phi)), phi_prime_(std::move(phi_prime)), order_(order) {
    if (order_ < 2) throw ConfigError("quadrature order must be at least 2");
    if (!phi_ || !phi_prime_) throw ConfigError("dual activation needs phi and phi'");
    init_quadrature();
}

void DualActivation::init_quadrature() {
    gauss_hermite(order_, base_.t, base_.w);
    gauss_hermite(2 * order_, doubled_.t, doubled_.w);
    // E[phi(u)^2], one-dimensional, per order.
    for (Nodes* q : {&base_, &doubled_}) {
        double acc = 0.0;
        for (size_t i = 0; i < q->t.size(); ++i) {
            const double u = std::numbers::sqrt2 * q->t[i];
            const double p = phi_(u);
            acc += q->w[i] * p * p;
        }
        q->norm = acc / std::sqrt(std::numbers::pi);
        if (!(q->norm > 1e-12)) throw ConfigError("activation has a vanishing second moment");
    }
    normalizer_ = doubled_.norm;
}

double DualActivation::pair_expectation(const Nodes& q, bool derivative, double xi) const {
    const auto& f = derivative ? phi_prime_ : phi_;
    const double c = std::sqrt(std::max(0.0, 1.0 - xi * xi));
    const size_t n = q.t.size();
    double outer = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double u = std::numbers::sqrt2 * q.t[i];
        double inner = 0.0;
        for (size_t k = 0; k < n; ++k) {
            inner += q.w[k] * f(xi * u + c * std::numbers::sqrt2 * q.t[k]);
        }
        outer += q.w[i] * f(u) * inner;
    }
    return outer / std::numbers::pi;
}

double DualActivation::checked_dual(bool derivative, double xi) const {
    const double coarse = pair_expectation(base_, derivative, xi) / base_.norm;
    const double fine = pair_expectation(doubled_, derivative, xi) / doubled_.norm;
    if (!(std::fabs(coarse - fine) <= kDoublingTolerance)) {
        std::ostringstream msg;
        msg << "order " << order_ << " and " << 2 * order_ << " quadratures disagree by "
            << std::fabs(coarse - fine) << " at xi = " << xi;
        throw QuadratureUnstable(msg.str());
    }
    return coarse;
}

double DualActivation::value(double xi) const {
    xi = clamp_correlation(xi);
    if (arc_cosine_) return relu_pair_value(xi) / normalizer_;
    return checked_dual(false, xi);
}

double DualActivation::derivative(double xi) const {
    xi = clamp_correlation(xi);
    if (arc_cosine_) return relu_pair_derivative(xi) / normalizer_;
    return checked_dual(true, xi);
}

namespace {

/// Recursion core on an already-normalized Gram matrix: layers 0..depth.
std::vector<KernelPair> recursion_on_gram(const Matrix& k0, const DualActivation& dual,
                                          int depth) {
    const long n = k0.rows();
    std::vector<KernelPair> layers;
    layers.reserve(depth + 1);
    layers.push_back({k0, k0, 0});
    for (int l = 1; l <= depth; ++l) {
        const Matrix& nngp_prev = layers.back().nngp;
        const Matrix& ntk_prev = layers.back().ntk;
        KernelPair next;
        next.depth = l;
        next.nngp = Matrix(n, n);
        next.ntk = Matrix(n, n);
        for (long i = 0; i < n; ++i) {
            for (long j = i; j < n; ++j) {
                const double arg = clamp_correlation(nngp_prev(i, j));
                const double nngp = dual.value(arg);
                const double ntk = nngp + ntk_prev(i, j) * dual.derivative(arg);
                next.nngp(i, j) = nngp;
                next.nngp(j, i) = nngp;
                next.ntk(i, j) = ntk;
                next.ntk(j, i) = ntk;
            }
        }
        layers.push_back(std::move(next));
    }
    return layers;
}

Vector row_norms_checked(const Matrix& points) {
    Vector norms = points.rowwise().norm();
    for (long i = 0; i < norms.size(); ++i) {
        if (norms(i) == 0.0) {
            throw ConfigError("kernel recursion input row " + std::to_string(i) +
                              " has zero norm and cannot be normalized");
        }
    }
    return norms;
}

}  // namespace

std::vector<KernelPair> kernel_recursion(const Matrix& points, const MlpArchitecture& arch) {
    arch.validate();
    if (points.rows() == 0) throw EmptyInput("kernel recursion needs at least one input");
    if (points.cols() != arch.input_dim) {
        throw DimensionMismatch("input columns " + std::to_string(points.cols()) +
                                " do not match architecture input_dim " +
                                std::to_string(arch.input_dim));
    }
    const Vector norms = row_norms_checked(points);
    const Matrix normalized = points.array().colwise() / norms.array();
    Matrix k0 = normalized * normalized.transpose();
    for (long i = 0; i < k0.rows(); ++i) {
        for (long j = 0; j < k0.cols(); ++j) k0(i, j) = clamp_correlation(k0(i, j));
    }
    const DualActivation dual(arch.activation);
    const int depth = static_cast<int>(arch.hidden_widths.size());
    auto layers = recursion_on_gram(k0, dual, depth);
    if (arch.activation == Activation::identity) {
        const Matrix scale = norms * norms.transpose();
        for (auto& layer : layers) {
            layer.nngp = layer.nngp.cwiseProduct(scale);
            layer.ntk = layer.ntk.cwiseProduct(scale);
        }
    }
    return layers;
}

std::vector<KernelPair> kernel_recursion(const Vector& x_i, const Vector& x_j,
                                         const MlpArchitecture& arch) {
    if (x_i.size() != x_j.size()) {
        throw DimensionMismatch("kernel recursion inputs have different dimensions");
    }
    Matrix points(2, x_i.size());
    points.row(0) = x_i.transpose();
    points.row(1) = x_j.transpose();
    return kernel_recursion(points, arch);
}

double empirical_ntk(const Regressor& model, const Vector& x_i, const Vector& x_j,
                     NtkScope scope) {
    if (x_i.size() != model.input_dim() || x_j.size() != model.input_dim()) {
        throw DimensionMismatch("empirical NTK input dimension does not match the model");
    }
    if (scope == NtkScope::last_layer) {
        return model.last_layer_features(x_i).dot(model.last_layer_features(x_j));
    }
    const auto* mlp = dynamic_cast<const MlpModel*>(&model);
    if (mlp == nullptr) throw ConfigError("full-scope empirical NTK requires an mlp model");
    const auto tape_i = mlp->gradient_tape(x_i);
    const auto tape_j = mlp->gradient_tape(x_j);
    double acc = 0.0;
    for (size_t l = 0; l < tape_i.size(); ++l) {
        acc += tape_i[l].d.dot(tape_j[l].d) * tape_i[l].u.dot(tape_j[l].u);
    }
    return acc;
}

KernelProvider recursion_kernels(const MlpArchitecture& arch) {
    arch.validate();
    auto dual = std::make_shared<DualActivation>(arch.activation);
    const int depth = static_cast<int>(arch.hidden_widths.size());
    const bool rescale = arch.activation == Activation::identity;
    auto eval = [dual, depth, rescale](const Vector& a, const Vector& b, bool want_ntk) {
        if (a.size() != b.size()) {
            throw DimensionMismatch("kernel arguments have different dimensions");
        }
        const double na = a.norm();
        const double nb = b.norm();
        if (na == 0.0 || nb == 0.0) {
            throw ConfigError("kernel recursion input has zero norm and cannot be normalized");
        }
        Matrix k0(2, 2);
        k0 << 1.0, clamp_correlation(a.dot(b) / (na * nb)),
              clamp_correlation(a.dot(b) / (na * nb)), 1.0;
        const auto layers = recursion_on_gram(k0, *dual, depth);
        double value = want_ntk ? layers.back().ntk(0, 1) : layers.back().nngp(0, 1);
        if (rescale) value *= na * nb;
        return value;
    };
    KernelProvider provider;
    provider.nngp = [eval](const Vector& a, const Vector& b) { return eval(a, b, false); };
    provider.ntk = [eval](const Vector& a, const Vector& b) { return eval(a, b, true); };
    return provider;
}

LinearizedPosterior linearized_posterior(const Dataset& train, const Vector& x_star,
                                         const KernelProvider& kernels, double learning_rate,
                                         double time, double jitter) {
    train.validate();
    if (train.n_samples() == 0) throw EmptyInput("linearized posterior needs training data");
    if (x_star.size() != train.n_features()) {
        throw DimensionMismatch("query dimension does not match the training features");
    }
    if (!kernels.nngp || !kernels.ntk) throw ConfigError("kernel provider is incomplete");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (std::isnan(time) || time < 0.0) throw ConfigError("training time must be >= 0");
    if (jitter < 0.0) throw ConfigError("jitter must be >= 0");

    const long n = train.n_samples();
    std::vector<Vector> rows(n);
    for (long i = 0; i < n; ++i) rows[i] = train.features.row(i).transpose();

    Matrix k_ntk(n, n);
    Matrix k_nngp(n, n);
    for (long i = 0; i < n; ++i) {
        for (long j = i; j < n; ++j) {
            const double t = kernels.ntk(rows[i], rows[j]);
            const double g = kernels.nngp(rows[i], rows[j]);
            k_ntk(i, j) = t;
            k_ntk(j, i) = t;
            k_nngp(i, j) = g;
            k_nngp(j, i) = g;
        }
    }
    Vector k_ntk_star(n);
    Vector k_nngp_star(n);
    for (long i = 0; i < n; ++i) {
        k_ntk_star(i) = kernels.ntk(rows[i], x_star);
        k_nngp_star(i) = kernels.nngp(rows[i], x_star);
    }
    const double k_star_star = kernels.nngp(x_star, x_star);

    k_ntk.diagonal().array() += jitter;
    const SymEig eig = sym_eig_truncated(k_ntk, static_cast<int>(n));
    const double smallest = eig.eigenvalues(n - 1);
    if (!(smallest > 0.0)) {
        std::ostringstream msg;
        msg << "train NTK Gram has eigenvalue " << smallest << " after jitter " << jitter;
        throw NotPositiveDefinite(msg.str());
    }

    // M = K^{-1}(I - exp(-eta K t)) = Q diag(m(lambda)) Q^T with
    // m(lambda) = -expm1(-eta lambda t)/lambda; t = inf gives 1/lambda.
    Vector m(n);
    for (long i = 0; i < n; ++i) {
        const double lambda = eig.eigenvalues(i);
        m(i) = -std::expm1(-learning_rate * lambda * time) / lambda;
    }

    const Vector qk = eig.eigenvectors.transpose() * k_ntk_star;
    const Vector qy = eig.eigenvectors.transpose() * train.targets;
    LinearizedPosterior out;
    out.mean = (m.array() * qk.array() * qy.array()).sum();

    const Vector v = eig.eigenvectors * (m.array() * qk.array()).matrix();
    const double term_cov = v.dot(k_nngp * v);
    const double term_cross_a = v.dot(k_nngp_star);
    const double term_cross_b = k_nngp_star.dot(v);
    out.variance = k_star_star + term_cov - term_cross_a - term_cross_b;
    return out;
}

std::vector<GapRow> approximation_gap_study(const MlpArchitecture& arch, int min_depth,
                                            int max_depth,
                                            const std::vector<std::pair<Vector, Vector>>& pairs) {
    arch.validate();
    if (min_depth < 1 || max_depth < min_depth) throw ConfigError("bad depth range");
    if (pairs.empty()) throw EmptyInput("approximation gap study needs input pairs");
    if (arch.activation == Activation::relu) {
        throw ConfigError(
            "approximation gap study needs an activation whose dual vanishes at zero "
            "correlation; relu's dual has a constant term");
    }
    const DualActivation dual(arch.activation);
    const double a = dual.derivative(0.0);

    std::vector<GapRow> rows;
    rows.reserve(pairs.size() * (max_depth - min_depth + 1));
    for (const auto& [x_i, x_j] : pairs) {
        if (x_i.size() != x_j.size()) {
            throw DimensionMismatch("gap study inputs have different dimensions");
        }
        const double ni = x_i.norm();
        const double nj = x_j.norm();
        if (ni == 0.0 || nj == 0.0) {
            throw ConfigError("gap study input has zero norm and cannot be normalized");
        }
        const double xi = clamp_correlation(x_i.dot(x_j) / (ni * nj));
        double nngp = xi;
        double ntk = xi;
        double a_power = 1.0;
        for (int l = 1; l <= max_depth; ++l) {
            const double arg = clamp_correlation(nngp);
            nngp = dual.value(arg);
            ntk = nngp + ntk * dual.derivative(arg);
            a_power *= a;
            if (l < min_depth) continue;
            GapRow row;
            row.depth = l;
            row.inner_product = xi;
            row.feature_gap = ntk - (l + 1) * a_power * xi;
            row.kernel_gap = ntk - (l + 1) * nngp;
            row.kernel_closer = std::fabs(row.kernel_gap) <= std::fabs(row.feature_gap);
            rows.push_back(row);
        }
    }
    return rows;
}

void save_gap_study_csv(const std::string& path, const std::vector<GapRow>& rows) {
    std::string out = "depth,inner_product,feature_gap,kernel_gap,kernel_closer\n";
    for (const auto& row : rows) {
        out += std::to_string(row.depth);
        out += ',';
        out += format_double(row.inner_product);
        out += ',';
        out += format_double(row.feature_gap);
        out += ',';
        out += format_double(row.kernel_gap);
        out += ',';
        out += row.kernel_closer ? '1' : '0';
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<WidthSweepRow> width_sweep(const MlpArchitecture& base, const std::vector<int>& widths,
                                       const Dataset& train, const Dataset& val,
                                       const Dataset& test, const TrainConfig& config,
                                       int bin_size) {
    base.validate();
    if (widths.empty()) throw EmptyInput("width sweep needs at least one width");
    for (size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1) throw ConfigError("widths must be >= 1");
        if (i > 0 && widths[i] <= widths[i - 1]) throw ConfigError("widths must be ascending");
    }
    if (bin_size < 1) throw ConfigError("bin_size must be >= 1");
    train.validate();
    val.validate();
    test.validate();

    std::vector<WidthSweepRow> rows;
    rows.reserve(widths.size());
    for (size_t idx = 0; idx < widths.size(); ++idx) {
        MlpArchitecture arch = base;
        arch.hidden_widths.assign(base.hidden_widths.size(), widths[idx]);
        TrainConfig cfg = config;
        cfg.seed = config.seed + static_cast<std::uint64_t>(idx);
        TrainResult fit = train_mlp(arch, train, val, cfg);

        LlprState state = accumulate_covariance(fit.model, train);
        CalibrationGrid grid = default_calibration_grid(state, fit.model, val);
        grid.objective = CalibrationObjective::binned_residual;
        grid.bin_size = bin_size;
        const LlprState calibrated = calibrate(state, fit.model, val, grid);

        const long n = test.n_samples();
        Vector predictions(n);
        Vector variances(n);
        for (long i = 0; i < n; ++i) {
            const Vector x = test.features.row(i).transpose();
            predictions(i) = fit.model.predict(x);
            variances(i) = llpr_variance(calibrated, fit.model.last_layer_features(x));
        }
        WidthSweepRow row;
        row.width = widths[idx];
        row.rmse_value = rmse(predictions, test.targets);
        row.nll_value = nll(predictions, variances, test.targets);
        row.calibration_residual =
            binned_calibration(predictions, variances, test.targets, bin_size).log_residual;
        row.varsigma2 = calibrated.varsigma2;
        row.alpha2 = calibrated.alpha2;
        rows.push_back(row);
    }
    return rows;
}

void save_width_sweep_csv(const std::string& path, const std::vector<WidthSweepRow>& rows) {
    std::string out = "width,rmse,nll,calibration_residual,varsigma2,alpha2\n";
    for (const auto& row : rows) {
        out += std::to_string(row.width);
        out += ',';
        out += format_double(row.rmse_value);
        out += ',';
        out += format_double(row.nll_value);
        out += ',';
        out += format_double(row.calibration_residual);
        out += ',';
        out += format_double(row.varsigma2);
        out += ',';
        out += format_double(row.alpha2);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace prkit
