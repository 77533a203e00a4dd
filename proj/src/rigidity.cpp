#include "prkit/rigidity.hpp"

#include "prkit/errors.hpp"
#include "prkit/io.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace prkit {

namespace {

constexpr int kMaxFullPrParams = 20000;

SpdFactor factor_with_ladder(const Matrix& h, double jitter) {
    const double scale = std::max(h.diagonal().array().abs().mean(), 1e-300);
    double j = jitter;
    for (;;) {
        try {
            return cholesky_factor(h, j);
        } catch (const NotPositiveDefinite&) {
            j = (j == 0.0) ? scale * 1e-14 : j * 10.0;
            if (j > scale * 1e-6) throw;
        }
    }
}

}  // namespace

PseudoHessian pseudo_hessian(const Regressor& model, const Dataset& train,
                             const LossSpec& loss, const Matrix& regularizer_hessian,
                             double jitter) {
    train.validate();
    if (train.n_samples() == 0) throw EmptyInput("pseudo_hessian: empty training set");
    loss.validate(train.n_samples());
    const int p = model.n_params();
    if (p > kMaxFullPrParams) {
        throw ModelTooLarge("pseudo_hessian: " + std::to_string(p) +
                            " parameters exceed the dense full-parameter limit of " +
                            std::to_string(kMaxFullPrParams) +
                            "; use the last-layer treatment instead");
    }
    if (regularizer_hessian.size() > 0 &&
        (regularizer_hessian.rows() != p || regularizer_hessian.cols() != p)) {
        throw DimensionMismatch("pseudo_hessian: regularizer hessian is " +
                                std::to_string(regularizer_hessian.rows()) + "x" +
                                std::to_string(regularizer_hessian.cols()) + ", expected " +
                                std::to_string(p) + "x" + std::to_string(p));
    }

    PseudoHessian h;
    h.matrix = regularizer_hessian.size() > 0 ? Matrix(regularizer_hessian)
                                              : Matrix(Matrix::Zero(p, p));
    h.loss_curvatures.resize(train.n_samples());
    for (long i = 0; i < train.n_samples(); ++i) {
        const double c = loss.curvature(i);
        const Vector g = model.param_gradient(train.features.row(i).transpose());
        h.matrix.selfadjointView<Eigen::Lower>().rankUpdate(g, c);
        h.loss_curvatures(i) = c;
    }
    h.matrix.triangularView<Eigen::Upper>() = h.matrix.transpose();
    h.factor = factor_with_ladder(h.matrix, jitter);
    return h;
}

RigidityResult prediction_rigidity(const Regressor& model, const PseudoHessian& h,
                                   const Vector& x_star) {
    if (h.factor.dim != model.n_params()) {
        throw DimensionMismatch("prediction_rigidity: hessian over " +
                                std::to_string(h.factor.dim) + " parameters, model has " +
                                std::to_string(model.n_params()));
    }
    const Vector g = model.param_gradient(x_star);
    if (g.norm() == 0.0) {
        throw DegenerateGradient(
            "prediction_rigidity: zero prediction gradient, rigidity is infinite");
    }
    RigidityResult out;
    out.prediction = model.predict(x_star);
    out.raw_variance = g.dot(h.factor.solve(g));
    out.rigidity = 1.0 / out.raw_variance;
    return out;
}

double linear_pr_closed_form(const Vector& x_star, const Matrix& x, const Matrix& sigma) {
    if (sigma.rows() != x_star.size() || sigma.cols() != x_star.size()) {
        throw DimensionMismatch("linear_pr_closed_form: sigma is " +
                                std::to_string(sigma.rows()) + "x" +
                                std::to_string(sigma.cols()) + " for a " +
                                std::to_string(x_star.size()) + "-dim query");
    }
    Matrix a = sigma;
    if (x.rows() > 0) {
        if (x.cols() != x_star.size()) {
            throw DimensionMismatch("linear_pr_closed_form: design has " +
                                    std::to_string(x.cols()) + " columns for a " +
                                    std::to_string(x_star.size()) + "-dim query");
        }
        a += x.transpose() * x;
    }
    return x_star.dot(cholesky_factor(a).solve(x_star));
}

double gpr_pr_closed_form(const Vector& k_star, const Matrix& k_nm, const Matrix& k_mm,
                          double sigma2) {
    const long m = k_star.size();
    if (k_nm.cols() != m || k_mm.rows() != m || k_mm.cols() != m) {
        throw DimensionMismatch("gpr_pr_closed_form: inconsistent inducing dimension");
    }
    if (sigma2 < 0.0) throw ConfigError("gpr_pr_closed_form: negative sigma2");
    const Matrix a = k_nm.transpose() * k_nm + sigma2 * k_mm;
    return k_star.dot(cholesky_factor(a).solve(k_star));
}

void save_pseudo_hessian(const std::string& path, const PseudoHessian& h) {
    nlohmann::json header{{"format", "prkit-pseudo-hessian"},
                          {"version", 1},
                          {"jitter_applied", h.factor.jitter_applied},
                          {"loss_curvatures", vec_to_json(h.loss_curvatures)}};
    save_matrix_blob(path, h.matrix, header);
}

PseudoHessian load_pseudo_hessian(const std::string& path) {
    MatrixBlob blob = load_matrix_blob(path);
    if (blob.header.value("format", "") != "prkit-pseudo-hessian") {
        throw ConfigError("not a pseudo-hessian file: " + path);
    }
    if (blob.header.value("version", 0) != 1) {
        throw ConfigError("unsupported pseudo-hessian version in " + path);
    }
    PseudoHessian h;
    h.matrix = std::move(blob.matrix);
    h.loss_curvatures = vec_from_json(blob.header.at("loss_curvatures"));
    h.factor = cholesky_factor(h.matrix, blob.header.at("jitter_applied").get<double>());
    return h;
}

}  // namespace prkit
