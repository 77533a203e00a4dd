#include "prkit/train.hpp"

#include "prkit/errors.hpp"
#include "prkit/rng.hpp"

#include <cmath>
#include <limits>

namespace prkit {

void LossSpec::validate(long n_samples) const {
    if (weights.size() != 0 && weights.size() != n_samples) {
        throw DimensionMismatch("loss: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(n_samples) + " samples");
    }
    for (long i = 0; i < weights.size(); ++i) {
        if (!(weights(i) > 0.0)) {
            throw ConfigError("loss: weight " + std::to_string(i) + " is not positive");
        }
    }
    if (!(scale > 0.0)) throw ConfigError("loss: scale must be positive");
}

LossResult loss_value_and_grad(const Regressor& model, const Dataset& data,
                               const LossSpec& loss) {
    data.validate();
    if (data.n_samples() == 0) throw EmptyInput("loss: empty dataset");
    loss.validate(data.n_samples());

    LossResult out;
    out.gradient = Vector::Zero(model.n_params());
    for (long i = 0; i < data.n_samples(); ++i) {
        const Vector x = data.features.row(i).transpose();
        const double r = model.predict(x) - data.targets(i);
        const double n_i = loss.weight_for(i);
        out.value += loss.scale * r * r / n_i;
        out.gradient += (2.0 * loss.scale * r / n_i) * model.param_gradient(x);
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: negative weight decay");
    if (!(lr_reduction_factor > 1.0)) throw ConfigError("train: lr_reduction_factor must be > 1");
    if (patience_epochs < 1) throw ConfigError("train: patience_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
}

namespace {

LossSpec loss_for(const TrainConfig& cfg, const Dataset& data) {
    if (cfg.loss == LossKind::weighted_mse && data.sample_weights.size() > 0) {
        return LossSpec::weighted(data.sample_weights);
    }
    return LossSpec::mse();
}

double mean_loss(const MlpModel& model, const Dataset& data, const LossSpec& loss) {
    double acc = 0.0;
    for (long i = 0; i < data.n_samples(); ++i) {
        const double r = model.predict(data.features.row(i).transpose()) - data.targets(i);
        acc += loss.scale * r * r / loss.weight_for(i);
    }
    return acc / static_cast<double>(data.n_samples());
}

}  // namespace

TrainResult train_mlp(const MlpArchitecture& arch, const Dataset& train,
                      const Dataset& val, const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    val.validate();
    if (train.n_samples() == 0 || val.n_samples() == 0) {
        throw EmptyInput("train_mlp: empty train or validation split");
    }
    if (train.n_features() != val.n_features() || train.n_features() != arch.input_dim) {
        throw DimensionMismatch("train_mlp: feature dims (train " +
                                std::to_string(train.n_features()) + ", val " +
                                std::to_string(val.n_features()) + ", arch " +
                                std::to_string(arch.input_dim) + ") disagree");
    }
    if (cfg.optimizer != OptimizerKind::adamw) {
        throw ConfigError("train_mlp: only the adamw optimizer trains MLPs");
    }

    const LossSpec train_loss = loss_for(cfg, train);
    const LossSpec val_loss = loss_for(cfg, val);
    train_loss.validate(train.n_samples());

    Rng rng(cfg.seed);
    MlpModel model(arch, rng.next_seed());
    Vector w = model.parameters();
    Vector m = Vector::Zero(w.size());
    Vector v = Vector::Zero(w.size());

    std::vector<long> order(static_cast<std::size_t>(train.n_samples()));
    for (long i = 0; i < train.n_samples(); ++i) order[static_cast<std::size_t>(i)] = i;

    TrainResult result{model, {}};
    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    Vector best_w = w;
    int best_epoch = 0;
    int stagnant = 0;
    long step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Vector g = Vector::Zero(w.size());
            for (std::size_t b = start; b < end; ++b) {
                const long i = order[b];
                const Vector x = train.features.row(i).transpose();
                const double r = model.predict(x) - train.targets(i);
                g += (2.0 * train_loss.scale * r / train_loss.weight_for(i)) *
                     model.param_gradient(x);
            }
            g /= static_cast<double>(end - start);
            if (!g.allFinite()) {
                throw NonFiniteLoss("train_mlp: non-finite gradient", epoch);
            }
            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
            v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
            for (long i = 0; i < w.size(); ++i) {
                // Decoupled weight decay.
                w(i) -= lr * (m(i) / bc1 / (std::sqrt(v(i) / bc2) + cfg.adam_eps) +
                              cfg.weight_decay * w(i));
            }
            model.set_parameters(w);
        }

        const double tl = mean_loss(model, train, train_loss);
        const double vl = mean_loss(model, val, val_loss);
        if (!std::isfinite(tl) || !std::isfinite(vl)) {
            throw NonFiniteLoss("train_mlp: diverged", epoch);
        }
        result.log.epochs.push_back({epoch, tl, vl, lr});

        if (vl < best_val * (1.0 - 1e-12) || best_epoch == 0) {
            best_val = vl;
            best_w = w;
            best_epoch = epoch;
            stagnant = 0;
        } else {
            ++stagnant;
            if (stagnant >= cfg.patience_epochs) {
                lr /= cfg.lr_reduction_factor;
                result.log.lr_reductions.push_back(epoch);
                stagnant = 0;
            }
        }
    }

    model.set_parameters(best_w);
    result.model = model;
    result.log.best_epoch = best_epoch;
    result.log.best_val_loss = best_val;
    return result;
}

namespace {

struct WolfeResult {
    double alpha = 0.0;
    double value = 0.0;
    Vector gradient;
    bool ok = false;
};

/// Strong Wolfe line search (bracket then zoom by bisection).
WolfeResult strong_wolfe(const Objective& objective, const Vector& x, const Vector& p,
                         double f0, const Vector& g0, const LbfgsOptions& opt) {
    const double d0 = g0.dot(p);
    WolfeResult best{0.0, f0, g0, false};
    if (d0 >= 0.0) return best;  // not a descent direction

    auto probe = [&](double a) {
        auto [f, g] = objective(x + a * p);
        return std::make_tuple(f, g, g.dot(p));
    };

    auto zoom = [&](double lo, double flo, double hi) {
        for (int it = 0; it < opt.max_line_search; ++it) {
            const double a = 0.5 * (lo + hi);
            auto [f, g, d] = probe(a);
            if (f > f0 + opt.c1 * a * d0 || f >= flo) {
                hi = a;
            } else {
                if (std::abs(d) <= -opt.c2 * d0) {
                    return WolfeResult{a, f, g, true};
                }
                if (d * (hi - lo) >= 0.0) hi = lo;
                lo = a;
                flo = f;
            }
        }
        auto [f, g, d] = probe(lo);
        (void)d;
        return WolfeResult{lo, f, g, false};
    };

    double a_prev = 0.0, f_prev = f0;
    double a = 1.0;
    for (int it = 0; it < opt.max_line_search; ++it) {
        auto [f, g, d] = probe(a);
        if (f > f0 + opt.c1 * a * d0 || (it > 0 && f >= f_prev)) {
            return zoom(a_prev, f_prev, a);
        }
        if (std::abs(d) <= -opt.c2 * d0) {
            return WolfeResult{a, f, g, true};
        }
        if (d >= 0.0) {
            return zoom(a, f, a_prev);
        }
        a_prev = a;
        f_prev = f;
        a *= 2.0;
        if (a > 1e10) break;
    }
    return best;
}

}  // namespace

LbfgsResult lbfgsminimize_impl(const Objective& objective, const Vector& x0,
                               const LbfgsOptions& opt) {
    LbfgsResult res;
    res.x = x0;
    auto [f, g] = objective(x0);
    if (!std::isfinite(f) || !g.allFinite()) {
        throw NonFiniteLoss("lbfgs: objective non-finite at the start", 0);
    }
    res.value = f;
    res.gradient = g;

    std::vector<Vector> s_hist, y_hist;
    std::vector<double> rho_hist;

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        if (res.gradient.cwiseAbs().maxCoeff() <= opt.gtol) {
            res.converged = true;
            return res;
        }

        // Two-loop recursion.
        Vector q = res.gradient;
        const int k = static_cast<int>(s_hist.size());
        std::vector<double> alpha(static_cast<std::size_t>(k));
        for (int i = k - 1; i >= 0; --i) {
            alpha[static_cast<std::size_t>(i)] =
                rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
            q -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
        }
        if (k > 0) {
            const Vector& s = s_hist.back();
            const Vector& y = y_hist.back();
            q *= s.dot(y) / y.dot(y);
        }
        for (int i = 0; i < k; ++i) {
            const double beta =
                rho_hist[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)].dot(q);
            q += (alpha[static_cast<std::size_t>(i)] - beta) * s_hist[static_cast<std::size_t>(i)];
        }
        Vector p = -q;

        WolfeResult ls = strong_wolfe(objective, res.x, p, res.value, res.gradient, opt);
        if (!ls.ok || ls.alpha == 0.0) {
            // Retry once along steepest descent before giving up.
            p = -res.gradient;
            ls = strong_wolfe(objective, res.x, p, res.value, res.gradient, opt);
            if (!ls.ok || ls.alpha == 0.0) {
                res.line_search_failed = true;
                return res;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        const Vector x_new = res.x + ls.alpha * p;
        const Vector s = x_new - res.x;
        const Vector y = ls.gradient - res.gradient;
        const double sy = s.dot(y);
        if (sy > 1e-14 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.memory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        res.x = x_new;
        res.value = ls.value;
        res.gradient = ls.gradient;
        res.iterations = iter + 1;
    }
    res.converged = res.gradient.cwiseAbs().maxCoeff() <= opt.gtol;
    return res;
}

LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& options) {
    if (x0.size() == 0) throw EmptyInput("lbfgs: empty start point");
    return lbfgsminimize_impl(objective, x0, options);
}

PolyfitModelResult polyfit(const Dataset& train, int degree) {
    train.validate();
    if (train.n_features() != 1) {
        throw DimensionMismatch("polyfit: expected one feature, got " +
                                std::to_string(train.n_features()));
    }
    std::vector<double> xs(static_cast<std::size_t>(train.n_samples()));
    std::vector<double> ys(static_cast<std::size_t>(train.n_samples()));
    for (long i = 0; i < train.n_samples(); ++i) {
        xs[static_cast<std::size_t>(i)] = train.features(i, 0);
        ys[static_cast<std::size_t>(i)] = train.targets(i);
    }
    const PolyFit fit = polyfit(xs, ys, degree);
    PolyfitModelResult out{
        PolynomialModel(Eigen::Map<const Vector>(fit.coefficients.data(),
                                                 static_cast<long>(fit.coefficients.size()))),
        fit.rank_deficient};
    return out;
}

}  // namespace prkit
