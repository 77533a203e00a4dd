#include "prkit/pipeline.hpp"

#include "prkit/errors.hpp"
#include "prkit/eval.hpp"
#include "prkit/fetch.hpp"
#include "prkit/io.hpp"
#include "prkit/ntk.hpp"
#include "prkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace prkit {

namespace {

void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string source_to_string(DataConfig::Source s) {
    switch (s) {
        case DataConfig::Source::cos2: return "cos2";
        case DataConfig::Source::bimodal: return "bimodal";
        case DataConfig::Source::hetero: return "hetero";
        case DataConfig::Source::csv: return "csv";
        case DataConfig::Source::recipe: return "recipe";
    }
    throw ConfigError("unknown data source");
}

DataConfig::Source source_from_string(const std::string& s) {
    if (s == "cos2") return DataConfig::Source::cos2;
    if (s == "bimodal") return DataConfig::Source::bimodal;
    if (s == "hetero") return DataConfig::Source::hetero;
    if (s == "csv") return DataConfig::Source::csv;
    if (s == "recipe") return DataConfig::Source::recipe;
    throw ConfigError("unknown data source '" + s + "'");
}

std::string objective_to_string(CalibrationObjective o) {
    return o == CalibrationObjective::binned_residual ? "binned_residual" : "validation_nll";
}

CalibrationObjective objective_from_string(const std::string& s) {
    if (s == "binned_residual") return CalibrationObjective::binned_residual;
    if (s == "validation_nll") return CalibrationObjective::validation_nll;
    throw ConfigError("unknown calibration objective '" + s + "'");
}

std::string optimizer_to_string(OptimizerKind o) {
    return o == OptimizerKind::adamw ? "adamw" : "lbfgs";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adamw") return OptimizerKind::adamw;
    if (s == "lbfgs") return OptimizerKind::lbfgs;
    throw ConfigError("unknown optimizer '" + s + "'");
}

std::string loss_to_string(LossKind k) {
    return k == LossKind::mse ? "mse" : "weighted_mse";
}

LossKind loss_from_string(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "weighted_mse") return LossKind::weighted_mse;
    throw ConfigError("unknown loss '" + s + "'");
}

MlpArchitecture resolved_arch(const ExperimentConfig& config, int input_dim) {
    MlpArchitecture arch = config.model;
    if (arch.input_dim == 0) arch.input_dim = input_dim;
    arch.validate();
    if (arch.input_dim != input_dim) {
        throw DimensionMismatch("model input_dim " + std::to_string(arch.input_dim) +
                                " does not match the data's " + std::to_string(input_dim) +
                                " features");
    }
    return arch;
}

TrainConfig resolved_train(const ExperimentConfig& config, std::uint64_t seed) {
    TrainConfig t = config.train;
    t.seed = seed;
    return t;
}

void write_config_copy(const ExperimentConfig& config) {
    fs::create_directories(config.out_dir);
    const std::string text =
        config.raw_text.empty() ? config.to_json().dump(2) + "\n" : config.raw_text;
    write_text_file(config.out_dir + "/config.json", text);
}

CalibrationGrid resolve_grid(const CalibrationConfig& cc, const LlprState& state,
                             const Regressor& model, const Dataset& val) {
    CalibrationGrid grid;
    if (!cc.varsigma2_grid.empty()) {
        grid.varsigma2_grid = cc.varsigma2_grid;
        grid.alpha2_grid = cc.alpha2_grid;
    } else {
        grid = default_calibration_grid(state, model, val);
    }
    grid.objective = cc.objective;
    grid.bin_size = cc.bin_size;
    grid.validate();
    return grid;
}

Vector predict_all(const Regressor& model, const Dataset& d) {
    Vector out(d.n_samples());
    for (long i = 0; i < d.n_samples(); ++i) {
        out(i) = model.predict(d.features.row(i).transpose());
    }
    return out;
}

Vector variance_all(const LlprState& state, const Regressor& model, const Dataset& d) {
    Vector out(d.n_samples());
    for (long i = 0; i < d.n_samples(); ++i) {
        out(i) = llpr_variance(state, model.last_layer_features(d.features.row(i).transpose()));
    }
    return out;
}

struct RawTriple {
    Vector predictions;
    Vector variances;
    Vector targets;
};

/// Predictions, variances, and targets on d in the original target units.
RawTriple raw_outputs(const LlprState& state, const Regressor& model, const Dataset& d,
                      const StandardizationState& std_state) {
    RawTriple t{predict_all(model, d), variance_all(state, model, d), d.targets};
    if (std_state.applied) {
        for (long i = 0; i < t.predictions.size(); ++i) {
            t.predictions(i) = destandardize_prediction(std_state, t.predictions(i));
            t.variances(i) = destandardize_variance(std_state, t.variances(i));
            t.targets(i) = destandardize_prediction(std_state, t.targets(i));
        }
    }
    return t;
}

struct FittedUq {
    MlpModel model;
    TrainLog log;
    LlprState state;
    bool calibrated = false;
};

/// Train + accumulate + (optionally) calibrate: the shared spine of the uq,
/// ood, and benchmark pipelines.
FittedUq fit_and_calibrate(const ExperimentConfig& config, const Dataset& train,
                           const Dataset& val, std::uint64_t seed) {
    const auto arch = resolved_arch(config, train.n_features());
    auto result = train_mlp(arch, train, val, resolved_train(config, seed));
    FittedUq out{std::move(result.model), std::move(result.log), {}, false};
    out.state = accumulate_covariance(out.model, train);
    const auto grid = resolve_grid(config.calibration, out.state, out.model, val);
    if (config.calibration.enabled) {
        out.state = calibrate(out.state, out.model, val, grid);
        out.calibrated = true;
    } else {
        set_regularizer(out.state, grid.varsigma2_grid.front());
    }
    return out;
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss,learning_rate\n";
    for (const auto& e : log.epochs) {
        csv << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss)
            << ',' << format_double(e.learning_rate) << '\n';
    }
    write_text_file(path, csv.str());
}

/// x, prediction, and (optionally) variance over the configured grid for
/// one-feature models, in raw units.
void write_curve_csv(const std::string& path, const ExperimentConfig& config,
                     const Regressor& model, const StandardizationState& std_state,
                     const LlprState* state) {
    const CurveConfig& cc = config.uq.curve;
    std::ostringstream csv;
    csv << (state ? "x,prediction,variance\n" : "x,prediction\n");
    for (long i = 0; i < cc.n_points; ++i) {
        const double x =
            cc.x_min + (cc.x_max - cc.x_min) * static_cast<double>(i) /
                           static_cast<double>(cc.n_points - 1);
        Vector xin(1);
        xin(0) = std_state.applied ? (x - std_state.feature_mean(0)) / std_state.feature_std(0)
                                   : x;
        double y = model.predict(xin);
        if (std_state.applied) y = destandardize_prediction(std_state, y);
        csv << format_double(x) << ',' << format_double(y);
        if (state) {
            double v = llpr_variance(*state, model.last_layer_features(xin));
            if (std_state.applied) v = destandardize_variance(std_state, v);
            csv << ',' << format_double(v);
        }
        csv << '\n';
    }
    write_text_file(path, csv.str());
}

double mean_of(const Vector& v) { return v.size() == 0 ? 0.0 : v.mean(); }

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::toy_fit: return "toy-fit";
        case ExperimentKind::benchmark: return "benchmark";
        case ExperimentKind::ood: return "ood";
        case ExperimentKind::ntk_study: return "ntk-study";
        case ExperimentKind::width_study: return "width-study";
    }
    throw ConfigError("unknown experiment kind");
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "toy-fit") return ExperimentKind::toy_fit;
    if (s == "benchmark") return ExperimentKind::benchmark;
    if (s == "ood") return ExperimentKind::ood;
    if (s == "ntk-study") return ExperimentKind::ntk_study;
    if (s == "width-study") return ExperimentKind::width_study;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

Dataset synth_bimodal(long n_samples, int n_features, double mode_separation,
                      double mode_sigma, double noise_sigma, std::uint64_t seed) {
    if (n_samples < 1) throw EmptyInput("synth_bimodal: need at least one sample");
    if (n_features < 1) throw ConfigError("synth_bimodal: need at least one feature");
    if (!(mode_separation > 0.0) || !(mode_sigma > 0.0) || noise_sigma < 0.0) {
        throw ConfigError("synth_bimodal: separation and spread must be positive, noise >= 0");
    }
    Dataset d;
    d.features.resize(n_samples, n_features);
    d.targets.resize(n_samples);
    Rng rng(seed);
    for (long i = 0; i < n_samples; ++i) {
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        d.features(i, 0) = side * mode_separation + mode_sigma * rng.normal();
        for (int j = 1; j < n_features; ++j) d.features(i, j) = rng.normal();
        double y = std::sin(d.features(i, 0));
        if (n_features > 1) {
            double acc = 0.0;
            for (int j = 1; j < n_features; ++j) acc += std::cos(2.0 * d.features(i, j));
            y += 0.5 * acc / static_cast<double>(n_features - 1);
        }
        d.targets(i) = y + noise_sigma * rng.normal();
    }
    for (int j = 0; j < n_features; ++j) d.column_names.push_back("f" + std::to_string(j));
    d.target_name = "y";
    return d;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["kind"] = prkit::to_string(kind);
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["cache_dir"] = cache_dir;

    nlohmann::json d;
    d["source"] = source_to_string(data.source);
    d["x_points"] = data.x_points;
    d["noise_sigma"] = data.noise_sigma;
    d["grid_n"] = data.grid_n;
    d["grid_min"] = data.grid_min;
    d["grid_max"] = data.grid_max;
    d["n_samples"] = data.n_samples;
    d["n_features"] = data.n_features;
    d["mode_separation"] = data.mode_separation;
    d["mode_sigma"] = data.mode_sigma;
    d["bimodal_noise_sigma"] = data.bimodal_noise_sigma;
    d["hetero_x_sigma"] = data.hetero_x_sigma;
    d["hetero_noise_floor"] = data.hetero_noise_floor;
    d["hetero_noise_slope"] = data.hetero_noise_slope;
    d["path"] = data.path;
    d["target"] = data.target;
    d["header"] = data.header;
    d["delimiter"] = delimiter_to_string(data.delimiter);
    d["feature_columns"] = data.feature_columns;
    d["manifest"] = data.manifest;
    d["recipe_name"] = data.recipe_name;
    d["split_enabled"] = data.split_enabled;
    d["train_fraction"] = data.train_fraction;
    d["val_fraction"] = data.val_fraction;
    d["test_fraction"] = data.test_fraction;
    d["standardize"] = data.standardize;
    j["data"] = d;

    nlohmann::json m;
    m["input_dim"] = model.input_dim;
    m["hidden_widths"] = model.hidden_widths;
    m["activation"] = prkit::to_string(model.activation);
    m["bias"] = prkit::to_string(model.bias_mode);
    m["init_scale"] = model.init_scale;
    m["parametrization"] = prkit::to_string(model.parametrization);
    j["model"] = m;

    nlohmann::json t;
    t["epochs"] = train.epochs;
    t["optimizer"] = optimizer_to_string(train.optimizer);
    t["learning_rate"] = train.learning_rate;
    t["weight_decay"] = train.weight_decay;
    t["lr_reduction_factor"] = train.lr_reduction_factor;
    t["patience_epochs"] = train.patience_epochs;
    t["batch_size"] = train.batch_size;
    t["loss"] = loss_to_string(train.loss);
    t["adam_beta1"] = train.adam_beta1;
    t["adam_beta2"] = train.adam_beta2;
    t["adam_eps"] = train.adam_eps;
    j["train"] = t;

    nlohmann::json c;
    c["enabled"] = calibration.enabled;
    c["objective"] = objective_to_string(calibration.objective);
    c["bin_size"] = calibration.bin_size;
    c["varsigma2_grid"] = calibration.varsigma2_grid;
    c["alpha2_grid"] = calibration.alpha2_grid;
    j["calibration"] = c;

    nlohmann::json u;
    u["model_file"] = uq.model_file;
    u["curve"] = {{"x_min", uq.curve.x_min},
                  {"x_max", uq.curve.x_max},
                  {"n_points", uq.curve.n_points}};
    j["uq"] = u;

    j["benchmark"] = {{"n_splits", benchmark.n_splits}};
    j["ood"] = {{"feature", ood.feature}, {"threshold", ood.threshold}};

    nlohmann::json nk;
    nk["activation"] = prkit::to_string(ntk_study.activation);
    nk["min_depth"] = ntk_study.min_depth;
    nk["max_depth"] = ntk_study.max_depth;
    nk["inner_products"] = ntk_study.inner_products;
    j["ntk_study"] = nk;

    j["width_study"] = {{"widths", width_study.widths}};
    return j;
}

void ExperimentConfig::validate() const {
    {
        MlpArchitecture probe = model;
        if (probe.input_dim == 0) probe.input_dim = 1;
        probe.validate();
    }
    train.validate();

    if (calibration.bin_size < 1) throw ConfigError("calibration: bin_size must be >= 1");
    if (calibration.varsigma2_grid.empty() != calibration.alpha2_grid.empty()) {
        throw ConfigError("calibration: give both explicit grids or neither");
    }
    if (!calibration.varsigma2_grid.empty()) {
        CalibrationGrid grid;
        grid.varsigma2_grid = calibration.varsigma2_grid;
        grid.alpha2_grid = calibration.alpha2_grid;
        grid.objective = calibration.objective;
        grid.bin_size = calibration.bin_size;
        grid.validate();
    }

    if (uq.curve.n_points < 2 || !(uq.curve.x_max > uq.curve.x_min)) {
        throw ConfigError("uq.curve: need x_max > x_min and at least 2 points");
    }
    if (benchmark.n_splits < 1) throw ConfigError("benchmark: n_splits must be >= 1");
    if (ood.feature < 0) throw ConfigError("ood: feature index must be >= 0");

    if (ntk_study.min_depth < 1 || ntk_study.max_depth < ntk_study.min_depth) {
        throw ConfigError("ntk_study: need 1 <= min_depth <= max_depth");
    }
    if (ntk_study.inner_products.empty()) {
        throw ConfigError("ntk_study: inner_products must not be empty");
    }
    for (double xi : ntk_study.inner_products) {
        if (!(std::abs(xi) < 1.0)) {
            throw ConfigError("ntk_study: inner products must lie strictly inside (-1, 1)");
        }
    }
    if (ntk_study.activation == Activation::relu) {
        throw ConfigError(
            "ntk_study: the small-inner-product expansion does not apply to relu (its dual has "
            "a constant term at zero)");
    }

    if (width_study.widths.empty()) throw ConfigError("width_study: widths must not be empty");
    for (std::size_t i = 0; i < width_study.widths.size(); ++i) {
        if (width_study.widths[i] < 1) throw ConfigError("width_study: widths must be >= 1");
        if (i > 0 && width_study.widths[i] <= width_study.widths[i - 1]) {
            throw ConfigError("width_study: widths must be strictly ascending");
        }
    }

    if (data.split_enabled || kind == ExperimentKind::benchmark) {
        SplitSpec spec;
        spec.train_fraction = data.train_fraction;
        spec.val_fraction = data.val_fraction;
        spec.test_fraction = data.test_fraction;
        spec.validate();
    }
    switch (data.source) {
        case DataConfig::Source::cos2:
            if (data.noise_sigma < 0.0) throw ConfigError("data: noise_sigma must be >= 0");
            if (data.grid_n == 0) {
                if (data.x_points.empty()) throw ConfigError("data: x_points must not be empty");
            } else if (data.grid_n < 2 || !(data.grid_max > data.grid_min)) {
                throw ConfigError("data: grid needs n >= 2 and grid_max > grid_min");
            }
            break;
        case DataConfig::Source::bimodal:
            if (data.n_samples < 10) throw ConfigError("data: bimodal needs n_samples >= 10");
            if (data.n_features < 1 || !(data.mode_separation > 0.0) ||
                !(data.mode_sigma > 0.0) || data.bimodal_noise_sigma < 0.0) {
                throw ConfigError("data: bad bimodal parameters");
            }
            break;
        case DataConfig::Source::hetero:
            if (data.n_samples < 10) throw ConfigError("data: hetero needs n_samples >= 10");
            if (!(data.hetero_x_sigma > 0.0) || data.hetero_noise_floor < 0.0 ||
                data.hetero_noise_slope < 0.0) {
                throw ConfigError("data: bad hetero parameters");
            }
            break;
        case DataConfig::Source::csv:
            if (data.path.empty() || data.target.empty()) {
                throw ConfigError("data: csv source needs path and target");
            }
            break;
        case DataConfig::Source::recipe:
            if (data.manifest.empty() || data.recipe_name.empty()) {
                throw ConfigError("data: recipe source needs manifest and recipe_name");
            }
            break;
    }
    if (kind == ExperimentKind::benchmark && data.source != DataConfig::Source::csv &&
        data.source != DataConfig::Source::recipe) {
        throw ConfigError("benchmark: data source must be csv or recipe");
    }
}

ExperimentConfig default_experiment_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    switch (kind) {
        case ExperimentKind::toy_fit:
            c.out_dir = "out/toy";
            c.uq.model_file = "out/toy/model.json";
            // Seven training points cannot fill the usual bins.
            c.calibration.objective = CalibrationObjective::validation_nll;
            c.calibration.bin_size = 2;
            break;
        case ExperimentKind::benchmark:
            c.out_dir = "out/benchmark";
            c.data.source = DataConfig::Source::recipe;
            c.data.split_enabled = true;
            c.data.standardize = true;
            c.model.hidden_widths = {50};
            break;
        case ExperimentKind::ood:
            c.out_dir = "out/ood";
            c.data.source = DataConfig::Source::bimodal;
            c.data.split_enabled = true;
            c.data.train_fraction = 0.6;
            c.data.val_fraction = 0.2;
            c.data.test_fraction = 0.2;
            c.data.standardize = true;
            c.calibration.bin_size = 20;
            break;
        case ExperimentKind::ntk_study:
            c.out_dir = "out/ntk-study";
            break;
        case ExperimentKind::width_study:
            // Small train share, large equal-granularity val and test: the
            // calibration objective then sees the same tail bins the test
            // residual is scored on.
            c.out_dir = "out/width-study";
            c.data.source = DataConfig::Source::hetero;
            c.data.n_samples = 3000;
            c.data.split_enabled = true;
            c.data.train_fraction = 0.2;
            c.data.val_fraction = 0.4;
            c.data.test_fraction = 0.4;
            c.data.standardize = true;
            c.model.bias_mode = BiasMode::none;
            c.train.epochs = 300;
            c.width_study.widths = {4, 16, 64, 256};
            break;
    }
    return c;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    check_keys(j,
               {"kind", "seed", "out_dir", "cache_dir", "data", "model", "train", "calibration",
                "uq", "benchmark", "ood", "ntk_study", "width_study"},
               "config");
    if (j.contains("kind")) c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    maybe(j, "seed", c.seed);
    maybe(j, "out_dir", c.out_dir);
    maybe(j, "cache_dir", c.cache_dir);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d,
                   {"source", "x_points", "noise_sigma", "grid_n", "grid_min", "grid_max",
                    "n_samples", "n_features", "mode_separation", "mode_sigma",
                    "bimodal_noise_sigma", "hetero_x_sigma", "hetero_noise_floor",
                    "hetero_noise_slope", "path", "target", "header", "delimiter",
                    "feature_columns", "manifest", "recipe_name", "split_enabled",
                    "train_fraction", "val_fraction", "test_fraction", "standardize"},
                   "config.data");
        if (d.contains("source")) c.data.source = source_from_string(d.at("source"));
        maybe(d, "x_points", c.data.x_points);
        maybe(d, "noise_sigma", c.data.noise_sigma);
        maybe(d, "grid_n", c.data.grid_n);
        maybe(d, "grid_min", c.data.grid_min);
        maybe(d, "grid_max", c.data.grid_max);
        maybe(d, "n_samples", c.data.n_samples);
        maybe(d, "n_features", c.data.n_features);
        maybe(d, "mode_separation", c.data.mode_separation);
        maybe(d, "mode_sigma", c.data.mode_sigma);
        maybe(d, "bimodal_noise_sigma", c.data.bimodal_noise_sigma);
        maybe(d, "hetero_x_sigma", c.data.hetero_x_sigma);
        maybe(d, "hetero_noise_floor", c.data.hetero_noise_floor);
        maybe(d, "hetero_noise_slope", c.data.hetero_noise_slope);
        maybe(d, "path", c.data.path);
        maybe(d, "target", c.data.target);
        maybe(d, "header", c.data.header);
        if (d.contains("delimiter")) {
            c.data.delimiter = delimiter_from_string(d.at("delimiter").get<std::string>());
        }
        maybe(d, "feature_columns", c.data.feature_columns);
        maybe(d, "manifest", c.data.manifest);
        maybe(d, "recipe_name", c.data.recipe_name);
        maybe(d, "split_enabled", c.data.split_enabled);
        maybe(d, "train_fraction", c.data.train_fraction);
        maybe(d, "val_fraction", c.data.val_fraction);
        maybe(d, "test_fraction", c.data.test_fraction);
        maybe(d, "standardize", c.data.standardize);
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"input_dim", "hidden_widths", "activation", "bias", "init_scale",
                       "parametrization"},
                   "config.model");
        maybe(m, "input_dim", c.model.input_dim);
        maybe(m, "hidden_widths", c.model.hidden_widths);
        if (m.contains("activation")) {
            c.model.activation = activation_from_string(m.at("activation").get<std::string>());
        }
        if (m.contains("bias")) {
            c.model.bias_mode = bias_mode_from_string(m.at("bias").get<std::string>());
        }
        maybe(m, "init_scale", c.model.init_scale);
        if (m.contains("parametrization")) {
            c.model.parametrization =
                parametrization_from_string(m.at("parametrization").get<std::string>());
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"epochs", "optimizer", "learning_rate", "weight_decay",
                    "lr_reduction_factor", "patience_epochs", "batch_size", "loss", "adam_beta1",
                    "adam_beta2", "adam_eps"},
                   "config.train");
        maybe(t, "epochs", c.train.epochs);
        if (t.contains("optimizer")) {
            c.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
        }
        maybe(t, "learning_rate", c.train.learning_rate);
        maybe(t, "weight_decay", c.train.weight_decay);
        maybe(t, "lr_reduction_factor", c.train.lr_reduction_factor);
        maybe(t, "patience_epochs", c.train.patience_epochs);
        maybe(t, "batch_size", c.train.batch_size);
        if (t.contains("loss")) c.train.loss = loss_from_string(t.at("loss").get<std::string>());
        maybe(t, "adam_beta1", c.train.adam_beta1);
        maybe(t, "adam_beta2", c.train.adam_beta2);
        maybe(t, "adam_eps", c.train.adam_eps);
    }

    if (j.contains("calibration")) {
        const auto& cal = j.at("calibration");
        check_keys(cal, {"enabled", "objective", "bin_size", "varsigma2_grid", "alpha2_grid"},
                   "config.calibration");
        maybe(cal, "enabled", c.calibration.enabled);
        if (cal.contains("objective")) {
            c.calibration.objective =
                objective_from_string(cal.at("objective").get<std::string>());
        }
        maybe(cal, "bin_size", c.calibration.bin_size);
        maybe(cal, "varsigma2_grid", c.calibration.varsigma2_grid);
        maybe(cal, "alpha2_grid", c.calibration.alpha2_grid);
    }

    if (j.contains("uq")) {
        const auto& u = j.at("uq");
        check_keys(u, {"model_file", "curve"}, "config.uq");
        maybe(u, "model_file", c.uq.model_file);
        if (u.contains("curve")) {
            const auto& cv = u.at("curve");
            check_keys(cv, {"x_min", "x_max", "n_points"}, "config.uq.curve");
            maybe(cv, "x_min", c.uq.curve.x_min);
            maybe(cv, "x_max", c.uq.curve.x_max);
            maybe(cv, "n_points", c.uq.curve.n_points);
        }
    }

    if (j.contains("benchmark")) {
        const auto& b = j.at("benchmark");
        check_keys(b, {"n_splits"}, "config.benchmark");
        maybe(b, "n_splits", c.benchmark.n_splits);
    }

    if (j.contains("ood")) {
        const auto& o = j.at("ood");
        check_keys(o, {"feature", "threshold"}, "config.ood");
        maybe(o, "feature", c.ood.feature);
        maybe(o, "threshold", c.ood.threshold);
    }

    if (j.contains("ntk_study")) {
        const auto& n = j.at("ntk_study");
        check_keys(n, {"activation", "min_depth", "max_depth", "inner_products"},
                   "config.ntk_study");
        if (n.contains("activation")) {
            c.ntk_study.activation =
                activation_from_string(n.at("activation").get<std::string>());
        }
        maybe(n, "min_depth", c.ntk_study.min_depth);
        maybe(n, "max_depth", c.ntk_study.max_depth);
        maybe(n, "inner_products", c.ntk_study.inner_products);
    }

    if (j.contains("width_study")) {
        const auto& w = j.at("width_study");
        check_keys(w, {"widths"}, "config.width_study");
        maybe(w, "widths", c.width_study.widths);
    }

    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    const std::string raw = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    ExperimentConfig c = experiment_config_from_json(j);
    c.raw_text = raw;
    return c;
}

PreparedData prepare_data(const ExperimentConfig& config) {
    config.validate();
    const DataConfig& dc = config.data;

    Dataset full;
    long dropped = 0;
    switch (dc.source) {
        case DataConfig::Source::cos2: {
            std::vector<double> xs = dc.x_points;
            if (dc.grid_n > 0) {
                xs.resize(static_cast<std::size_t>(dc.grid_n));
                for (long i = 0; i < dc.grid_n; ++i) {
                    xs[static_cast<std::size_t>(i)] =
                        dc.grid_min + (dc.grid_max - dc.grid_min) * static_cast<double>(i) /
                                          static_cast<double>(dc.grid_n - 1);
                }
            }
            full = synth_cos2(dc.noise_sigma, xs, config.seed);
            break;
        }
        case DataConfig::Source::bimodal:
            full = synth_bimodal(dc.n_samples, dc.n_features, dc.mode_separation, dc.mode_sigma,
                                 dc.bimodal_noise_sigma, config.seed);
            break;
        case DataConfig::Source::hetero:
            full = synth_hetero(dc.n_samples, dc.hetero_x_sigma, dc.hetero_noise_floor,
                                dc.hetero_noise_slope, config.seed);
            break;
        case DataConfig::Source::csv: {
            auto report = load_csv(dc.path, dc.target, dc.header, dc.delimiter,
                                   dc.feature_columns);
            full = std::move(report.dataset);
            dropped = report.rows_dropped;
            break;
        }
        case DataConfig::Source::recipe: {
            const auto recipes = load_recipes(dc.manifest);
            const auto& recipe = find_recipe(recipes, dc.recipe_name);
            const auto local =
                fetch_dataset(recipe.url, config.cache_dir, recipe.sha256, recipe.filename);
            auto report = load_csv(local, recipe.target, recipe.header, recipe.delimiter,
                                   recipe.feature_columns);
            full = std::move(report.dataset);
            dropped = report.rows_dropped;
            break;
        }
    }

    PreparedData out;
    out.rows_dropped = dropped;
    if (dc.split_enabled) {
        SplitSpec spec;
        spec.train_fraction = dc.train_fraction;
        spec.val_fraction = dc.val_fraction;
        spec.test_fraction = dc.test_fraction;
        spec.seed = config.seed;
        auto parts = split(full, spec);
        out.train = std::move(parts.train);
        out.val = std::move(parts.val);
        out.test = std::move(parts.test);
    } else {
        out.train = full;
        out.val = full;
        out.test = std::move(full);
    }
    if (dc.standardize) {
        out.standardizer = fit_standardizer(out.train);
        out.train = apply_standardizer(out.standardizer, out.train);
        out.val = apply_standardizer(out.standardizer, out.val);
        out.test = apply_standardizer(out.standardizer, out.test);
    }
    return out;
}

std::string run_fit(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::toy_fit) {
        throw ConfigError("fit needs a 'toy-fit' config, got '" + prkit::to_string(config.kind) +
                          "'");
    }
    write_config_copy(config);
    const auto data = prepare_data(config);
    const auto arch = resolved_arch(config, data.train.n_features());
    const auto result = train_mlp(arch, data.train, data.val, resolved_train(config, config.seed));

    save_model(config.out_dir + "/model.json", result.model);
    write_train_log(config.out_dir + "/train_log.csv", result.log);
    nlohmann::json summary;
    summary["best_epoch"] = result.log.best_epoch;
    summary["best_val_loss"] = result.log.best_val_loss;
    summary["lr_reductions"] = result.log.lr_reductions;
    summary["n_epochs"] = result.log.epochs.size();
    summary["rows_dropped"] = data.rows_dropped;
    save_json(config.out_dir + "/train_summary.json", summary);

    if (data.train.n_features() == 1) {
        write_curve_csv(config.out_dir + "/curve.csv", config, result.model, data.standardizer,
                        nullptr);
    }
    return config.out_dir;
}

std::string run_uq(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::toy_fit) {
        throw ConfigError("uq needs a 'toy-fit' config, got '" + prkit::to_string(config.kind) +
                          "'");
    }
    if (config.uq.model_file.empty()) {
        throw ConfigError("uq needs uq.model_file (run fit first)");
    }
    write_config_copy(config);
    const auto data = prepare_data(config);
    const auto model = load_model(config.uq.model_file);
    if (model->input_dim() != data.train.n_features()) {
        throw DimensionMismatch("model expects " + std::to_string(model->input_dim()) +
                                " features, data has " +
                                std::to_string(data.train.n_features()));
    }

    auto state = accumulate_covariance(*model, data.train);
    const auto grid = resolve_grid(config.calibration, state, *model, data.val);
    const bool calibrated = config.calibration.enabled;
    if (calibrated) {
        state = calibrate(state, *model, data.val, grid);
    } else {
        set_regularizer(state, grid.varsigma2_grid.front());
    }
    save_llpr_state(config.out_dir + "/llpr_state.json", state);

    const auto outputs = raw_outputs(state, *model, data.test, data.standardizer);
    const auto report =
        make_report(outputs.predictions, outputs.variances, outputs.targets,
                    config.calibration.bin_size, calibrated ? "test" : "test-raw");
    save_report_csv(config.out_dir + "/report_test.csv", report);
    save_report_json(config.out_dir + "/report_test.json", report);

    nlohmann::json summary;
    summary["calibrated"] = calibrated;
    summary["varsigma2"] = state.varsigma2;
    summary["alpha2"] = state.alpha2;
    summary["rmse"] = report.rmse_value;
    summary["nll"] = report.nll_value;
    summary["calibration_residual"] = report.curve.log_residual;
    summary["n_test"] = data.test.n_samples();
    summary["rows_dropped"] = data.rows_dropped;
    save_json(config.out_dir + "/summary.json", summary);

    if (data.train.n_features() == 1) {
        write_curve_csv(config.out_dir + "/curve_uq.csv", config, *model, data.standardizer,
                        &state);
    }
    return config.out_dir;
}

std::string run_ood(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::ood) {
        throw ConfigError("ood needs an 'ood' config, got '" + prkit::to_string(config.kind) +
                          "'");
    }
    write_config_copy(config);
    const auto data = prepare_data(config);
    if (config.ood.feature >= data.train.n_features()) {
        throw DimensionMismatch("ood.feature " + std::to_string(config.ood.feature) +
                                " out of range for " +
                                std::to_string(data.train.n_features()) + " features");
    }

    const auto train_parts = ood_split(data.train, config.ood.feature, config.ood.threshold);
    const auto val_parts = ood_split(data.val, config.ood.feature, config.ood.threshold);
    const auto test_parts = ood_split(data.test, config.ood.feature, config.ood.threshold);
    if (train_parts.in_domain.n_samples() == 0 || val_parts.in_domain.n_samples() == 0) {
        throw EmptyInput("ood: no in-domain train or validation samples above the threshold");
    }
    if (test_parts.in_domain.n_samples() == 0 || test_parts.out_of_domain.n_samples() == 0) {
        throw EmptyInput("ood: the test split lacks one of the two domains");
    }

    const auto fitted =
        fit_and_calibrate(config, train_parts.in_domain, val_parts.in_domain, config.seed);

    const auto in_raw =
        raw_outputs(fitted.state, fitted.model, test_parts.in_domain, data.standardizer);
    const auto out_raw =
        raw_outputs(fitted.state, fitted.model, test_parts.out_of_domain, data.standardizer);
    const auto report_in = make_report(in_raw.predictions, in_raw.variances, in_raw.targets,
                                       config.calibration.bin_size, "in-domain");
    const auto report_out = make_report(out_raw.predictions, out_raw.variances, out_raw.targets,
                                        config.calibration.bin_size, "out-of-domain");
    save_report_csv(config.out_dir + "/report_in.csv", report_in);
    save_report_json(config.out_dir + "/report_in.json", report_in);
    save_report_csv(config.out_dir + "/report_out.csv", report_out);
    save_report_json(config.out_dir + "/report_out.json", report_out);

    LlprState baseline = fitted.state;
    baseline.alpha2 = 1.0;
    const auto base_raw =
        raw_outputs(baseline, fitted.model, test_parts.in_domain, data.standardizer);
    const double uncalibrated_residual =
        binned_calibration(base_raw.predictions, base_raw.variances, base_raw.targets,
                           config.calibration.bin_size)
            .log_residual;

    const double mean_in = mean_of(in_raw.variances);
    const double mean_out = mean_of(out_raw.variances);
    nlohmann::json summary;
    summary["mean_variance_in"] = mean_in;
    summary["mean_variance_out"] = mean_out;
    summary["variance_ratio"] = mean_out / mean_in;
    summary["out_flagged"] = mean_out > mean_in;
    summary["calibrated"] = fitted.calibrated;
    summary["calibrated_residual"] = report_in.curve.log_residual;
    summary["uncalibrated_residual"] = uncalibrated_residual;
    summary["calibration_improves"] = report_in.curve.log_residual < uncalibrated_residual;
    summary["varsigma2"] = fitted.state.varsigma2;
    summary["alpha2"] = fitted.state.alpha2;
    summary["n_train_in"] = train_parts.in_domain.n_samples();
    summary["n_train_discarded"] = train_parts.out_of_domain.n_samples();
    summary["n_test_in"] = test_parts.in_domain.n_samples();
    summary["n_test_out"] = test_parts.out_of_domain.n_samples();
    save_json(config.out_dir + "/summary.json", summary);

    std::ostringstream line;
    line << "mean predicted variance: out-of-domain " << format_double(mean_out)
         << " vs in-domain " << format_double(mean_in) << " (ratio "
         << format_double(mean_out / mean_in) << "); flagged: "
         << (mean_out > mean_in ? "yes" : "no") << "\n";
    write_text_file(config.out_dir + "/summary.txt", line.str());
    return config.out_dir;
}

std::string run_benchmark(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::benchmark) {
        throw ConfigError("benchmark needs a 'benchmark' config, got '" +
                          prkit::to_string(config.kind) + "'");
    }
    write_config_copy(config);

    // Materialize the full table once; each split redraws the partition.
    Dataset full;
    long dropped = 0;
    std::string dataset_name;
    if (config.data.source == DataConfig::Source::recipe) {
        const auto recipes = load_recipes(config.data.manifest);
        const auto& recipe = find_recipe(recipes, config.data.recipe_name);
        const auto local =
            fetch_dataset(recipe.url, config.cache_dir, recipe.sha256, recipe.filename);
        auto report =
            load_csv(local, recipe.target, recipe.header, recipe.delimiter,
                     recipe.feature_columns);
        full = std::move(report.dataset);
        dropped = report.rows_dropped;
        dataset_name = recipe.name;
    } else {
        auto report = load_csv(config.data.path, config.data.target, config.data.header,
                               config.data.delimiter, config.data.feature_columns);
        full = std::move(report.dataset);
        dropped = report.rows_dropped;
        dataset_name = fs::path(config.data.path).stem().string();
    }

    struct SplitRow {
        int index;
        std::uint64_t seed;
        double rmse_value, nll_value, varsigma2, alpha2;
        long n_train, n_val, n_test;
    };
    std::vector<SplitRow> done;
    std::vector<int> missing;
    std::string first_error;

    const auto row_csv = [](const SplitRow& r) {
        std::ostringstream s;
        s << r.index << ',' << r.seed << ',' << format_double(r.rmse_value) << ','
          << format_double(r.nll_value) << ',' << format_double(r.varsigma2) << ','
          << format_double(r.alpha2) << ',' << r.n_train << ',' << r.n_val << ',' << r.n_test
          << '\n';
        return s.str();
    };
    const std::string header =
        "split,seed,rmse,nll,varsigma2,alpha2,n_train,n_val,n_test\n";

    for (int k = 0; k < config.benchmark.n_splits; ++k) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
        try {
            SplitSpec spec;
            spec.train_fraction = config.data.train_fraction;
            spec.val_fraction = config.data.val_fraction;
            spec.test_fraction = config.data.test_fraction;
            spec.seed = seed;
            auto parts = split(full, spec);
            StandardizationState std_state;
            if (config.data.standardize) {
                std_state = fit_standardizer(parts.train);
                parts.train = apply_standardizer(std_state, parts.train);
                parts.val = apply_standardizer(std_state, parts.val);
                parts.test = apply_standardizer(std_state, parts.test);
            }
            const auto fitted = fit_and_calibrate(config, parts.train, parts.val, seed);
            const auto outputs = raw_outputs(fitted.state, fitted.model, parts.test, std_state);
            SplitRow row{k,
                         seed,
                         rmse(outputs.predictions, outputs.targets),
                         nll(outputs.predictions, outputs.variances, outputs.targets),
                         fitted.state.varsigma2,
                         fitted.state.alpha2,
                         parts.train.n_samples(),
                         parts.val.n_samples(),
                         parts.test.n_samples()};
            write_text_file(config.out_dir + "/split_" + std::to_string(k) + ".csv",
                            header + row_csv(row));
            done.push_back(row);
        } catch (const std::exception& e) {
            missing.push_back(k);
            if (first_error.empty()) first_error = e.what();
            write_text_file(config.out_dir + "/split_" + std::to_string(k) + ".failed.txt",
                            std::string(e.what()) + "\n");
        }
    }

    std::string all = header;
    for (const auto& r : done) all += row_csv(r);
    write_text_file(config.out_dir + "/benchmark.csv", all);

    const auto mean_stderr = [&](auto pick) {
        double mean = 0.0;
        for (const auto& r : done) mean += pick(r);
        mean /= static_cast<double>(done.size());
        if (done.size() < 2) return std::make_pair(mean, -1.0);
        double ss = 0.0;
        for (const auto& r : done) ss += (pick(r) - mean) * (pick(r) - mean);
        const double stderr_v =
            std::sqrt(ss / static_cast<double>(done.size() - 1)) /
            std::sqrt(static_cast<double>(done.size()));
        return std::make_pair(mean, stderr_v);
    };

    nlohmann::json agg;
    agg["dataset"] = dataset_name;
    agg["n_splits"] = config.benchmark.n_splits;
    agg["n_done"] = done.size();
    agg["missing_splits"] = missing;
    agg["rows_dropped"] = dropped;
    std::ostringstream table;
    if (!done.empty()) {
        const auto [rm, rs] = mean_stderr([](const SplitRow& r) { return r.rmse_value; });
        const auto [nm, ns] = mean_stderr([](const SplitRow& r) { return r.nll_value; });
        agg["rmse_mean"] = rm;
        agg["nll_mean"] = nm;
        if (rs >= 0.0) {
            agg["rmse_stderr"] = rs;
            agg["nll_stderr"] = ns;
        } else {
            agg["rmse_stderr"] = nullptr;
            agg["nll_stderr"] = nullptr;
        }
        table << dataset_name << ": RMSE " << format_double(rm) << " +/- "
              << (rs >= 0.0 ? format_double(rs) : "N/A") << ", NLL " << format_double(nm)
              << " +/- " << (ns >= 0.0 ? format_double(ns) : "N/A") << " [" << done.size() << "/"
              << config.benchmark.n_splits << " splits]\n";
    } else {
        table << dataset_name << ": no completed splits\n";
    }
    save_json(config.out_dir + "/aggregate.json", agg);
    write_text_file(config.out_dir + "/table2.txt", table.str());

    if (done.empty()) {
        throw std::runtime_error("benchmark: all " +
                                 std::to_string(config.benchmark.n_splits) +
                                 " splits failed; first error: " + first_error);
    }
    return config.out_dir;
}

std::string run_ntk_study(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::ntk_study) {
        throw ConfigError("ntk-study needs an 'ntk-study' config, got '" +
                          prkit::to_string(config.kind) + "'");
    }
    write_config_copy(config);

    std::vector<std::pair<Vector, Vector>> pairs;
    for (double xi : config.ntk_study.inner_products) {
        Vector a(2), b(2);
        a << 1.0, 0.0;
        b << xi, std::sqrt(1.0 - xi * xi);
        pairs.emplace_back(a, b);
    }
    MlpArchitecture arch;
    arch.input_dim = 2;
    arch.hidden_widths = {8};
    arch.activation = config.ntk_study.activation;
    arch.bias_mode = BiasMode::none;
    arch.parametrization = Parametrization::ntk;

    const auto rows = approximation_gap_study(arch, config.ntk_study.min_depth,
                                              config.ntk_study.max_depth, pairs);
    save_gap_study_csv(config.out_dir + "/gaps.csv", rows);

    long closer = 0;
    double max_feature = 0.0, max_kernel = 0.0;
    for (const auto& r : rows) {
        if (r.kernel_closer) ++closer;
        max_feature = std::max(max_feature, std::abs(r.feature_gap));
        max_kernel = std::max(max_kernel, std::abs(r.kernel_gap));
    }
    nlohmann::json summary;
    summary["activation"] = prkit::to_string(config.ntk_study.activation);
    summary["min_depth"] = config.ntk_study.min_depth;
    summary["max_depth"] = config.ntk_study.max_depth;
    summary["n_rows"] = rows.size();
    summary["kernel_closer_count"] = closer;
    summary["all_kernel_closer"] = closer == static_cast<long>(rows.size());
    summary["max_abs_feature_gap"] = max_feature;
    summary["max_abs_kernel_gap"] = max_kernel;
    save_json(config.out_dir + "/summary.json", summary);

    std::ostringstream line;
    line << "kernel gap below feature gap in " << closer << "/" << rows.size()
         << " rows; max |feature gap| " << format_double(max_feature) << ", max |kernel gap| "
         << format_double(max_kernel) << "\n";
    write_text_file(config.out_dir + "/summary.txt", line.str());
    return config.out_dir;
}

std::string run_width_study(const ExperimentConfig& config) {
    if (config.kind != ExperimentKind::width_study) {
        throw ConfigError("width-study needs a 'width-study' config, got '" +
                          prkit::to_string(config.kind) + "'");
    }
    write_config_copy(config);
    const auto data = prepare_data(config);
    const auto base = resolved_arch(config, data.train.n_features());

    const auto rows =
        width_sweep(base, config.width_study.widths, data.train, data.val, data.test,
                    resolved_train(config, config.seed),
                    static_cast<int>(config.calibration.bin_size));
    save_width_sweep_csv(config.out_dir + "/width_sweep.csv", rows);

    long non_increasing = 0;
    const long steps = static_cast<long>(rows.size()) - 1;
    std::vector<double> residuals;
    for (const auto& r : rows) residuals.push_back(r.calibration_residual);
    for (long i = 0; i + 1 < static_cast<long>(rows.size()); ++i) {
        if (rows[static_cast<std::size_t>(i + 1)].calibration_residual <=
            rows[static_cast<std::size_t>(i)].calibration_residual) {
            ++non_increasing;
        }
    }
    nlohmann::json summary;
    summary["widths"] = config.width_study.widths;
    summary["calibration_residuals"] = residuals;
    summary["non_increasing_steps"] = non_increasing;
    summary["steps"] = steps;
    summary["monotone"] = non_increasing == steps;
    save_json(config.out_dir + "/summary.json", summary);

    std::ostringstream line;
    line << "calibration residual non-increasing in " << non_increasing << "/" << steps
         << " width steps (monotone: " << (non_increasing == steps ? "yes" : "no") << ")\n";
    write_text_file(config.out_dir + "/summary.txt", line.str());
    return config.out_dir;
}

}  // namespace prkit
