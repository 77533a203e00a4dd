#pragma once

#include "prkit/dataset.hpp"
#include "prkit/llpr.hpp"
#include "prkit/models.hpp"
#include "prkit/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace prkit {

enum class ExperimentKind { toy_fit, benchmark, ood, ntk_study, width_study };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

/// Regression surface with one bimodal feature: column 0 is drawn around
/// +/- mode_separation with spread mode_sigma (fair coin per sample), the
/// remaining columns are standard normal, and the target is a smooth function
/// of the features plus observation noise. The two clusters in column 0 give
/// a natural in-domain / out-of-domain split at a threshold between them.
Dataset synth_bimodal(long n_samples, int n_features, double mode_separation,
                      double mode_sigma, double noise_sigma, std::uint64_t seed);

struct DataConfig {
    enum class Source { cos2, bimodal, hetero, csv, recipe };
    Source source = Source::cos2;

    // cos2: either the explicit points below or, when grid_n > 0, a uniform
    // grid of grid_n points on [grid_min, grid_max].
    std::vector<double> x_points{-0.8, -0.75, 0.0, 0.05, 0.07, 0.7, 0.73};
    double noise_sigma = 0.01;
    long grid_n = 0;
    double grid_min = -1.0;
    double grid_max = 1.0;

    // bimodal and hetero
    long n_samples = 600;
    int n_features = 4;
    double mode_separation = 2.0;
    double mode_sigma = 0.6;
    double bimodal_noise_sigma = 0.05;

    // hetero
    double hetero_x_sigma = 1.5;
    double hetero_noise_floor = 0.05;
    double hetero_noise_slope = 0.1;

    // csv
    std::string path;
    std::string target;
    bool header = true;
    char delimiter = ',';
    std::vector<long> feature_columns;

    // recipe
    std::string manifest = "recipes/datasets.json";
    std::string recipe_name = "energy";

    bool split_enabled = false;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    bool standardize = false;
};

struct CalibrationConfig {
    bool enabled = true;
    CalibrationObjective objective = CalibrationObjective::binned_residual;
    long bin_size = 100;
    std::vector<double> varsigma2_grid;  // empty = scale-relative defaults
    std::vector<double> alpha2_grid;
};

struct CurveConfig {
    double x_min = -2.0;
    double x_max = 2.0;
    long n_points = 201;
};

struct UqConfig {
    std::string model_file;  // produced by the fit command
    CurveConfig curve;
};

struct BenchmarkConfig {
    int n_splits = 20;
};

struct OodConfig {
    int feature = 0;
    double threshold = 0.0;  // in standardized units
};

struct NtkStudyConfig {
    Activation activation = Activation::tanh_fn;
    int min_depth = 1;
    int max_depth = 3;
    std::vector<double> inner_products{-0.1, -0.08, -0.06, -0.04, -0.02,
                                       0.02, 0.04,  0.06,  0.08,  0.1};
};

struct WidthStudyConfig {
    std::vector<int> widths{4, 8, 16, 32, 64, 128, 256};
};

/// Everything a run needs; serializable so any output is reproducible from
/// the config alone. `raw_text` keeps the exact bytes of the file the config
/// came from (or the serialized form for built ones) so output directories
/// can carry it verbatim.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::toy_fit;
    std::uint64_t seed = 0;
    std::string out_dir = "out/toy";
    std::string cache_dir = ".prkit-cache";

    DataConfig data;
    // model.input_dim 0 means "infer from the data".
    MlpArchitecture model{0, {32, 32}, Activation::silu, BiasMode::matched, 1.0,
                          Parametrization::standard};
    TrainConfig train;
    CalibrationConfig calibration;
    UqConfig uq;
    BenchmarkConfig benchmark;
    OodConfig ood;
    NtkStudyConfig ntk_study;
    WidthStudyConfig width_study;

    std::string raw_text;

    nlohmann::json to_json() const;
    void validate() const;
};

/// Defaults for a kind, with the data source and split switched to what that
/// experiment typically runs on. This is what `config init` prints.
ExperimentConfig default_experiment_config(ExperimentKind kind);

/// Parse + eagerly validate. Unknown keys anywhere are errors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct PreparedData {
    Dataset train;
    Dataset val;
    Dataset test;
    StandardizationState standardizer;  // identity when standardize is off
    long rows_dropped = 0;
};

/// Materialize the configured source, split it (or alias the whole set when
/// splitting is off), and standardize on the training statistics.
PreparedData prepare_data(const ExperimentConfig& config);

/// Each command writes its artifacts under config.out_dir, including the
/// config bytes themselves as config.json, and returns the directory. All
/// outputs are pure functions of (config, cache, seed); reruns are
/// byte-identical.
std::string run_fit(const ExperimentConfig& config);
std::string run_uq(const ExperimentConfig& config);
std::string run_benchmark(const ExperimentConfig& config);
std::string run_ood(const ExperimentConfig& config);
std::string run_ntk_study(const ExperimentConfig& config);
std::string run_width_study(const ExperimentConfig& config);

}  // namespace prkit
