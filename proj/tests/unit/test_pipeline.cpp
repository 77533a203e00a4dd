#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prkit/errors.hpp"
#include "prkit/io.hpp"
#include "prkit/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using prkit::DataConfig;
using prkit::ExperimentConfig;
using prkit::ExperimentKind;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string read_file(const std::string& path) { return prkit::read_text_file(path); }

long count_lines(const std::string& text) {
    long n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    return n;
}

ExperimentConfig config_from_text(const std::string& text) {
    return prkit::experiment_config_from_json(nlohmann::json::parse(text));
}

}  // namespace

TEST_CASE("experiment kind names round-trip") {
    for (auto kind : {ExperimentKind::toy_fit, ExperimentKind::benchmark, ExperimentKind::ood,
                      ExperimentKind::ntk_study, ExperimentKind::width_study}) {
        CHECK(prkit::experiment_kind_from_string(prkit::to_string(kind)) == kind);
    }
    CHECK_THROWS_AS(prkit::experiment_kind_from_string("toyfit"), prkit::ConfigError);
}

TEST_CASE("default configs validate and serialize round-trip") {
    for (auto kind : {ExperimentKind::toy_fit, ExperimentKind::benchmark, ExperimentKind::ood,
                      ExperimentKind::ntk_study, ExperimentKind::width_study}) {
        const auto config = prkit::default_experiment_config(kind);
        config.validate();
        const auto dumped = config.to_json();
        const auto reparsed = prkit::experiment_config_from_json(dumped);
        CHECK(reparsed.to_json() == dumped);
        CHECK(reparsed.kind == kind);
    }
}

TEST_CASE("unknown keys are rejected at every level") {
    auto base = prkit::default_experiment_config(ExperimentKind::toy_fit).to_json();

    auto with = [&](const char* section, const char* key) {
        auto j = base;
        if (section == nullptr) {
            j[key] = 1;
        } else {
            j[section][key] = 1;
        }
        return j;
    };

    CHECK_THROWS_WITH_AS(prkit::experiment_config_from_json(with(nullptr, "outdir")),
                         doctest::Contains("unknown key 'outdir'"), prkit::ConfigError);
    CHECK_THROWS_WITH_AS(prkit::experiment_config_from_json(with("data", "sources")),
                         doctest::Contains("config.data"), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("model", "width")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("train", "lr")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("calibration", "grid")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("uq", "model")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("benchmark", "splits")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("ood", "column")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("ntk_study", "depth")),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::experiment_config_from_json(with("width_study", "width")),
                    prkit::ConfigError);

    auto curve = base;
    curve["uq"]["curve"]["xmin"] = 0;
    CHECK_THROWS_AS(prkit::experiment_config_from_json(curve), prkit::ConfigError);
}

TEST_CASE("config validation catches bad values eagerly") {
    auto ok = prkit::default_experiment_config(ExperimentKind::toy_fit);

    SUBCASE("one-sided calibration grid") {
        auto c = ok;
        c.calibration.varsigma2_grid = {1e-3};
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
        c.calibration.alpha2_grid = {1.0};
        CHECK_NOTHROW(c.validate());
    }
    SUBCASE("curve needs a real interval") {
        auto c = ok;
        c.uq.curve.n_points = 1;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
        c.uq.curve.n_points = 10;
        c.uq.curve.x_max = c.uq.curve.x_min;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("width list must ascend") {
        auto c = ok;
        c.width_study.widths = {4, 4};
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
        c.width_study.widths = {4, 2};
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
        c.width_study.widths = {};
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("relu is rejected for the expansion study") {
        auto c = ok;
        c.ntk_study.activation = prkit::Activation::relu;
        CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("relu"), prkit::ConfigError);
    }
    SUBCASE("inner products must stay inside the open unit interval") {
        auto c = ok;
        c.ntk_study.inner_products = {0.5, 1.0};
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("benchmark kind requires a file-backed source") {
        auto c = prkit::default_experiment_config(ExperimentKind::benchmark);
        c.data.source = DataConfig::Source::cos2;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("split fractions must sum to one when splitting") {
        auto c = ok;
        c.data.split_enabled = true;
        c.data.train_fraction = 0.5;
        c.data.val_fraction = 0.1;
        c.data.test_fraction = 0.1;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("csv source needs path and target") {
        auto c = ok;
        c.data.source = DataConfig::Source::csv;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
    SUBCASE("hetero parameters") {
        auto c = ok;
        c.data.source = DataConfig::Source::hetero;
        c.data.hetero_x_sigma = 0.0;
        CHECK_THROWS_AS(c.validate(), prkit::ConfigError);
    }
}

TEST_CASE("synth_bimodal draws two separated clusters deterministically") {
    const auto d = prkit::synth_bimodal(400, 3, 2.0, 0.3, 0.01, 11);
    CHECK(d.n_samples() == 400);
    CHECK(d.n_features() == 3);
    CHECK(d.column_names == std::vector<std::string>{"f0", "f1", "f2"});

    long left = 0, right = 0;
    for (long i = 0; i < d.n_samples(); ++i) {
        const double x0 = d.features(i, 0);
        CHECK(std::abs(std::abs(x0) - 2.0) < 1.5);  // within 5 sigma of a mode
        (x0 < 0 ? left : right)++;
    }
    CHECK(left > 100);
    CHECK(right > 100);

    const auto same = prkit::synth_bimodal(400, 3, 2.0, 0.3, 0.01, 11);
    CHECK(same.features == d.features);
    CHECK(same.targets == d.targets);
    const auto other = prkit::synth_bimodal(400, 3, 2.0, 0.3, 0.01, 12);
    CHECK(other.features != d.features);
}

TEST_CASE("synth_hetero noise grows with |x|") {
    const auto d = prkit::synth_hetero(4000, 1.5, 0.02, 0.2, 5);
    CHECK(d.n_features() == 1);
    double inner_ss = 0.0, outer_ss = 0.0;
    long inner_n = 0, outer_n = 0;
    for (long i = 0; i < d.n_samples(); ++i) {
        const double x = d.features(i, 0);
        const double r = d.targets(i) - (std::sin(2.0 * x) + 0.1 * x * x);
        if (std::abs(x) < 1.0) {
            inner_ss += r * r;
            ++inner_n;
        } else if (std::abs(x) > 2.0) {
            outer_ss += r * r;
            ++outer_n;
        }
    }
    REQUIRE(inner_n > 100);
    REQUIRE(outer_n > 100);
    CHECK(outer_ss / outer_n > 2.0 * (inner_ss / inner_n));
}

TEST_CASE("prepare_data covers grids, splits, and standardization") {
    SUBCASE("explicit toy points, no split") {
        const auto config = prkit::default_experiment_config(ExperimentKind::toy_fit);
        const auto data = prkit::prepare_data(config);
        CHECK(data.train.n_samples() == 7);
        CHECK(data.val.n_samples() == 7);
        CHECK(data.test.n_samples() == 7);
        CHECK_FALSE(data.standardizer.applied);
    }
    SUBCASE("uniform grid overrides the point list") {
        auto config = prkit::default_experiment_config(ExperimentKind::toy_fit);
        config.data.grid_n = 41;
        config.data.grid_min = -2.0;
        config.data.grid_max = 2.0;
        const auto data = prkit::prepare_data(config);
        CHECK(data.train.n_samples() == 41);
        CHECK(data.train.features(0, 0) == doctest::Approx(-2.0));
        CHECK(data.train.features(40, 0) == doctest::Approx(2.0));
    }
    SUBCASE("split plus standardize") {
        auto config = prkit::default_experiment_config(ExperimentKind::ood);
        config.data.n_samples = 200;
        const auto data = prkit::prepare_data(config);
        CHECK(data.train.n_samples() == 120);
        CHECK(data.val.n_samples() == 40);
        CHECK(data.test.n_samples() == 40);
        CHECK(data.standardizer.applied);
        CHECK(data.train.features.col(0).mean() == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("fit and uq write deterministic artifacts") {
    TempDir dir("prkit_pipe_fituq");
    auto config = prkit::default_experiment_config(ExperimentKind::toy_fit);
    config.train.epochs = 40;
    config.uq.curve.n_points = 21;

    auto run_pair = [&](const std::string& tag) {
        auto c = config;
        c.out_dir = dir.str() + "/" + tag;
        c.uq.model_file = c.out_dir + "/model.json";
        prkit::run_fit(c);
        prkit::run_uq(c);
        return c.out_dir;
    };
    const auto a = run_pair("a");
    const auto b = run_pair("b");

    for (const char* name :
         {"/model.json", "/train_log.csv", "/train_summary.json", "/curve.csv",
          "/llpr_state.json", "/report_test.csv", "/report_test.json", "/summary.json",
          "/curve_uq.csv"}) {
        CAPTURE(name);
        CHECK(read_file(a + name) == read_file(b + name));
    }
    // config.json differs only in the paths injected above
    CHECK(count_lines(read_file(a + "/curve_uq.csv")) == 22);

    const auto summary = nlohmann::json::parse(read_file(a + "/summary.json"));
    CHECK(summary.at("calibrated").get<bool>());
    CHECK(summary.at("rmse").get<double>() < 0.5);
    CHECK(summary.at("n_test").get<long>() == 7);

    SUBCASE("uq without a model file is a config error") {
        auto c = config;
        c.out_dir = dir.str() + "/c";
        c.uq.model_file = "";
        CHECK_THROWS_AS(prkit::run_uq(c), prkit::ConfigError);
    }
    SUBCASE("command and config kind must agree") {
        auto c = prkit::default_experiment_config(ExperimentKind::ood);
        c.out_dir = dir.str() + "/d";
        CHECK_THROWS_AS(prkit::run_fit(c), prkit::ConfigError);
        CHECK_THROWS_AS(prkit::run_benchmark(c), prkit::ConfigError);
    }
}

TEST_CASE("config file copy lands verbatim in the output directory") {
    TempDir dir("prkit_pipe_copy");
    auto config = prkit::default_experiment_config(ExperimentKind::toy_fit);
    config.out_dir = dir.str() + "/run";
    config.train.epochs = 5;
    auto j = config.to_json();
    // odd spacing and key order must survive the round trip untouched
    const std::string raw = "{\"kind\":   \"toy-fit\",\n \"train\": " +
                            j["train"].dump() + ",\n \"out_dir\": \"" + config.out_dir +
                            "\"}\n";
    const auto path = dir.str() + "/config.json";
    prkit::write_text_file(path, raw);
    const auto loaded = prkit::load_experiment_config(path);
    prkit::run_fit(loaded);
    CHECK(read_file(config.out_dir + "/config.json") == raw);
}

TEST_CASE("ood run separates the held-out mode") {
    TempDir dir("prkit_pipe_ood");
    auto config = prkit::default_experiment_config(ExperimentKind::ood);
    config.out_dir = dir.str() + "/run";
    const auto out = prkit::run_ood(config);
    const auto summary = nlohmann::json::parse(read_file(out + "/summary.json"));
    CHECK(summary.at("mean_variance_out").get<double>() >
          summary.at("mean_variance_in").get<double>());
    CHECK(summary.at("calibration_improves").get<bool>());
    CHECK(fs::exists(out + "/report_in.csv"));
    CHECK(fs::exists(out + "/report_out.csv"));
    CHECK(read_file(out + "/summary.txt").find("flagged: yes") != std::string::npos);
}

TEST_CASE("ntk study with identity activation has vanishing gaps") {
    TempDir dir("prkit_pipe_ntk");
    auto config = prkit::default_experiment_config(ExperimentKind::ntk_study);
    config.out_dir = dir.str() + "/run";
    config.ntk_study.activation = prkit::Activation::identity;
    const auto out = prkit::run_ntk_study(config);
    const auto summary = nlohmann::json::parse(read_file(out + "/summary.json"));
    CHECK(summary.at("max_abs_feature_gap").get<double>() < 1e-12);
    CHECK(summary.at("max_abs_kernel_gap").get<double>() < 1e-12);
    CHECK(summary.at("n_rows").get<long>() == 30);
    CHECK(count_lines(read_file(out + "/gaps.csv")) == 31);
}

TEST_CASE("benchmark on a local csv aggregates per-split rows") {
    TempDir dir("prkit_pipe_bench");

    // materialize a synthetic table as csv
    const auto d = prkit::synth_hetero(400, 1.5, 0.05, 0.1, 3);
    std::string csv = "x,y\n";
    for (long i = 0; i < d.n_samples(); ++i) {
        csv += prkit::format_double(d.features(i, 0)) + "," +
               prkit::format_double(d.targets(i)) + "\n";
    }
    const auto table = dir.str() + "/table.csv";
    prkit::write_text_file(table, csv);

    auto config = prkit::default_experiment_config(ExperimentKind::benchmark);
    config.out_dir = dir.str() + "/run";
    config.data.source = DataConfig::Source::csv;
    config.data.path = table;
    config.data.target = "y";
    config.benchmark.n_splits = 3;
    config.train.epochs = 30;
    config.model.hidden_widths = {16};
    config.calibration.bin_size = 10;

    const auto out = prkit::run_benchmark(config);
    const auto agg = nlohmann::json::parse(read_file(out + "/aggregate.json"));
    CHECK(agg.at("n_done").get<int>() == 3);
    CHECK(agg.at("missing_splits").empty());
    CHECK(agg.at("dataset").get<std::string>() == "table");
    CHECK(agg.at("rmse_stderr").is_number());
    CHECK(count_lines(read_file(out + "/benchmark.csv")) == 4);
    for (int k = 0; k < 3; ++k) {
        CHECK(fs::exists(out + "/split_" + std::to_string(k) + ".csv"));
    }
    const auto table2 = read_file(out + "/table2.txt");
    CHECK(table2.find("table: RMSE ") != std::string::npos);
    CHECK(table2.find("[3/3 splits]") != std::string::npos);

    SUBCASE("a single split reports no spread") {
        auto c = config;
        c.out_dir = dir.str() + "/single";
        c.benchmark.n_splits = 1;
        prkit::run_benchmark(c);
        const auto single = nlohmann::json::parse(read_file(c.out_dir + "/aggregate.json"));
        CHECK(single.at("rmse_stderr").is_null());
        CHECK(read_file(c.out_dir + "/table2.txt").find("N/A") != std::string::npos);
    }
}

TEST_CASE("width study reports the residual trend") {
    TempDir dir("prkit_pipe_width");
    auto config = prkit::default_experiment_config(ExperimentKind::width_study);
    config.out_dir = dir.str() + "/run";
    config.data.n_samples = 600;
    config.train.epochs = 40;
    config.width_study.widths = {4, 16};
    config.calibration.bin_size = 40;
    const auto out = prkit::run_width_study(config);
    const auto summary = nlohmann::json::parse(read_file(out + "/summary.json"));
    CHECK(summary.at("steps").get<long>() == 1);
    CHECK(summary.at("calibration_residuals").size() == 2);
    CHECK(count_lines(read_file(out + "/width_sweep.csv")) == 3);
    const auto line = read_file(out + "/summary.txt");
    CHECK(line.find("width steps") != std::string::npos);
}
