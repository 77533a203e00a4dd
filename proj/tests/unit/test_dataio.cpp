#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prkit/dataset.hpp"
#include "prkit/errors.hpp"
#include "prkit/fetch.hpp"
#include "prkit/io.hpp"
#include "prkit/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

using prkit::Dataset;
using prkit::Matrix;
using prkit::Vector;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path(write_temp(name, content)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("a two-by-two csv loads into one feature and two samples") {
    TempFile f("prkit_small.csv", "x,y\n1,2\n3,4\n");
    const auto report = prkit::load_csv(f.path, "y", true);
    const Dataset& d = report.dataset;
    CHECK(report.rows_dropped == 0);
    CHECK(d.n_samples() == 2);
    CHECK(d.n_features() == 1);
    CHECK(d.features(0, 0) == 1.0);
    CHECK(d.features(1, 0) == 3.0);
    CHECK(d.targets(0) == 2.0);
    CHECK(d.targets(1) == 4.0);
    CHECK(d.target_name == "y");
    REQUIRE(d.column_names.size() == 1);
    CHECK(d.column_names[0] == "x");
}

TEST_CASE("the target column can sit anywhere and crlf endings are fine") {
    TempFile f("prkit_mid.csv", "a,label,b\r\n1,10,2\r\n3,20,4\r\n");
    const auto d = prkit::load_csv(f.path, "label", true).dataset;
    CHECK(d.n_features() == 2);
    CHECK(d.targets(0) == 10.0);
    CHECK(d.targets(1) == 20.0);
    CHECK(d.features(0, 0) == 1.0);
    CHECK(d.features(0, 1) == 2.0);
    CHECK(d.column_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("rows with missing cells are dropped and counted") {
    TempFile f("prkit_missing.csv",
               "a,b,y\n1,2,3\n4,NA,6\n7,8,9\n?,1,2\nna,1,2\n10,11,\n12,13,14\n");
    const auto report = prkit::load_csv(f.path, "y", true);
    CHECK(report.rows_dropped == 4);
    CHECK(report.dataset.n_samples() == 3);
    CHECK(report.dataset.targets(0) == 3.0);
    CHECK(report.dataset.targets(1) == 9.0);
    CHECK(report.dataset.targets(2) == 14.0);
}

TEST_CASE("an unparsable cell is an error naming its position") {
    TempFile f("prkit_bad.csv", "a,y\n1,2\n3,oops\n");
    try {
        prkit::load_csv(f.path, "y", true);
        FAIL("expected ParseError");
    } catch (const prkit::ParseError& e) {
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
        CHECK(e.row == 3);
        CHECK(e.column == 1);
    }
}

TEST_CASE("ragged rows are rejected with their line number") {
    TempFile f("prkit_ragged.csv", "a,b,y\n1,2,3\n4,5\n");
    try {
        prkit::load_csv(f.path, "y", true);
        FAIL("expected ParseError");
    } catch (const prkit::ParseError& e) {
        CHECK(e.row == 3);
    }
}

TEST_CASE("headerless files take a zero-based target index") {
    TempFile f("prkit_nohdr.csv", "1,2,3\n4,5,6\n");
    const auto d = prkit::load_csv(f.path, "2", false).dataset;
    CHECK(d.n_features() == 2);
    CHECK(d.targets(0) == 3.0);
    CHECK(d.targets(1) == 6.0);
    CHECK(d.column_names.empty());

    CHECK_THROWS_AS(prkit::load_csv(f.path, "x", false), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::load_csv(f.path, "-1", false), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::load_csv(f.path, "5", false), prkit::MissingColumn);
}

TEST_CASE("loader edge cases") {
    TempFile absent("prkit_absent.csv", "a,y\n1,2\n");
    CHECK_THROWS_AS(prkit::load_csv(absent.path, "nope", true), prkit::MissingColumn);
    CHECK_THROWS_AS(prkit::load_csv("/nonexistent/path.csv", "y", true), prkit::IoError);

    TempFile empty("prkit_empty.csv", "a,y\n");
    CHECK_THROWS_AS(prkit::load_csv(empty.path, "y", true), prkit::EmptyInput);

    TempFile all_missing("prkit_allmiss.csv", "a,y\nNA,1\n2,NA\n");
    CHECK_THROWS_AS(prkit::load_csv(all_missing.path, "y", true), prkit::EmptyInput);
}

TEST_CASE("zero-mean unit-std data standardizes to itself") {
    Dataset d;
    d.features.resize(2, 2);
    d.features << -1.0, 2.0, 1.0, -2.0;  // means 0, population stds 1 and 2
    d.targets.resize(2);
    d.targets << -3.0, 3.0;
    const auto s = prkit::fit_standardizer(d);
    const auto out = prkit::apply_standardizer(s, d);
    CHECK(std::fabs(out.features(0, 0) - (-1.0)) < 1e-12);
    CHECK(std::fabs(out.features(1, 0) - 1.0) < 1e-12);
    CHECK(std::fabs(out.features(0, 1) - 1.0) < 1e-12);  // std 2 rescales
    CHECK(std::fabs(out.targets(0) - (-1.0)) < 1e-12);
    CHECK(s.feature_std(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.feature_std(1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.target_std == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("constant columns are flagged and passed through") {
    Dataset d;
    d.features.resize(3, 2);
    d.features << 5.0, 1.0, 5.0, 2.0, 5.0, 3.0;
    d.targets.resize(3);
    d.targets << 1.0, 2.0, 3.0;
    const auto s = prkit::fit_standardizer(d);
    REQUIRE(s.constant_columns == std::vector<int>{0});
    const auto out = prkit::apply_standardizer(s, d);
    CHECK(out.features(0, 0) == 5.0);
    CHECK(out.features(2, 0) == 5.0);
    CHECK(out.features.col(1).mean() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("standardization round-trips and scales variances by the target std squared") {
    prkit::Rng rng(42);
    Dataset train;
    train.features.resize(20, 3);
    train.targets.resize(20);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 3; ++j) train.features(i, j) = 2.0 + 3.0 * rng.normal();
        train.targets(i) = -1.0 + 0.5 * rng.normal();
    }
    const auto s = prkit::fit_standardizer(train);
    const auto std_train = prkit::apply_standardizer(s, train);
    CHECK(std_train.standardization.applied);
    for (int j = 0; j < 3; ++j) {
        CHECK(std_train.features.col(j).mean() == doctest::Approx(0.0).epsilon(1e-12));
    }
    for (int i = 0; i < 20; ++i) {
        CHECK(prkit::destandardize_prediction(s, std_train.targets(i)) ==
              doctest::Approx(train.targets(i)).epsilon(1e-12));
    }
    CHECK(prkit::destandardize_variance(s, 1.0) ==
          doctest::Approx(s.target_std * s.target_std).epsilon(1e-12));

    // Validation data is scaled with the training statistics, not its own.
    Dataset val = train;
    val.features.array() += 10.0;
    const auto std_val = prkit::apply_standardizer(s, val);
    CHECK(std_val.features.col(0).mean() ==
          doctest::Approx(10.0 / s.feature_std(0)).epsilon(1e-10));

    Dataset narrow;
    narrow.features = Matrix::Ones(2, 1);
    narrow.targets = Vector::Ones(2);
    CHECK_THROWS_AS(prkit::apply_standardizer(s, narrow), prkit::DimensionMismatch);
}

TEST_CASE("split slices floor fractions and test takes the remainder") {
    Dataset d;
    d.features.resize(10, 1);
    d.targets.resize(10);
    for (int i = 0; i < 10; ++i) {
        d.features(i, 0) = i;
        d.targets(i) = i;
    }
    prkit::SplitSpec spec;
    spec.seed = 3;
    const auto r = prkit::split(d, spec);
    CHECK(r.train.n_samples() == 8);
    CHECK(r.val.n_samples() == 1);
    CHECK(r.test.n_samples() == 1);

    const auto again = prkit::split(d, spec);
    CHECK((r.train.features - again.train.features).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.val.features - again.val.features).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.test.features - again.test.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("every index lands in exactly one split for any seed") {
    Dataset d;
    const int n = 23;
    d.features.resize(n, 1);
    d.targets.resize(n);
    d.sample_weights.resize(n);
    for (int i = 0; i < n; ++i) {
        d.features(i, 0) = i;
        d.targets(i) = i;
        d.sample_weights(i) = 1.0 + i;
    }
    prkit::SplitSpec spec;
    spec.train_fraction = 0.6;
    spec.val_fraction = 0.2;
    spec.test_fraction = 0.2;
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        spec.seed = seed;
        const auto r = prkit::split(d, spec);
        std::vector<double> seen;
        auto collect = [&](const Dataset& part) {
            for (long i = 0; i < part.n_samples(); ++i) {
                seen.push_back(part.targets(i));
                // Weights travel with their rows.
                CHECK(part.sample_weights(i) == doctest::Approx(1.0 + part.targets(i)));
            }
        };
        collect(r.train);
        collect(r.val);
        collect(r.test);
        REQUIRE(seen.size() == static_cast<std::size_t>(n));
        std::sort(seen.begin(), seen.end());
        for (int i = 0; i < n; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("split validation") {
    Dataset d;
    d.features.resize(2, 1);
    d.features << 1.0, 2.0;
    d.targets.resize(2);
    d.targets << 1.0, 2.0;
    prkit::SplitSpec spec;
    CHECK_THROWS_AS(prkit::split(d, spec), prkit::EmptyInput);

    spec.train_fraction = 0.5;
    spec.val_fraction = 0.2;
    spec.test_fraction = 0.2;
    CHECK_THROWS_AS(spec.validate(), prkit::ConfigError);
    spec.test_fraction = 0.0;
    CHECK_THROWS_AS(spec.validate(), prkit::ConfigError);
}

TEST_CASE("the cosine-squared generator is exact at zero noise") {
    const auto at_zero = prkit::synth_cos2(0.0, {0.0}, 1);
    CHECK(at_zero.targets(0) == 1.0);

    std::vector<double> grid;
    for (int i = 0; i < 50; ++i) grid.push_back(-2.0 + 0.08 * i);
    const auto clean = prkit::synth_cos2(0.0, grid, 7);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double c = std::cos(grid[static_cast<std::size_t>(i)]);
        worst = std::max(worst, std::fabs(clean.targets(i) - c * c));
    }
    CHECK(worst == 0.0);

    const std::vector<double> seven = {-0.8, -0.75, 0.0, 0.05, 0.07, 0.7, 0.73};
    const auto d = prkit::synth_cos2(0.01, seven, 11);
    CHECK(d.n_samples() == 7);
    CHECK(d.n_features() == 1);
    for (int i = 0; i < 7; ++i) {
        CHECK(d.features(i, 0) == seven[static_cast<std::size_t>(i)]);
        const double c = std::cos(seven[static_cast<std::size_t>(i)]);
        CHECK(std::fabs(d.targets(i) - c * c) < 0.05);  // 5 sigma
    }
    CHECK_THROWS_AS(prkit::synth_cos2(-0.1, {0.0}, 1), prkit::ConfigError);
}

TEST_CASE("angle columns become unit-circle pairs") {
    Dataset d;
    d.features.resize(3, 2);
    d.features << 90.0, 1.0, 0.0, 2.0, 360.0, 3.0;
    d.targets.resize(3);
    d.targets << 1.0, 2.0, 3.0;
    d.column_names = {"wind_dir", "speed"};
    const auto out = prkit::angle_to_cos_sin(d, 0);
    CHECK(out.n_features() == 3);
    CHECK(out.features(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.features(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.features(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.features(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
    // 360 degrees wraps to 0.
    CHECK(out.features(2, 0) == doctest::Approx(out.features(1, 0)).epsilon(1e-12));
    CHECK(out.features(2, 1) == doctest::Approx(out.features(1, 1)).epsilon(1e-9));
    CHECK(out.features(0, 2) == 1.0);
    CHECK(out.column_names ==
          std::vector<std::string>{"wind_dir_cos", "wind_dir_sin", "speed"});
    CHECK_THROWS_AS(prkit::angle_to_cos_sin(d, 2), prkit::DimensionMismatch);
    CHECK_THROWS_AS(prkit::angle_to_cos_sin(d, -1), prkit::DimensionMismatch);
}

TEST_CASE("whitespace tables split on runs of spaces and tabs") {
    TempFile f("prkit_ws.txt", " 1.0\t2.0   3.0 \n4 5 6\n\n7\t\t8  9\n");
    const auto report = prkit::load_csv(f.path, "2", false, ' ');
    const Dataset& d = report.dataset;
    CHECK(report.rows_dropped == 0);
    CHECK(d.n_samples() == 3);
    CHECK(d.n_features() == 2);
    CHECK(d.features(0, 0) == 1.0);
    CHECK(d.features(0, 1) == 2.0);
    CHECK(d.targets(0) == 3.0);
    CHECK(d.features(2, 0) == 7.0);
    CHECK(d.targets(2) == 9.0);
    CHECK(d.column_names.empty());
}

TEST_CASE("selected feature columns ignore junk and missing cells elsewhere") {
    TempFile f("prkit_sel.csv", "a,b,c,d,y\n1,junk,3,NA,5\n6,7,8,9,10\n");
    const auto report = prkit::load_csv(f.path, "y", true, ',', {0, 2});
    const Dataset& d = report.dataset;
    CHECK(report.rows_dropped == 0);
    CHECK(d.n_samples() == 2);
    CHECK(d.n_features() == 2);
    CHECK(d.features(0, 0) == 1.0);
    CHECK(d.features(0, 1) == 3.0);
    CHECK(d.targets(1) == 10.0);
    CHECK(d.column_names == std::vector<std::string>{"a", "c"});

    const auto swapped = prkit::load_csv(f.path, "y", true, ',', {2, 0}).dataset;
    CHECK(swapped.features(1, 0) == 8.0);
    CHECK(swapped.features(1, 1) == 6.0);
    CHECK(swapped.column_names == std::vector<std::string>{"c", "a"});
}

TEST_CASE("a missing cell in a selected column still drops the row") {
    TempFile f("prkit_selmiss.csv", "a,b,y\nNA,2,3\n4,5,6\n");
    const auto report = prkit::load_csv(f.path, "y", true, ',', {0});
    CHECK(report.rows_dropped == 1);
    CHECK(report.dataset.n_samples() == 1);
    CHECK(report.dataset.features(0, 0) == 4.0);
}

TEST_CASE("bad feature column lists are rejected") {
    TempFile f("prkit_selbad.csv", "1,2,3\n4,5,6\n");
    CHECK_THROWS_AS(prkit::load_csv(f.path, "2", false, ',', {1, 1}), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::load_csv(f.path, "2", false, ',', {2}), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::load_csv(f.path, "2", false, ',', {-1}), prkit::ConfigError);
    CHECK_THROWS_AS(prkit::load_csv(f.path, "2", false, ',', {0, 7}), prkit::MissingColumn);
}

namespace {

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name)
        : path((std::filesystem::temp_directory_path() / name).string()) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("fetch caches a file url and serves hits without the source") {
    const std::string content = "a,b\n1,2\n3,4\n";
    const std::string digest = prkit::sha256_hex(content);
    TempFile src("prkit_fetch_src.csv", content);
    TempDir cache("prkit_fetch_cache");

    const auto path1 = prkit::fetch_dataset("file://" + src.path, cache.path, digest);
    CHECK(prkit::read_text_file(path1) == content);
    CHECK(std::filesystem::path(path1).filename() == "prkit_fetch_src.csv");
    CHECK(std::filesystem::path(path1).parent_path().filename() == digest.substr(0, 12));

    const auto renamed =
        prkit::fetch_dataset("file://" + src.path, cache.path, digest, "other.csv");
    CHECK(std::filesystem::path(renamed).filename() == "other.csv");

    std::remove(src.path.c_str());
    const auto path2 = prkit::fetch_dataset("file://" + src.path, cache.path, digest);
    CHECK(path2 == path1);
    CHECK(prkit::read_text_file(path2) == content);
}

TEST_CASE("a checksum mismatch quarantines the bytes and heals on refetch") {
    const std::string content = "x,y\n1,2\n";
    const std::string digest = prkit::sha256_hex(content);
    TempFile src("prkit_fetch_bad.csv", content);
    TempDir cache("prkit_fetch_badcache");

    const std::string wrong = prkit::sha256_hex(std::string("something else"));
    CHECK_THROWS_AS(prkit::fetch_dataset("file://" + src.path, cache.path, wrong),
                    prkit::ChecksumMismatch);
    const auto bad_entry = std::filesystem::path(cache.path) / wrong.substr(0, 12);
    CHECK(std::filesystem::exists(bad_entry / "prkit_fetch_bad.csv.quarantine"));
    CHECK(!std::filesystem::exists(bad_entry / "prkit_fetch_bad.csv"));

    const auto good = prkit::fetch_dataset("file://" + src.path, cache.path, digest);
    std::ofstream(good, std::ios::binary | std::ios::trunc) << "corrupted";
    CHECK_THROWS_AS(prkit::fetch_dataset("file://" + src.path, cache.path, digest),
                    prkit::ChecksumMismatch);
    const auto entry = std::filesystem::path(cache.path) / digest.substr(0, 12);
    CHECK(prkit::read_text_file((entry / "prkit_fetch_bad.csv.quarantine").string()) ==
          "corrupted");

    const auto healed = prkit::fetch_dataset("file://" + src.path, cache.path, digest);
    CHECK(prkit::read_text_file(healed) == content);
}

TEST_CASE("fetch validates its arguments and fails loudly on a dead source") {
    TempDir cache("prkit_fetch_argcache");
    const std::string digest = prkit::sha256_hex(std::string("whatever"));
    CHECK_THROWS_AS(prkit::fetch_dataset("file:///nope/missing.csv", cache.path, digest),
                    prkit::NetworkError);
    CHECK_THROWS_AS(prkit::fetch_dataset("file:///x.csv", cache.path, ""),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::fetch_dataset("file:///x.csv", cache.path, "abc123"),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::fetch_dataset("no-scheme.csv", cache.path, digest),
                    prkit::ConfigError);
    CHECK_THROWS_AS(prkit::fetch_dataset("ftp://host/x.csv", cache.path, digest),
                    prkit::ConfigError);
}

TEST_CASE("concurrent fetches of one entry serialize on the lock") {
    const std::string content(20000, 'q');
    const std::string digest = prkit::sha256_hex(content);
    TempFile src("prkit_fetch_par.csv", content);
    TempDir cache("prkit_fetch_parcache");

    std::vector<std::string> results(4);
    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t) {
        workers.emplace_back([&, t] {
            results[static_cast<std::size_t>(t)] =
                prkit::fetch_dataset("file://" + src.path, cache.path, digest);
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& r : results) {
        CHECK(r == results[0]);
        CHECK(prkit::read_text_file(r) == content);
    }
}

TEST_CASE("the recipes manifest round-trips and records byte lengths") {
    const std::string content = "7 8 9\n1 2 3\n";
    const std::string digest = prkit::sha256_hex(content);
    TempFile src("prkit_recipe_src.txt", content);
    TempDir cache("prkit_recipe_cache");
    TempFile manifest("prkit_recipes.json", std::string(R"({
      "version": 1,
      "datasets": [
        {
          "name": "tiny",
          "url": "file://)") + src.path + R"(",
          "sha256": ")" + digest + R"(",
          "size_bytes": )" + std::to_string(content.size()) + R"(,
          "filename": "tiny.txt",
          "target": "2",
          "header": false,
          "delimiter": "whitespace",
          "feature_columns": [0, 1],
          "license_note": "synthetic",
          "protocol_note": "fixture"
        },
        { "name": "bare", "url": "https://example.com/d.csv", "target": "y", "sha256": null }
      ]
    })");

    const auto recipes = prkit::load_recipes(manifest.path);
    REQUIRE(recipes.size() == 2);
    const auto& tiny = prkit::find_recipe(recipes, "tiny");
    CHECK(tiny.delimiter == ' ');
    CHECK(tiny.header == false);
    CHECK(tiny.feature_columns == std::vector<long>{0, 1});
    CHECK(tiny.size_bytes == static_cast<long>(content.size()));
    CHECK(prkit::find_recipe(recipes, "bare").sha256.empty());
    CHECK_THROWS_AS(prkit::find_recipe(recipes, "nope"), prkit::ConfigError);

    const auto fetched =
        prkit::fetch_dataset(tiny.url, cache.path, tiny.sha256, tiny.filename);
    CHECK(static_cast<long>(std::filesystem::file_size(fetched)) == tiny.size_bytes);
    const auto d =
        prkit::load_csv(fetched, tiny.target, tiny.header, tiny.delimiter,
                        tiny.feature_columns)
            .dataset;
    CHECK(d.n_samples() == 2);
    CHECK(d.targets(0) == 9.0);
}

TEST_CASE("malformed manifests are rejected with the offending key") {
    TempFile unknown("prkit_bad1.json",
                     R"({"datasets":[{"name":"a","url":"file:///x","target":"0","oops":1}]})");
    CHECK_THROWS_WITH_AS(prkit::load_recipes(unknown.path),
                         doctest::Contains("unknown recipe key 'oops'"), prkit::ConfigError);
    TempFile dup("prkit_bad2.json",
                 R"({"datasets":[{"name":"a","url":"file:///x","target":"0"},
                                 {"name":"a","url":"file:///y","target":"0"}]})");
    CHECK_THROWS_AS(prkit::load_recipes(dup.path), prkit::ConfigError);
    TempFile badsha("prkit_bad3.json",
                    R"({"datasets":[{"name":"a","url":"file:///x","target":"0","sha256":"zz"}]})");
    CHECK_THROWS_AS(prkit::load_recipes(badsha.path), prkit::ConfigError);
    TempFile toplevel("prkit_bad4.json", R"({"datasets":[],"surprise":true})");
    CHECK_THROWS_AS(prkit::load_recipes(toplevel.path), prkit::ConfigError);
    TempFile incomplete("prkit_bad5.json", R"({"datasets":[{"name":"a","url":"file:///x"}]})");
    CHECK_THROWS_AS(prkit::load_recipes(incomplete.path), prkit::ConfigError);
    TempFile baddelim("prkit_bad6.json",
                      R"({"datasets":[{"name":"a","url":"file:///x","target":"0",
                                       "delimiter":"ab"}]})");
    CHECK_THROWS_AS(prkit::load_recipes(baddelim.path), prkit::ConfigError);
}

TEST_CASE("the repository manifest lists the benchmark recipes honestly") {
    const auto repo_manifest = std::filesystem::path(__FILE__)
                                   .parent_path()
                                   .parent_path()
                                   .parent_path() /
                               "recipes" / "datasets.json";
    REQUIRE(std::filesystem::exists(repo_manifest));
    const auto recipes = prkit::load_recipes(repo_manifest.string());
    REQUIRE(recipes.size() == 3);
    for (const auto& r : recipes) {
        CHECK(r.url.rfind("https://", 0) == 0);
        CHECK(r.header == false);
        CHECK(r.delimiter == ' ');
        CHECK(!r.feature_columns.empty());
        CHECK(!r.license_note.empty());
        CHECK(!r.protocol_note.empty());
        CHECK(r.name != "boston");
    }
    const auto& energy = prkit::find_recipe(recipes, "energy");
    CHECK(energy.target == "8");
    CHECK(energy.feature_columns.size() == 8);
    prkit::find_recipe(recipes, "yacht");
    prkit::find_recipe(recipes, "concrete");
}
