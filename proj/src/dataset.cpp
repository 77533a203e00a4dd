#include "prkit/dataset.hpp"

#include "prkit/errors.hpp"
#include "prkit/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

namespace prkit {

namespace {

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "?";
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::string cell;
    if (delimiter == ' ') {
        std::stringstream ss(line);
        while (ss >> cell) cells.push_back(trim(cell));
        return cells;
    }
    std::stringstream ss(line);
    while (std::getline(ss, cell, delimiter)) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == delimiter) cells.push_back("");
    return cells;
}

Dataset take_rows(const Dataset& d, const std::vector<long>& idx) {
    Dataset out;
    out.features.resize(static_cast<long>(idx.size()), d.features.cols());
    out.targets.resize(static_cast<long>(idx.size()));
    if (d.sample_weights.size() > 0) out.sample_weights.resize(static_cast<long>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<long>(i)) = d.features.row(idx[i]);
        out.targets(static_cast<long>(i)) = d.targets(idx[i]);
        if (d.sample_weights.size() > 0) {
            out.sample_weights(static_cast<long>(i)) = d.sample_weights(idx[i]);
        }
    }
    out.column_names = d.column_names;
    out.target_name = d.target_name;
    out.standardization = d.standardization;
    return out;
}

}  // namespace

void Dataset::validate() const {
    if (features.rows() != targets.size()) {
        throw DimensionMismatch("dataset: " + std::to_string(features.rows()) +
                                " feature rows vs " + std::to_string(targets.size()) +
                                " targets");
    }
    if (!column_names.empty() &&
        static_cast<long>(column_names.size()) != features.cols()) {
        throw DimensionMismatch("dataset: " + std::to_string(column_names.size()) +
                                " column names for " + std::to_string(features.cols()) +
                                " columns");
    }
    if (sample_weights.size() != 0) {
        if (sample_weights.size() != features.rows()) {
            throw DimensionMismatch("dataset: " + std::to_string(sample_weights.size()) +
                                    " weights for " + std::to_string(features.rows()) +
                                    " samples");
        }
        for (long i = 0; i < sample_weights.size(); ++i) {
            if (!(sample_weights(i) > 0.0)) {
                throw ConfigError("dataset: sample weight " + std::to_string(i) +
                                  " is not positive");
            }
        }
    }
    if (!features.allFinite() || !targets.allFinite()) {
        throw ConfigError("dataset: non-finite entries");
    }
}

LoadReport load_csv(const std::string& path, const std::string& target, bool header,
                    char delimiter, const std::vector<long>& feature_columns) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    std::vector<std::string> names;
    long target_col = -1;
    long line_no = 0;

    if (header) {
        if (!std::getline(in, line)) throw ParseError("empty file: " + path, 0, 0);
        ++line_no;
        names = split_line(line, delimiter);
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (names[c] == target) target_col = static_cast<long>(c);
        }
        if (target_col < 0) throw MissingColumn("no column named '" + target + "' in " + path);
    } else {
        auto [p, ec] = std::from_chars(target.data(), target.data() + target.size(), target_col);
        if (ec != std::errc() || p != target.data() + target.size() || target_col < 0) {
            throw ConfigError("headerless csv: target must be a column index, got '" + target +
                              "'");
        }
    }

    std::vector<long> used = feature_columns;
    for (std::size_t i = 0; i < used.size(); ++i) {
        if (used[i] < 0) {
            throw ConfigError("load_csv: negative feature column index " +
                              std::to_string(used[i]));
        }
        if (used[i] == target_col) {
            throw ConfigError("load_csv: feature column " + std::to_string(used[i]) +
                              " is the target column");
        }
        for (std::size_t j = i + 1; j < used.size(); ++j) {
            if (used[i] == used[j]) {
                throw ConfigError("load_csv: duplicate feature column " +
                                  std::to_string(used[i]));
            }
        }
    }

    std::vector<std::vector<double>> rows;
    long n_cols = -1;
    long dropped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line, delimiter);
        if (n_cols < 0) {
            n_cols = static_cast<long>(cells.size());
            if (header && n_cols != static_cast<long>(names.size())) {
                throw ParseError("row width differs from header in " + path, line_no, -1);
            }
            if (target_col >= n_cols) {
                throw MissingColumn("target column " + std::to_string(target_col) +
                                    " out of range for " + std::to_string(n_cols) +
                                    " columns in " + path);
            }
            for (long c : used) {
                if (c >= n_cols) {
                    throw MissingColumn("feature column " + std::to_string(c) +
                                        " out of range for " + std::to_string(n_cols) +
                                        " columns in " + path);
                }
            }
            if (used.empty()) {
                for (long c = 0; c < n_cols; ++c) {
                    if (c != target_col) used.push_back(c);
                }
            }
        } else if (static_cast<long>(cells.size()) != n_cols) {
            throw ParseError("row width " + std::to_string(cells.size()) + " differs from " +
                                 std::to_string(n_cols) + " in " + path,
                             line_no, -1);
        }
        std::vector<double> row(used.size() + 1);
        bool missing = false;
        const auto parse_cell = [&](long c, double& out_v) {
            const std::string& cell = cells[static_cast<std::size_t>(c)];
            if (is_missing(cell)) {
                missing = true;
                return;
            }
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size()) {
                throw ParseError("unparsable cell '" + cell + "' in " + path, line_no, c);
            }
            out_v = v;
        };
        for (std::size_t k = 0; k < used.size(); ++k) parse_cell(used[k], row[k]);
        parse_cell(target_col, row[used.size()]);
        if (missing) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyInput("no data rows in " + path);

    LoadReport report;
    report.rows_dropped = dropped;
    Dataset& d = report.dataset;
    d.features.resize(static_cast<long>(rows.size()), static_cast<long>(used.size()));
    d.targets.resize(static_cast<long>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < used.size(); ++k) {
            d.features(static_cast<long>(r), static_cast<long>(k)) = rows[r][k];
        }
        d.targets(static_cast<long>(r)) = rows[r][used.size()];
    }
    if (header) {
        d.target_name = names[static_cast<std::size_t>(target_col)];
        for (long c : used) d.column_names.push_back(names[static_cast<std::size_t>(c)]);
    }
    d.validate();
    return report;
}

StandardizationState fit_standardizer(const Dataset& train) {
    train.validate();
    if (train.n_samples() == 0) throw EmptyInput("fit_standardizer: empty training set");

    const long n = train.n_samples();
    const int d = train.n_features();
    StandardizationState s;
    s.applied = true;
    s.feature_mean.resize(d);
    s.feature_std.resize(d);
    for (int c = 0; c < d; ++c) {
        const double mean = train.features.col(c).mean();
        const double var = (train.features.col(c).array() - mean).square().sum() / n;
        const double std = std::sqrt(var);
        if (std < 1e-12 * std::max(1.0, std::abs(mean))) {
            s.constant_columns.push_back(c);
            s.feature_mean(c) = 0.0;
            s.feature_std(c) = 1.0;
        } else {
            s.feature_mean(c) = mean;
            s.feature_std(c) = std;
        }
    }
    const double tmean = train.targets.mean();
    const double tvar = (train.targets.array() - tmean).square().sum() / n;
    if (std::sqrt(tvar) < 1e-12 * std::max(1.0, std::abs(tmean))) {
        s.target_mean = 0.0;
        s.target_std = 1.0;
    } else {
        s.target_mean = tmean;
        s.target_std = std::sqrt(tvar);
    }
    return s;
}

Dataset apply_standardizer(const StandardizationState& s, const Dataset& d) {
    d.validate();
    if (s.feature_mean.size() != d.features.cols()) {
        throw DimensionMismatch("standardizer fit on " + std::to_string(s.feature_mean.size()) +
                                " columns, dataset has " + std::to_string(d.features.cols()));
    }
    Dataset out = d;
    for (long c = 0; c < d.features.cols(); ++c) {
        out.features.col(c) =
            (d.features.col(c).array() - s.feature_mean(c)) / s.feature_std(c);
    }
    out.targets = (d.targets.array() - s.target_mean) / s.target_std;
    out.standardization = s;
    return out;
}

double destandardize_prediction(const StandardizationState& s, double y) {
    return y * s.target_std + s.target_mean;
}

double destandardize_variance(const StandardizationState& s, double var) {
    return var * s.target_std * s.target_std;
}

void SplitSpec::validate() const {
    if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || !(test_fraction > 0.0)) {
        throw ConfigError("split: fractions must be positive");
    }
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must sum to 1");
    }
}

SplitResult split(const Dataset& d, const SplitSpec& spec) {
    spec.validate();
    d.validate();
    const long n = d.n_samples();
    if (n < 3) throw EmptyInput("split: need at least 3 samples");

    std::vector<long> idx(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(spec.seed);
    rng.shuffle(idx);

    const long n_train = static_cast<long>(std::floor(spec.train_fraction * n));
    const long n_val = static_cast<long>(std::floor(spec.val_fraction * n));

    SplitResult out;
    out.train = take_rows(d, {idx.begin(), idx.begin() + n_train});
    out.val = take_rows(d, {idx.begin() + n_train, idx.begin() + n_train + n_val});
    out.test = take_rows(d, {idx.begin() + n_train + n_val, idx.end()});
    return out;
}

Dataset synth_cos2(double noise_sigma, const std::vector<double>& x_points,
                   std::uint64_t seed) {
    if (noise_sigma < 0.0) throw ConfigError("synth_cos2: negative noise");
    Dataset d;
    d.features.resize(static_cast<long>(x_points.size()), 1);
    d.targets.resize(static_cast<long>(x_points.size()));
    Rng rng(seed);
    for (std::size_t i = 0; i < x_points.size(); ++i) {
        const double c = std::cos(x_points[i]);
        d.features(static_cast<long>(i), 0) = x_points[i];
        d.targets(static_cast<long>(i)) = c * c + noise_sigma * rng.normal();
    }
    d.column_names = {"x"};
    d.target_name = "y";
    return d;
}

Dataset synth_hetero(long n_samples, double x_sigma, double noise_floor, double noise_slope,
                     std::uint64_t seed) {
    if (n_samples < 1) throw EmptyInput("synth_hetero: need at least one sample");
    if (!(x_sigma > 0.0) || noise_floor < 0.0 || noise_slope < 0.0) {
        throw ConfigError("synth_hetero: x_sigma must be positive, noise terms >= 0");
    }
    Dataset d;
    d.features.resize(n_samples, 1);
    d.targets.resize(n_samples);
    Rng rng(seed);
    for (long i = 0; i < n_samples; ++i) {
        const double x = x_sigma * rng.normal();
        const double sigma = noise_floor + noise_slope * std::abs(x);
        d.features(i, 0) = x;
        d.targets(i) = std::sin(2.0 * x) + 0.1 * x * x + sigma * rng.normal();
    }
    d.column_names = {"x"};
    d.target_name = "y";
    return d;
}

Dataset angle_to_cos_sin(const Dataset& d, int column) {
    d.validate();
    if (column < 0 || column >= d.n_features()) {
        throw DimensionMismatch("angle_to_cos_sin: column " + std::to_string(column) +
                                " out of range");
    }
    Dataset out = d;
    out.features.resize(d.features.rows(), d.features.cols() + 1);
    out.features.leftCols(column) = d.features.leftCols(column);
    for (long r = 0; r < d.features.rows(); ++r) {
        const double rad = d.features(r, column) * std::numbers::pi / 180.0;
        out.features(r, column) = std::cos(rad);
        out.features(r, column + 1) = std::sin(rad);
    }
    out.features.rightCols(d.features.cols() - column - 1) =
        d.features.rightCols(d.features.cols() - column - 1);
    if (!d.column_names.empty()) {
        out.column_names = d.column_names;
        const std::string base = d.column_names[static_cast<std::size_t>(column)];
        out.column_names[static_cast<std::size_t>(column)] = base + "_cos";
        out.column_names.insert(out.column_names.begin() + column + 1, base + "_sin");
    }
    out.standardization = StandardizationState{};
    return out;
}

}  // namespace prkit
