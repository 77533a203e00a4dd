#include "prkit/eval.hpp"

#include "prkit/errors.hpp"
#include "prkit/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace prkit {

namespace {

void check_lengths(const Vector& a, const Vector& b, const char* where) {
    if (a.size() == 0) throw EmptyInput(std::string(where) + ": no samples");
    if (a.size() != b.size()) {
        throw DimensionMismatch(std::string(where) + ": length mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
    }
}

/// Density of the folded error distribution on the unit scale: u exp(-u^2/2).
double folded_density(double u) { return u * std::exp(-0.5 * u * u); }

/// Upper equal-density partner of a in (0, 1): the b > 1 with the same density.
double upper_density_match(double a) {
    const double d = folded_density(a);
    double lo = 1.0;
    double hi = 2.0;
    while (folded_density(hi) > d) {
        hi *= 2.0;
        if (hi > 1e6) throw RootFindFailure("confidence band density match", lo, hi);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (folded_density(mid) > d ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Probability mass of the equal-density interval anchored at lower bound a.
double band_mass(double a, double& b_out) {
    b_out = upper_density_match(a);
    return std::exp(-0.5 * a * a) - std::exp(-0.5 * b_out * b_out);
}

}  // namespace

double rmse(const Vector& predictions, const Vector& targets) {
    check_lengths(predictions, targets, "rmse");
    return std::sqrt((predictions - targets).squaredNorm() / predictions.size());
}

double nll(const Vector& predictions, const Vector& variances, const Vector& targets) {
    check_lengths(predictions, targets, "nll");
    check_lengths(predictions, variances, "nll");
    double acc = 0.0;
    for (long i = 0; i < predictions.size(); ++i) {
        const double v = variances(i);
        if (!(v > 0.0)) {
            throw NonPositiveVariance("nll: variance " + std::to_string(v) + " at sample " +
                                      std::to_string(i));
        }
        const double r = targets(i) - predictions(i);
        acc += 0.5 * (r * r / v + std::log(v) + std::log(2.0 * std::numbers::pi));
    }
    return acc / predictions.size();
}

CalibrationCurve binned_calibration(const Vector& predictions, const Vector& variances,
                                    const Vector& targets, long bin_size) {
    check_lengths(predictions, targets, "binned_calibration");
    check_lengths(predictions, variances, "binned_calibration");
    if (bin_size < 1) throw ConfigError("binned_calibration: bin_size must be positive");
    const long n = predictions.size();
    if (n < bin_size) {
        throw ConfigError("binned_calibration: " + std::to_string(n) +
                          " samples cannot fill a bin of " + std::to_string(bin_size));
    }
    for (long i = 0; i < n; ++i) {
        if (!(variances(i) > 0.0)) {
            throw NonPositiveVariance("binned_calibration: variance at sample " +
                                      std::to_string(i));
        }
    }

    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return variances(a) < variances(b); });

    CalibrationCurve curve;
    for (long start = 0; start < n; start += bin_size) {
        const long count = std::min(bin_size, n - start);
        CalibrationBin bin;
        bin.count = count;
        for (long k = 0; k < count; ++k) {
            const long i = order[start + k];
            const double r = targets(i) - predictions(i);
            bin.mean_variance += variances(i);
            bin.mean_squared_error += r * r;
        }
        bin.mean_variance /= count;
        bin.mean_squared_error /= count;
        const double dev = std::log(bin.mean_squared_error) - std::log(bin.mean_variance);
        curve.log_residual += (static_cast<double>(count) / bin_size) * dev * dev;
        curve.bins.push_back(bin);
    }
    return curve;
}

std::vector<SigmaBands> confidence_bands(const std::vector<double>& sigmas) {
    // Solve once on the unit scale; the family is exactly scale-invariant.
    std::array<double, 3> unit_lower{};
    std::array<double, 3> unit_upper{};
    for (int k = 1; k <= 3; ++k) {
        const double target = std::erf(k / std::sqrt(2.0));
        double lo = 1e-8;
        double hi = 1.0 - 1e-12;
        double b = 0.0;
        if (band_mass(lo, b) < target) {
            throw RootFindFailure("confidence band mass bracket", lo, hi);
        }
        while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            (band_mass(mid, b) > target ? lo : hi) = mid;
        }
        const double a = 0.5 * (lo + hi);
        band_mass(a, b);
        unit_lower[k - 1] = a;
        unit_upper[k - 1] = b;
    }

    std::vector<SigmaBands> out;
    out.reserve(sigmas.size());
    for (double s : sigmas) {
        if (!(s > 0.0)) throw ConfigError("confidence_bands: sigma must be positive");
        SigmaBands bands;
        bands.sigma = s;
        bands.mode = s;
        for (int i = 0; i < 3; ++i) {
            bands.lower[i] = s * unit_lower[i];
            bands.upper[i] = s * unit_upper[i];
        }
        out.push_back(bands);
    }
    return out;
}

OodSplitResult ood_split(const Dataset& d, int feature, double threshold) {
    d.validate();
    if (feature < 0 || feature >= d.n_features()) {
        throw ConfigError("ood_split: feature index " + std::to_string(feature) +
                          " out of range for " + std::to_string(d.n_features()) + " columns");
    }

    std::vector<long> in_rows, out_rows;
    for (long i = 0; i < d.n_samples(); ++i) {
        (d.features(i, feature) > threshold ? in_rows : out_rows).push_back(i);
    }

    auto take = [&](const std::vector<long>& rows) {
        Dataset part;
        part.features.resize(rows.size(), d.n_features());
        part.targets.resize(rows.size());
        if (d.sample_weights.size() > 0) part.sample_weights.resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            part.features.row(k) = d.features.row(rows[k]);
            part.targets(k) = d.targets(rows[k]);
            if (d.sample_weights.size() > 0) part.sample_weights(k) = d.sample_weights(rows[k]);
        }
        part.column_names = d.column_names;
        part.target_name = d.target_name;
        part.standardization = d.standardization;
        return part;
    };

    OodSplitResult result;
    result.in_domain = take(in_rows);
    result.out_of_domain = take(out_rows);
    result.empty_partition = in_rows.empty() || out_rows.empty();
    return result;
}

UncertaintyReport make_report(const Vector& predictions, const Vector& variances,
                              const Vector& targets, long bin_size,
                              const std::string& split_tag) {
    UncertaintyReport report;
    report.predictions = predictions;
    report.targets = targets;
    report.variances = variances;
    report.rmse_value = rmse(predictions, targets);
    report.nll_value = nll(predictions, variances, targets);
    report.curve = binned_calibration(predictions, variances, targets, bin_size);
    report.split_tag = split_tag;
    return report;
}

void save_report_csv(const std::string& path, const UncertaintyReport& report) {
    std::string csv = "index,prediction,target,abs_error,variance\n";
    for (long i = 0; i < report.predictions.size(); ++i) {
        csv += std::to_string(i);
        csv += ',';
        csv += format_double(report.predictions(i));
        csv += ',';
        csv += format_double(report.targets(i));
        csv += ',';
        csv += format_double(std::abs(report.targets(i) - report.predictions(i)));
        csv += ',';
        csv += format_double(report.variances(i));
        csv += '\n';
    }
    write_text_file(path, csv);
}

void save_report_json(const std::string& path, const UncertaintyReport& report) {
    nlohmann::json bins = nlohmann::json::array();
    std::vector<double> bin_sigmas;
    for (const auto& b : report.curve.bins) {
        bins.push_back({{"mean_variance", b.mean_variance},
                        {"mean_squared_error", b.mean_squared_error},
                        {"count", b.count}});
        bin_sigmas.push_back(std::sqrt(b.mean_variance));
    }
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& sb : confidence_bands(bin_sigmas)) {
        bands.push_back({{"sigma", sb.sigma},
                         {"mode", sb.mode},
                         {"lower", sb.lower},
                         {"upper", sb.upper}});
    }
    save_json(path, {{"split", report.split_tag},
                     {"n_samples", report.predictions.size()},
                     {"rmse", report.rmse_value},
                     {"nll", report.nll_value},
                     {"log_residual", report.curve.log_residual},
                     {"bins", bins},
                     {"bands", bands}});
}

}  // namespace prkit
