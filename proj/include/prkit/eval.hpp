#pragma once

#include "prkit/dataset.hpp"
#include "prkit/linalg.hpp"

#include <array>
#include <string>
#include <vector>

namespace prkit {

double rmse(const Vector& predictions, const Vector& targets);

/// Mean Gaussian negative log likelihood:
/// mean_i 1/2 ((y_i - mu_i)^2 / var_i + log var_i + log 2 pi).
double nll(const Vector& predictions, const Vector& variances, const Vector& targets);

struct CalibrationBin {
    double mean_variance = 0.0;
    double mean_squared_error = 0.0;
    long count = 0;
};

/// Samples sorted by predicted variance (ties by index) and cut into bins of
/// bin_size; the last bin may be short and enters the objective weighted by
/// its fill fraction. log_residual sums the squared log-log deviations of the
/// bin averages from the mean_squared_error = mean_variance diagonal.
struct CalibrationCurve {
    std::vector<CalibrationBin> bins;
    double log_residual = 0.0;
};

CalibrationCurve binned_calibration(const Vector& predictions, const Vector& variances,
                                    const Vector& targets, long bin_size);

/// Distribution of |error| when the error is Gaussian with scale sigma:
/// p(x) = (x / sigma^2) exp(-x^2 / 2 sigma^2) on x >= 0 for a squared-error
/// axis plotted on the error scale. mode = sigma; band k covers the
/// equal-density interval holding the two-sided k-sigma Gaussian mass.
struct SigmaBands {
    double sigma = 0.0;
    double mode = 0.0;
    std::array<double, 3> lower{};  // k = 1, 2, 3
    std::array<double, 3> upper{};
};

std::vector<SigmaBands> confidence_bands(const std::vector<double>& sigmas);

struct OodSplitResult {
    Dataset in_domain;       // feature > threshold
    Dataset out_of_domain;   // feature <= threshold
    bool empty_partition = false;
};

/// Deterministic partition on one (already standardized) feature column.
OodSplitResult ood_split(const Dataset& d, int feature, double threshold);

struct UncertaintyReport {
    Vector predictions;
    Vector targets;
    Vector variances;
    double rmse_value = 0.0;
    double nll_value = 0.0;
    CalibrationCurve curve;
    std::string split_tag = "test";
};

UncertaintyReport make_report(const Vector& predictions, const Vector& variances,
                              const Vector& targets, long bin_size,
                              const std::string& split_tag);

/// Per-sample rows: index,prediction,target,abs_error,variance.
void save_report_csv(const std::string& path, const UncertaintyReport& report);
/// Metrics, the binned curve, and confidence bands at each bin's
/// root-mean-variance; everything a parity plot needs.
void save_report_json(const std::string& path, const UncertaintyReport& report);

}  // namespace prkit
