#pragma once

#include "prkit/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace prkit {

/// Per-column statistics recorded when a dataset is standardized, so
/// predictions and variances can be mapped back to original units.
struct StandardizationState {
    bool applied = false;
    Vector feature_mean;
    Vector feature_std;                 // 1.0 for constant columns
    std::vector<int> constant_columns;  // flagged, passed through unscaled
    double target_mean = 0.0;
    double target_std = 1.0;
};

struct Dataset {
    Matrix features;  // N x d
    Vector targets;   // N
    std::vector<std::string> column_names;
    std::string target_name = "y";
    StandardizationState standardization;
    Vector sample_weights;  // empty = all ones

    long n_samples() const { return features.rows(); }
    int n_features() const { return static_cast<int>(features.cols()); }
    /// Weight of sample i (1.0 when no weights are set).
    double weight(long i) const {
        return sample_weights.size() == 0 ? 1.0 : sample_weights(i);
    }
    /// Throws unless row counts agree and weights (if any) are positive.
    void validate() const;
};

struct LoadReport {
    Dataset dataset;
    long rows_dropped = 0;  // rows with missing cells, removed
};

/// Parse a delimited table of numbers. `target` names the target column when
/// there is a header, otherwise it is a 0-based column index in string form.
/// Rows with missing cells (empty, "NA", or "?") are dropped and counted; any
/// other unparsable cell is an error naming its position.
///
/// `delimiter` is a single separator character; the special value ' ' splits
/// on runs of spaces and tabs (the layout of the common benchmark-table dumps).
/// `feature_columns`, when non-empty, selects raw file columns (0-based) to
/// keep as features in the given order; other columns are ignored entirely,
/// so neither missing markers nor junk text in them drop or fail a row.
LoadReport load_csv(const std::string& path, const std::string& target, bool header,
                    char delimiter = ',', const std::vector<long>& feature_columns = {});

/// Statistics from the training split only.
StandardizationState fit_standardizer(const Dataset& train);

Dataset apply_standardizer(const StandardizationState& s, const Dataset& d);

/// Map a standardized-space prediction / variance back to original units.
double destandardize_prediction(const StandardizationState& s, double y);
double destandardize_variance(const StandardizationState& s, double var);

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    Dataset train, val, test;
};

/// Seeded permutation, then contiguous slices of floor(fraction*N) rows for
/// train and val; test takes the remainder.
SplitResult split(const Dataset& d, const SplitSpec& spec);

/// y = cos^2(x) + N(0, sigma^2) at the given points.
Dataset synth_cos2(double noise_sigma, const std::vector<double>& x_points,
                   std::uint64_t seed);

/// One-feature regression data with input-dependent noise: x ~ N(0, x_sigma^2),
/// y = sin(2x) + 0.1 x^2 + (noise_floor + noise_slope |x|) eps. The tails are
/// both sparsely sampled and noisier, so per-sample error genuinely varies.
Dataset synth_hetero(long n_samples, double x_sigma, double noise_floor, double noise_slope,
                     std::uint64_t seed);

/// Replace a degree-valued column with (cos, sin) of the angle, the unit
/// circle encoding for cyclic variables like wind direction.
Dataset angle_to_cos_sin(const Dataset& d, int column);

}  // namespace prkit
