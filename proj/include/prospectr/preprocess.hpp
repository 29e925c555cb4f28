#pragma once

// Per-band cleanup: Tukey-fence outlier removal, inverse-distance-weighted
// imputation, Gaussian smoothing of imputed pixels, and z-score
// standardization. Missing values are NaN; bands are independent.

#include <cstdint>
#include <string>
#include <vector>

#include "prospectr/raster.hpp"

namespace prospectr {

struct PreprocessConfig {
    double tukey_k = 1.5;
    double idw_power = 2.0;
    int64_t idw_radius = 5;  // pixels
    double smooth_sigma = 1.0;
    bool operator==(const PreprocessConfig&) const = default;
};

struct Grid {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> v;

    Grid() = default;
    Grid(int64_t r, int64_t c, float fill = 0.0f)
        : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

    float at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
    float& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
};

// Quartile by linear interpolation between order statistics (q in [0,1]).
double quantile_linear(std::vector<double> sorted_values, double q);

// Values outside [Q1 - k*IQR, Q3 + k*IQR] become NaN. Quartiles are computed
// over finite values only. Never removes anything when IQR = 0.
Grid tukey_filter(const Grid& band, double k, int64_t* n_removed = nullptr);

// Fills every NaN from finite neighbors within `radius` (Euclidean), weights
// d^-power; falls back to the band median when no neighbor is in range.
// Originally-finite pixels are returned bit-unchanged.
Grid idw_impute(const Grid& band, double power, int64_t radius, int64_t* n_imputed = nullptr);

// Gaussian blur, kernel truncated at 3*sigma and renormalized at the edges.
// sigma = 0 is the identity.
Grid smooth(const Grid& band, double sigma);

// z-scores with the population standard deviation, over finite pixels.
Grid standardize(const Grid& band);

struct BandReport {
    std::string name;
    int64_t outliers_removed = 0;
    int64_t imputed = 0;
    bool dropped = false;
    std::string drop_reason;
};

struct PreprocessReport {
    std::vector<BandReport> bands;
    int64_t bands_in = 0;
    int64_t bands_out = 0;
    std::string to_json() const;
};

// Per band: tukey -> idw -> smooth (imputed pixels only) -> standardize.
// Zero-variance bands are dropped with a warning in the report. nodata
// pixels stay NaN and are excluded from every statistic.
MultiBandRaster run_pipeline(const MultiBandRaster& raster, const PreprocessConfig& cfg,
                             PreprocessReport* report = nullptr);

}  // namespace prospectr
