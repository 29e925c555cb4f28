#pragma once

// Desk-scale synthetic world: correlated Gaussian random field layers, a
// planted deposit rule, and deposit records sampled from the true
// prospectivity. Stands in for the proprietary continental stack so the
// whole pipeline can run end to end.

#include <cstdint>
#include <vector>

#include "prospectr/raster.hpp"
#include "prospectr/rng.hpp"

namespace prospectr {

struct DepositRule {
    std::vector<int64_t> layers;   // indices into the raster bands
    std::vector<double> weights;   // same length as layers
    double bias = -3.0;            // logit offset; negative keeps positives rare
    double sharpness = 3.0;        // logit scale
};

struct WorldSpec {
    int64_t rows = 64;
    int64_t cols = 64;
    int64_t n_layers = 24;
    // per layer; a single entry broadcasts to all layers
    std::vector<double> correlation_length = {8.0};
    DepositRule rule;  // empty layers -> default rule over the first 8 layers
    int64_t n_deposits = 40;
    double gamma = 4.0;  // deposit sampling concentration, p^gamma
    // layers [R, R+n_redundant) echo rule layers with correlation rho, giving
    // the encoder real cross-channel structure to learn
    int64_t n_redundant = 8;
    double redundancy_rho = 0.7;
    uint64_t seed = 0;

    DepositRule effective_rule() const;
    double corr_length(int64_t layer) const;
    void validate() const;
};

struct World {
    MultiBandRaster raster;  // n_layers bands, standardized fields
    MultiBandRaster truth;   // 1 band, true prospectivity in [0,1]
    std::vector<DepositRecord> records;
};

// Unit-variance Gaussian random field by random-phase spectral synthesis:
// sum of K cosines with wavevectors drawn from the spectral density of a
// Gaussian covariance with the given correlation length.
std::vector<float> gaussian_random_field(int64_t rows, int64_t cols, double corr_length,
                                         Rng& rng, int64_t n_modes = 256);

// sigmoid(sharpness * weighted-sum-of-rule-layers / ||w|| + bias)
MultiBandRaster truth_from_raster(const MultiBandRaster& raster, const DepositRule& rule);

World generate_world(const WorldSpec& spec);

// Zeroes round(drop_fraction*m) whole layers per sample (0 is the
// standardized mean, i.e. "no signal"). windows is a flat [n, m, w, w]
// buffer. Returns the per-sample dropped-layer mask [n, m], 1 = dropped.
std::vector<uint8_t> degrade_features(std::vector<float>& windows, int64_t n, int64_t m,
                                      int64_t w, double drop_fraction, Rng& rng);

}  // namespace prospectr
