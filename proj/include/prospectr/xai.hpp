#pragma once

// Integrated Gradients attribution: midpoint-rule path integral from a
// baseline (default zero tensor) to the input, with the completeness gap
// reported on every attribution.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prospectr/raster.hpp"
#include "prospectr/tensor.hpp"

namespace prospectr {

struct Attribution {
    std::vector<float> scores;    // signed, same layout as the input
    std::vector<float> baseline;
    Shape dims;                   // e.g. {m, w, w}
    int64_t steps = 0;
    double completeness_gap = 0.0;
    double f_input = 0.0;
    double f_baseline = 0.0;

    // scores, gap, steps, baseline hash
    std::string to_json() const;
};

// Row-wise scalar model: maps a [B, ...dims] batch to [B] outputs where each
// row's output depends only on that row.
using BatchScalarFn = std::function<Tensor(const Tensor&)>;

// IG_j = (x_j - b_j) * (1/steps) * sum_k dF/dx_j at b + (k-0.5)/steps * (x-b).
// Gradients are deterministic (callers run the model with dropout off).
// Empty baseline means the zero tensor. steps >= 8.
Attribution integrated_gradients(const BatchScalarFn& f, const Shape& dims,
                                 const std::vector<float>& input,
                                 const std::vector<float>& baseline, int64_t steps);

// |sum_j IG_j - (F(x) - F(baseline))| with both endpoints re-evaluated
// through the model; the result is recorded on the attribution.
double completeness_check(Attribution& attr, const BatchScalarFn& f,
                          const std::vector<float>& input);

// Per evaluated pixel: attribution of band `band` summed over the window
// footprint, reverse-indexed onto the grid. Non-evaluated pixels are NaN.
MultiBandRaster attribution_map(const BatchScalarFn& f, const MultiBandRaster& raster,
                                int64_t window, int64_t band,
                                const std::vector<int64_t>& pixels, int64_t steps);

}  // namespace prospectr
