#include "prospectr/xai.hpp"

#include <zlib.h>

#include <cmath>

#include "json.hpp"

namespace prospectr {

namespace {

// rows of a [B, ...dims] batch evaluated through f -> scalar per row
std::vector<double> eval_rows(const BatchScalarFn& f, const Shape& dims,
                              const std::vector<float>& rows, int64_t n) {
    NoGradGuard ng;
    Shape bshape;
    bshape.push_back(n);
    for (int64_t d : dims) bshape.push_back(d);
    Tensor x = Tensor::from_data(bshape, std::vector<float>(rows));
    Tensor y = f(x);
    if (y.numel() != n) throw ShapeError("model must return one scalar per row");
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = y.data()[static_cast<size_t>(i)];
    return out;
}

}  // namespace

Attribution integrated_gradients(const BatchScalarFn& f, const Shape& dims,
                                 const std::vector<float>& input,
                                 const std::vector<float>& baseline_in, int64_t steps) {
    if (steps < 8) throw ContractError("integrated_gradients: steps must be >= 8");
    const int64_t numel = shape_numel(dims);
    if (static_cast<int64_t>(input.size()) != numel)
        throw ShapeError("integrated_gradients: input size mismatch");
    std::vector<float> baseline = baseline_in;
    if (baseline.empty()) baseline.assign(static_cast<size_t>(numel), 0.0f);
    if (baseline.size() != input.size())
        throw ShapeError("integrated_gradients: baseline size mismatch");

    // average gradient along the midpoint path, in step chunks to bound the
    // tape footprint
    std::vector<double> grad_acc(static_cast<size_t>(numel), 0.0);
    const int64_t chunk = 32;
    for (int64_t s0 = 0; s0 < steps; s0 += chunk) {
        const int64_t bsz = std::min(chunk, steps - s0);
        Shape bshape;
        bshape.push_back(bsz);
        for (int64_t d : dims) bshape.push_back(d);
        std::vector<float> rows(static_cast<size_t>(bsz * numel));
        for (int64_t k = 0; k < bsz; ++k) {
            const double alpha =
                (static_cast<double>(s0 + k) + 0.5) / static_cast<double>(steps);
            for (int64_t j = 0; j < numel; ++j)
                rows[static_cast<size_t>(k * numel + j)] = static_cast<float>(
                    baseline[static_cast<size_t>(j)] +
                    alpha * (input[static_cast<size_t>(j)] - baseline[static_cast<size_t>(j)]));
        }
        Tensor x = Tensor::from_data(bshape, std::move(rows), true);
        Tensor y = f(x);
        if (y.numel() != bsz) throw ShapeError("model must return one scalar per row");
        // rows are independent, so the gradient of the sum is each row's own
        sum(reshape(y, {bsz})).backward();
        const auto& g = x.grad();
        for (int64_t k = 0; k < bsz; ++k)
            for (int64_t j = 0; j < numel; ++j) {
                const float gv = g[static_cast<size_t>(k * numel + j)];
                if (!std::isfinite(gv))
                    throw NumericError("integrated_gradients: non-finite gradient at step " +
                                       std::to_string(s0 + k));
                grad_acc[static_cast<size_t>(j)] += static_cast<double>(gv);
            }
    }

    Attribution attr;
    attr.dims = dims;
    attr.steps = steps;
    attr.baseline = baseline;
    attr.scores.resize(static_cast<size_t>(numel));
    for (int64_t j = 0; j < numel; ++j)
        attr.scores[static_cast<size_t>(j)] = static_cast<float>(
            (static_cast<double>(input[static_cast<size_t>(j)]) -
             static_cast<double>(baseline[static_cast<size_t>(j)])) *
            grad_acc[static_cast<size_t>(j)] / static_cast<double>(steps));

    // completeness bookkeeping
    std::vector<float> both(input);
    both.insert(both.end(), baseline.begin(), baseline.end());
    const auto fv = eval_rows(f, dims, both, 2);
    attr.f_input = fv[0];
    attr.f_baseline = fv[1];
    double total = 0.0;
    for (float v : attr.scores) total += static_cast<double>(v);
    attr.completeness_gap = std::fabs(total - (attr.f_input - attr.f_baseline));
    return attr;
}

double completeness_check(Attribution& attr, const BatchScalarFn& f,
                          const std::vector<float>& input) {
    if (input.size() != attr.baseline.size())
        throw ShapeError("completeness_check: input size mismatch");
    std::vector<float> both(input);
    both.insert(both.end(), attr.baseline.begin(), attr.baseline.end());
    const auto fv = eval_rows(f, attr.dims, both, 2);
    attr.f_input = fv[0];
    attr.f_baseline = fv[1];
    double total = 0.0;
    for (float v : attr.scores) total += static_cast<double>(v);
    attr.completeness_gap = std::fabs(total - (attr.f_input - attr.f_baseline));
    return attr.completeness_gap;
}

std::string Attribution::to_json() const {
    nlohmann::json j;
    j["dims"] = dims;
    j["steps"] = steps;
    j["completeness_gap"] = completeness_gap;
    j["f_input"] = f_input;
    j["f_baseline"] = f_baseline;
    j["baseline_crc32"] = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(baseline.data()),
              static_cast<uInt>(baseline.size() * 4)));
    j["scores"] = scores;
    return j.dump();
}

MultiBandRaster attribution_map(const BatchScalarFn& f, const MultiBandRaster& raster,
                                int64_t window, int64_t band,
                                const std::vector<int64_t>& pixels, int64_t steps) {
    if (band < 0 || band >= raster.bands)
        throw ShapeError("attribution_map: band out of range");
    MultiBandRaster out(1, raster.rows, raster.cols);
    out.band_names = {"ig_" + raster.band_names[static_cast<size_t>(band)]};
    out.transform = raster.transform;
    std::fill(out.data.begin(), out.data.end(), std::numeric_limits<float>::quiet_NaN());

    const Shape dims = {raster.bands, window, window};
    for (int64_t pixel : pixels) {
        Sample s = window_at(raster, pixel / raster.cols, pixel % raster.cols, window);
        Attribution attr = integrated_gradients(f, dims, s.window, {}, steps);
        double acc = 0.0;
        const int64_t plane = window * window;
        for (int64_t i = 0; i < plane; ++i)
            acc += static_cast<double>(attr.scores[static_cast<size_t>(band * plane + i)]);
        out.data[static_cast<size_t>(pixel)] = static_cast<float>(acc);
    }
    return out;
}

}  // namespace prospectr
