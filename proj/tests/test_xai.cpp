#include "doctest.h"
#include "prospectr/clf.hpp"
#include "prospectr/xai.hpp"

#include <cmath>

using namespace prospectr;

namespace {

// F(x) = w . x per row (no nonlinearity)
BatchScalarFn linear_model(const std::vector<float>& w, int64_t numel) {
    return [w, numel](const Tensor& x) {
        Tensor flat = reshape(x, {x.dim(0), numel});
        Tensor wt = Tensor::from_data({numel, 1}, std::vector<float>(w));
        return reshape(matmul(flat, wt), {x.dim(0)});
    };
}

BatchScalarFn constant_model(float value, int64_t numel) {
    return [value, numel](const Tensor& x) {
        Tensor flat = reshape(x, {x.dim(0), numel});
        return add_scalar(mul_scalar(sum(flat, 1), 0.0f), value);
    };
}

// sigmoid of a scaled sum, symmetric in every coordinate
BatchScalarFn symmetric_model(int64_t numel) {
    return [numel](const Tensor& x) {
        Tensor flat = reshape(x, {x.dim(0), numel});
        return reshape(sigmoid(mul_scalar(sum(flat, 1), 0.3f)), {x.dim(0)});
    };
}

}  // namespace

TEST_SUITE("xai") {

TEST_CASE("linear model: IG equals w*x exactly, any step count") {
    const Shape dims = {2, 3, 3};
    Rng rng(110);
    std::vector<float> w(18), x(18);
    for (auto& v : w) v = static_cast<float>(rng.normal());
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (int64_t steps : {8, 16, 64}) {
        Attribution attr = integrated_gradients(linear_model(w, 18), dims, x, {}, steps);
        for (size_t i = 0; i < x.size(); ++i)
            CHECK(attr.scores[i] == doctest::Approx(w[i] * x[i]).epsilon(1e-5));
        CHECK(attr.completeness_gap < 1e-5);
    }
}

TEST_CASE("constant model attributes nothing") {
    const Shape dims = {1, 4, 4};
    std::vector<float> x(16, 0.7f);
    Attribution attr = integrated_gradients(constant_model(2.5f, 16), dims, x, {}, 16);
    for (float s : attr.scores) CHECK(s == doctest::Approx(0.0f));
    CHECK(attr.completeness_gap < 1e-6);
}

TEST_CASE("input equal to baseline attributes nothing") {
    const Shape dims = {1, 3, 3};
    std::vector<float> x(9, 0.4f);
    Attribution attr = integrated_gradients(symmetric_model(9), dims, x, x, 16);
    for (float s : attr.scores) CHECK(s == 0.0f);
}

TEST_CASE("steps below 8 are rejected") {
    std::vector<float> x(4, 1.0f);
    CHECK_THROWS_AS(integrated_gradients(symmetric_model(4), {1, 2, 2}, x, {}, 4),
                    ContractError);
}

TEST_CASE("symmetric model gives equal scores to equal coordinates") {
    const Shape dims = {1, 2, 2};
    std::vector<float> x = {0.8f, 0.8f, -0.3f, 0.5f};  // coords 0 and 1 equal
    Attribution attr = integrated_gradients(symmetric_model(4), dims, x, {}, 64);
    CHECK(attr.scores[0] == doctest::Approx(attr.scores[1]).epsilon(1e-5));
}

TEST_CASE("scaling the model scales the attributions") {
    const Shape dims = {1, 2, 3};
    Rng rng(111);
    std::vector<float> x(6);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    const float alpha = 2.5f;
    BatchScalarFn base = symmetric_model(6);
    BatchScalarFn scaled = [&](const Tensor& t) { return mul_scalar(base(t), alpha); };
    Attribution a1 = integrated_gradients(base, dims, x, {}, 64);
    Attribution a2 = integrated_gradients(scaled, dims, x, {}, 64);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(a2.scores[i] == doctest::Approx(alpha * a1.scores[i]).epsilon(1e-4));
}

TEST_CASE("completeness improves with steps on a trained classifier") {
    // small trained head as the fixture model
    ClassifierConfig cfg;
    cfg.in_dim = 12;
    cfg.hidden = {8, 4};
    cfg.dropout_p = 0.2;
    cfg.batch = 8;
    cfg.max_epochs = 60;
    cfg.patience = 60;
    MlpHead mlp(cfg);
    FeatureMatrix fm;
    fm.n = 40;
    fm.dim = 12;
    std::vector<uint8_t> labels(40);
    Rng rng(112);
    fm.data.resize(40 * 12);
    for (int64_t i = 0; i < 40; ++i) {
        const bool pos = i % 2 == 0;
        labels[static_cast<size_t>(i)] = pos;
        for (int64_t d = 0; d < 12; ++d)
            fm.data[static_cast<size_t>(i * 12 + d)] =
                static_cast<float>(rng.normal() + (pos ? 0.9 : -0.9));
    }
    std::vector<int64_t> rows;
    for (int64_t i = 0; i < 40; ++i) rows.push_back(i);
    train_classifier(mlp, fm, labels, rows, {}, 4);

    const Shape dims = {3, 2, 2};  // 12 inputs viewed as a tiny window
    BatchScalarFn f = [&](const Tensor& x) {
        Rng unused(0);
        Tensor flat = reshape(x, {x.dim(0), 12});
        return reshape(mlp.forward(flat, false, false, unused), {x.dim(0)});
    };
    std::vector<float> input(fm.row(1), fm.row(1) + 12);

    double prev_gap = 1e18;
    double gap128 = 0.0, span = 0.0;
    for (int64_t steps : {16, 32, 64, 128}) {
        Attribution attr = integrated_gradients(f, dims, input, {}, steps);
        CHECK(attr.completeness_gap <= prev_gap * (1.0 + 1e-9));
        prev_gap = attr.completeness_gap;
        if (steps == 128) {
            gap128 = attr.completeness_gap;
            span = std::fabs(attr.f_input - attr.f_baseline);
            // completeness_check recomputes the same gap from fresh endpoints
            Attribution copy = attr;
            const double gap2 = completeness_check(copy, f, input);
            CHECK(gap2 == doctest::Approx(attr.completeness_gap).epsilon(1e-9));
        }
    }
    CHECK(gap128 < 0.01 * span);
}

TEST_CASE("attribution map: constant model gives a zero map") {
    MultiBandRaster raster(2, 8, 8);
    Rng rng(113);
    for (auto& v : raster.data) v = static_cast<float>(rng.normal());
    BatchScalarFn f = constant_model(1.0f, 2 * 4 * 4);
    std::vector<int64_t> pixels = {0, 9, 27};
    MultiBandRaster amap = attribution_map(f, raster, 4, 0, pixels, 16);
    for (int64_t p : pixels)
        CHECK(amap.data[static_cast<size_t>(p)] == doctest::Approx(0.0f));
    CHECK(std::isnan(amap.data[1]));  // not attributed
}

TEST_CASE("attribution map: planted informative band dominates") {
    // labels depend on band 0 alone; model trained on raw windows
    const int64_t m = 3, w = 4, dim = m * w * w;
    MultiBandRaster raster(m, 32, 32);
    Rng rng(114);
    for (auto& v : raster.data) v = static_cast<float>(rng.normal());

    FeatureMatrix fm;
    std::vector<uint8_t> labels;
    std::vector<int64_t> centers;
    for (int64_t i = 0; i < 1024; ++i) centers.push_back(i);  // every pixel
    fm.data = extract_windows(raster, centers, w);
    fm.n = 1024;
    fm.dim = dim;
    for (int64_t i = 0; i < 1024; ++i) {
        double band0 = 0.0;
        for (int64_t j = 0; j < w * w; ++j)
            band0 += fm.data[static_cast<size_t>(i * dim + j)];
        labels.push_back(band0 > 0 ? 1 : 0);
    }
    ClassifierConfig cfg;
    cfg.in_dim = dim;
    cfg.hidden = {8, 4};
    cfg.batch = 64;
    cfg.max_epochs = 60;
    cfg.patience = 60;
    MlpHead mlp(cfg);
    std::vector<int64_t> rows;
    for (int64_t i = 0; i < 1024; ++i) rows.push_back(i);
    train_classifier(mlp, fm, labels, rows, {}, 9);

    BatchScalarFn f = [&](const Tensor& x) {
        Rng unused(0);
        Tensor flat = reshape(x, {x.dim(0), dim});
        return reshape(mlp.forward(flat, false, false, unused), {x.dim(0)});
    };
    // mean absolute per-band attribution over a few pixels
    std::vector<int64_t> pixels = {17, 300, 700};
    double band_abs[3] = {0, 0, 0};
    for (int64_t p : pixels) {
        Sample s = window_at(raster, p / 32, p % 32, w);
        Attribution attr = integrated_gradients(f, {m, w, w}, s.window, {}, 32);
        for (int64_t b = 0; b < m; ++b) {
            double acc = 0.0;
            for (int64_t j = 0; j < w * w; ++j)
                acc += std::fabs(attr.scores[static_cast<size_t>(b * w * w + j)]);
            band_abs[b] += acc;
        }
        // the per-pixel attribution-map value restates completeness per band
        double total = 0.0;
        for (float v : attr.scores) total += v;
        CHECK(std::fabs(total - (attr.f_input - attr.f_baseline)) ==
              doctest::Approx(attr.completeness_gap).epsilon(1e-6));
    }
    CHECK(band_abs[0] > 5.0 * band_abs[1]);
    CHECK(band_abs[0] > 5.0 * band_abs[2]);
}

TEST_CASE("attribution json dump carries the contract fields") {
    const Shape dims = {1, 2, 2};
    std::vector<float> x = {1.0f, 2.0f, 3.0f, 4.0f};
    Attribution attr = integrated_gradients(symmetric_model(4), dims, x, {}, 16);
    const std::string j = attr.to_json();
    CHECK(j.find("completeness_gap") != std::string::npos);
    CHECK(j.find("baseline_crc32") != std::string::npos);
    CHECK(j.find("steps") != std::string::npos);
}

}  // TEST_SUITE
