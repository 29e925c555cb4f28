#include "doctest.h"
#include "prospectr/synth.hpp"

#include <cmath>

using namespace prospectr;

namespace {

// row-direction autocorrelation at a given lag, mean-removed
double autocorr_at_lag(const std::vector<float>& f, int64_t rows, int64_t cols, int64_t lag) {
    double mu = 0.0;
    for (float v : f) mu += v;
    mu /= static_cast<double>(f.size());
    double num = 0.0, den = 0.0;
    int64_t n = 0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c + lag < cols; ++c) {
            const double a = f[static_cast<size_t>(r * cols + c)] - mu;
            const double b = f[static_cast<size_t>(r * cols + c + lag)] - mu;
            num += a * b;
            ++n;
        }
    for (float v : f) den += (v - mu) * (v - mu);
    den /= static_cast<double>(f.size());
    return num / static_cast<double>(n) / den;
}

WorldSpec small_spec(uint64_t seed) {
    WorldSpec s;
    s.rows = 48;
    s.cols = 48;
    s.n_layers = 8;
    s.n_deposits = 12;
    s.n_redundant = 2;
    s.rule.layers = {0, 1, 2};
    s.rule.weights = {1.0, 1.0, 1.0};
    s.seed = seed;
    return s;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("same seed gives a bit-identical world") {
    auto w1 = generate_world(small_spec(5));
    auto w2 = generate_world(small_spec(5));
    CHECK(w1.raster.data == w2.raster.data);
    CHECK(w1.truth.data == w2.truth.data);
    REQUIRE(w1.records.size() == w2.records.size());
    for (size_t i = 0; i < w1.records.size(); ++i) {
        CHECK(w1.records[i].x == w2.records[i].x);
        CHECK(w1.records[i].y == w2.records[i].y);
    }
}

TEST_CASE("deposit count honored and coordinates land in extent") {
    auto w = generate_world(small_spec(7));
    CHECK(w.records.size() == 12);
    for (const auto& r : w.records) {
        int64_t row, col;
        w.raster.transform.map_to_pixel(r.x, r.y, row, col);
        CHECK(row >= 0);
        CHECK(row < 48);
        CHECK(col >= 0);
        CHECK(col < 48);
    }
}

TEST_CASE("layer autocorrelation at the correlation length sits in the sanity band") {
    double acc = 0.0;
    const int64_t ell = 6;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto f = gaussian_random_field(64, 64, static_cast<double>(ell), rng);
        acc += autocorr_at_lag(f, 64, 64, ell);
    }
    acc /= 20.0;
    // Gaussian covariance predicts exp(-0.5) ~ 0.61 at lag = ell
    CHECK(acc > 0.2);
    CHECK(acc < 0.8);
}

TEST_CASE("truth depends only on rule layers") {
    auto spec = small_spec(11);
    auto w = generate_world(spec);
    // permute the non-rule bands and recompute: truth must not move
    MultiBandRaster permuted = w.raster;
    const auto rule = spec.effective_rule();
    std::vector<float> tmp(static_cast<size_t>(permuted.plane()));
    // swap bands 4 and 7 (both non-rule)
    std::copy(permuted.plane_data(4), permuted.plane_data(4) + permuted.plane(), tmp.begin());
    std::copy(permuted.plane_data(7), permuted.plane_data(7) + permuted.plane(),
              permuted.plane_data(4));
    std::copy(tmp.begin(), tmp.end(), permuted.plane_data(7));
    auto truth2 = truth_from_raster(permuted, rule);
    CHECK(truth2.data == w.truth.data);
}

TEST_CASE("deposits concentrate where true prospectivity is high") {
    // sign test over 100 seeds: P(Bin(100, 0.5) >= 63) < 0.01
    int wins = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        auto spec = small_spec(seed);
        auto w = generate_world(spec);
        double map_mean = 0.0;
        for (float v : w.truth.data) map_mean += v;
        map_mean /= static_cast<double>(w.truth.data.size());
        double dep_mean = 0.0;
        for (const auto& rec : w.records) {
            int64_t r, c;
            w.raster.transform.map_to_pixel(rec.x, rec.y, r, c);
            dep_mean += w.truth.at(0, r, c);
        }
        dep_mean /= static_cast<double>(w.records.size());
        if (dep_mean > map_mean) ++wins;
    }
    CHECK(wins >= 63);
}

TEST_CASE("degrade: zero fraction is identity") {
    std::vector<float> win(2 * 4 * 3 * 3, 1.5f);
    auto orig = win;
    Rng rng(3);
    auto mask = degrade_features(win, 2, 4, 3, 0.0, rng);
    CHECK(win == orig);
    for (uint8_t m : mask) CHECK(m == 0);
}

TEST_CASE("degrade: exactly half the layers zeroed per sample") {
    const int64_t n = 10, m = 24, w = 4;
    std::vector<float> win(static_cast<size_t>(n * m * w * w), 2.0f);
    Rng rng(4);
    auto mask = degrade_features(win, n, m, w, 0.5, rng);
    for (int64_t i = 0; i < n; ++i) {
        int dropped = 0;
        for (int64_t l = 0; l < m; ++l) {
            const bool is_dropped = mask[static_cast<size_t>(i * m + l)] != 0;
            if (is_dropped) ++dropped;
            for (int64_t p = 0; p < w * w; ++p) {
                const float v = win[static_cast<size_t>((i * m + l) * w * w + p)];
                CHECK(v == (is_dropped ? 0.0f : 2.0f));
            }
        }
        CHECK(dropped == 12);
    }
}

TEST_CASE("degrade rejects bad fractions") {
    std::vector<float> win(16, 1.0f);
    Rng rng(5);
    CHECK_THROWS_AS(degrade_features(win, 1, 4, 2, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(degrade_features(win, 1, 4, 2, -0.1, rng), ConfigError);
}

TEST_CASE("spec validation") {
    WorldSpec s = small_spec(0);
    s.n_deposits = 5000;
    CHECK_THROWS_AS(generate_world(s), ConfigError);
    s = small_spec(0);
    s.rule.layers = {99};
    s.rule.weights = {1.0};
    CHECK_THROWS_AS(generate_world(s), ConfigError);
}

}  // TEST_SUITE
