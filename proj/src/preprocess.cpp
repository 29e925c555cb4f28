#include "prospectr/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "prospectr/parallel.hpp"

namespace prospectr {

double quantile_linear(std::vector<double> sorted_values, double q) {
    if (sorted_values.empty()) throw ContractError("quantile of empty set");
    std::sort(sorted_values.begin(), sorted_values.end());
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

Grid tukey_filter(const Grid& band, double k, int64_t* n_removed) {
    if (k <= 0) throw ContractError("tukey_filter: k must be positive");
    std::vector<double> finite;
    finite.reserve(band.v.size());
    for (float x : band.v)
        if (std::isfinite(x)) finite.push_back(static_cast<double>(x));
    if (finite.empty()) throw DataError("tukey_filter: band is entirely missing");
    if (finite.size() < 4) throw ContractError("tukey_filter: needs at least 4 finite values");

    const double q1 = quantile_linear(finite, 0.25);
    const double q3 = quantile_linear(finite, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - k * iqr;
    const double hi = q3 + k * iqr;

    Grid out = band;
    int64_t removed = 0;
    for (auto& x : out.v) {
        if (!std::isfinite(x)) continue;
        if (x < lo || x > hi) {
            x = std::numeric_limits<float>::quiet_NaN();
            ++removed;
        }
    }
    if (n_removed) *n_removed = removed;
    return out;
}

Grid idw_impute(const Grid& band, double power, int64_t radius, int64_t* n_imputed) {
    if (power <= 0) throw ContractError("idw_impute: power must be positive");
    if (radius < 1) throw ContractError("idw_impute: radius must be >= 1");

    std::vector<double> finite;
    for (float x : band.v)
        if (std::isfinite(x)) finite.push_back(static_cast<double>(x));
    if (finite.empty()) throw DataError("idw_impute: band is entirely missing");
    const double median = quantile_linear(finite, 0.5);

    Grid out = band;
    int64_t imputed = 0;
    const double r2max = static_cast<double>(radius) * static_cast<double>(radius);
    for (int64_t r = 0; r < band.rows; ++r) {
        for (int64_t c = 0; c < band.cols; ++c) {
            if (std::isfinite(band.at(r, c))) continue;
            double wsum = 0.0, vsum = 0.0;
            const int64_t r0 = std::max<int64_t>(0, r - radius);
            const int64_t r1 = std::min(band.rows - 1, r + radius);
            const int64_t c0 = std::max<int64_t>(0, c - radius);
            const int64_t c1 = std::min(band.cols - 1, c + radius);
            for (int64_t rr = r0; rr <= r1; ++rr) {
                for (int64_t cc = c0; cc <= c1; ++cc) {
                    const float v = band.at(rr, cc);
                    if (!std::isfinite(v)) continue;
                    const double d2 = static_cast<double>((rr - r) * (rr - r) +
                                                          (cc - c) * (cc - c));
                    if (d2 > r2max) continue;
                    const double w = std::pow(std::sqrt(d2), -power);
                    wsum += w;
                    vsum += w * static_cast<double>(v);
                }
            }
            out.at(r, c) = wsum > 0.0 ? static_cast<float>(vsum / wsum)
                                      : static_cast<float>(median);
            ++imputed;
        }
    }
    if (n_imputed) *n_imputed = imputed;
    return out;
}

Grid smooth(const Grid& band, double sigma) {
    if (sigma < 0) throw ContractError("smooth: sigma must be >= 0");
    if (sigma == 0.0) return band;

    const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    const int64_t k = 2 * radius + 1;
    std::vector<double> kernel(static_cast<size_t>(k * k));
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            const double dr = static_cast<double>(i - radius);
            const double dc = static_cast<double>(j - radius);
            kernel[static_cast<size_t>(i * k + j)] =
                std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }

    Grid out(band.rows, band.cols);
    for (int64_t r = 0; r < band.rows; ++r) {
        for (int64_t c = 0; c < band.cols; ++c) {
            double wsum = 0.0, vsum = 0.0;
            for (int64_t i = -radius; i <= radius; ++i) {
                const int64_t rr = r + i;
                if (rr < 0 || rr >= band.rows) continue;
                for (int64_t j = -radius; j <= radius; ++j) {
                    const int64_t cc = c + j;
                    if (cc < 0 || cc >= band.cols) continue;
                    const float v = band.at(rr, cc);
                    if (!std::isfinite(v)) continue;
                    const double w = kernel[static_cast<size_t>((i + radius) * k + j + radius)];
                    wsum += w;
                    vsum += w * static_cast<double>(v);
                }
            }
            out.at(r, c) = wsum > 0.0 ? static_cast<float>(vsum / wsum)
                                      : std::numeric_limits<float>::quiet_NaN();
        }
    }
    return out;
}

Grid standardize(const Grid& band) {
    double sum = 0.0;
    int64_t n = 0;
    for (float x : band.v)
        if (std::isfinite(x)) {
            sum += static_cast<double>(x);
            ++n;
        }
    if (n == 0) throw DataError("standardize: band is entirely missing");
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (float x : band.v)
        if (std::isfinite(x)) {
            const double d = static_cast<double>(x) - mu;
            ss += d * d;
        }
    const double sd = std::sqrt(ss / static_cast<double>(n));  // population std
    if (sd == 0.0) throw DataError("standardize: zero-variance band");
    Grid out = band;
    for (auto& x : out.v)
        if (std::isfinite(x))
            x = static_cast<float>((static_cast<double>(x) - mu) / sd);
    return out;
}

std::string PreprocessReport::to_json() const {
    nlohmann::json j;
    j["bands_in"] = bands_in;
    j["bands_out"] = bands_out;
    j["bands"] = nlohmann::json::array();
    for (const auto& b : bands) {
        nlohmann::json jb = {{"name", b.name},
                             {"outliers_removed", b.outliers_removed},
                             {"imputed", b.imputed},
                             {"dropped", b.dropped}};
        if (b.dropped) jb["drop_reason"] = b.drop_reason;
        j["bands"].push_back(jb);
    }
    return j.dump(2);
}

MultiBandRaster run_pipeline(const MultiBandRaster& raster, const PreprocessConfig& cfg,
                             PreprocessReport* report) {
    raster.validate();
    if (raster.bands == 0) throw ContractError("run_pipeline: raster has no bands");

    std::vector<Grid> results(static_cast<size_t>(raster.bands));
    std::vector<BandReport> reports(static_cast<size_t>(raster.bands));

    parallel_for(raster.bands, [&](int64_t b) {
        BandReport& rep = reports[static_cast<size_t>(b)];
        rep.name = raster.band_names[static_cast<size_t>(b)];
        Grid g(raster.rows, raster.cols);
        for (int64_t i = 0; i < raster.plane(); ++i) {
            g.v[static_cast<size_t>(i)] =
                raster.nodata[static_cast<size_t>(i)]
                    ? std::numeric_limits<float>::quiet_NaN()
                    : raster.plane_data(b)[i];
        }
        try {
            Grid filtered = tukey_filter(g, cfg.tukey_k, &rep.outliers_removed);
            Grid imputed = idw_impute(filtered, cfg.idw_power, cfg.idw_radius);
            // nodata pixels stay missing; they were never valid data
            rep.imputed = 0;
            for (int64_t i = 0; i < raster.plane(); ++i) {
                if (raster.nodata[static_cast<size_t>(i)])
                    imputed.v[static_cast<size_t>(i)] =
                        std::numeric_limits<float>::quiet_NaN();
                else if (!std::isfinite(filtered.v[static_cast<size_t>(i)]))
                    ++rep.imputed;
            }
            if (rep.imputed > 0 && cfg.smooth_sigma > 0) {
                // smoothing is part of imputation: only imputed pixels take
                // the blurred value
                Grid blurred = smooth(imputed, cfg.smooth_sigma);
                for (size_t i = 0; i < imputed.v.size(); ++i)
                    if (!std::isfinite(filtered.v[i]) && std::isfinite(imputed.v[i]))
                        imputed.v[i] = blurred.v[i];
            }
            results[static_cast<size_t>(b)] = standardize(imputed);
        } catch (const DataError& e) {
            rep.dropped = true;
            rep.drop_reason = e.what();
        }
    });

    std::vector<int64_t> kept;
    for (int64_t b = 0; b < raster.bands; ++b)
        if (!reports[static_cast<size_t>(b)].dropped) kept.push_back(b);
    if (kept.empty()) throw DataError("run_pipeline: every band was dropped");

    MultiBandRaster out(static_cast<int64_t>(kept.size()), raster.rows, raster.cols);
    out.transform = raster.transform;
    out.nodata = raster.nodata;
    out.band_names.clear();
    for (size_t i = 0; i < kept.size(); ++i) {
        const int64_t b = kept[i];
        out.band_names.push_back(raster.band_names[static_cast<size_t>(b)]);
        const Grid& g = results[static_cast<size_t>(b)];
        std::copy(g.v.begin(), g.v.end(), out.plane_data(static_cast<int64_t>(i)));
    }
    // nodata pixels carry NaN in every band; everything else must be finite
    for (int64_t b = 0; b < out.bands; ++b)
        for (int64_t i = 0; i < out.plane(); ++i)
            if (!out.nodata[static_cast<size_t>(i)] &&
                !std::isfinite(out.plane_data(b)[i]))
                throw NumericError("pipeline left a non-finite value outside the nodata mask");

    if (report) {
        report->bands = std::move(reports);
        report->bands_in = raster.bands;
        report->bands_out = out.bands;
    }
    return out;
}

}  // namespace prospectr
