#include "prospectr/synth.hpp"

#include <cmath>
#include <cstdio>

#include "prospectr/parallel.hpp"

namespace prospectr {

DepositRule WorldSpec::effective_rule() const {
    if (!rule.layers.empty()) return rule;
    DepositRule r = rule;
    const int64_t k = std::min<int64_t>(8, n_layers);
    for (int64_t i = 0; i < k; ++i) {
        r.layers.push_back(i);
        r.weights.push_back(1.0);
    }
    return r;
}

double WorldSpec::corr_length(int64_t layer) const {
    if (correlation_length.empty()) return 8.0;
    if (correlation_length.size() == 1) return correlation_length[0];
    return correlation_length[static_cast<size_t>(layer)];
}

void WorldSpec::validate() const {
    if (rows <= 0 || cols <= 0 || n_layers <= 0) throw ConfigError("world extent must be positive");
    if (static_cast<double>(n_deposits) >=
        static_cast<double>(rows) * static_cast<double>(cols) / 100.0)
        throw ConfigError("n_deposits must stay below rows*cols/100");
    if (correlation_length.size() > 1 &&
        static_cast<int64_t>(correlation_length.size()) != n_layers)
        throw ConfigError("correlation_length must have 1 or n_layers entries");
    const DepositRule r = effective_rule();
    if (r.layers.size() != r.weights.size())
        throw ConfigError("deposit rule layers/weights length mismatch");
    for (int64_t l : r.layers)
        if (l < 0 || l >= n_layers) throw ConfigError("deposit rule references a bad layer");
    if (n_redundant < 0 ||
        n_redundant > n_layers - static_cast<int64_t>(r.layers.size()))
        throw ConfigError("n_redundant out of range");
}

std::vector<float> gaussian_random_field(int64_t rows, int64_t cols, double corr_length,
                                         Rng& rng, int64_t n_modes) {
    if (corr_length <= 0) throw ConfigError("correlation length must be positive");
    // wavevectors from the Gaussian spectral density; phase uniform
    std::vector<double> kr(static_cast<size_t>(n_modes));
    std::vector<double> kc(static_cast<size_t>(n_modes));
    std::vector<double> ph(static_cast<size_t>(n_modes));
    for (int64_t i = 0; i < n_modes; ++i) {
        kr[static_cast<size_t>(i)] = rng.normal() / corr_length;
        kc[static_cast<size_t>(i)] = rng.normal() / corr_length;
        ph[static_cast<size_t>(i)] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    }
    std::vector<float> out(static_cast<size_t>(rows * cols));
    const double amp = std::sqrt(2.0 / static_cast<double>(n_modes));
    parallel_for(rows, [&](int64_t r) {
        for (int64_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int64_t i = 0; i < n_modes; ++i)
                acc += std::cos(kr[static_cast<size_t>(i)] * static_cast<double>(r) +
                                kc[static_cast<size_t>(i)] * static_cast<double>(c) +
                                ph[static_cast<size_t>(i)]);
            out[static_cast<size_t>(r * cols + c)] = static_cast<float>(amp * acc);
        }
    });
    // exact unit moments over the grid
    double mu = 0.0;
    for (float v : out) mu += v;
    mu /= static_cast<double>(out.size());
    double ss = 0.0;
    for (float v : out) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(out.size()));
    for (auto& v : out) v = static_cast<float>((v - mu) / sd);
    return out;
}

MultiBandRaster truth_from_raster(const MultiBandRaster& raster, const DepositRule& rule) {
    if (rule.layers.empty()) throw ConfigError("deposit rule has no layers");
    double wnorm = 0.0;
    for (double w : rule.weights) wnorm += w * w;
    wnorm = std::sqrt(wnorm);

    MultiBandRaster truth(1, raster.rows, raster.cols);
    truth.band_names = {"prospectivity"};
    truth.transform = raster.transform;
    truth.nodata = raster.nodata;
    for (int64_t i = 0; i < raster.plane(); ++i) {
        double z = 0.0;
        for (size_t j = 0; j < rule.layers.size(); ++j)
            z += rule.weights[j] *
                 static_cast<double>(raster.plane_data(rule.layers[j])[i]);
        z = rule.sharpness * z / wnorm + rule.bias;
        truth.data[static_cast<size_t>(i)] = static_cast<float>(1.0 / (1.0 + std::exp(-z)));
    }
    return truth;
}

World generate_world(const WorldSpec& spec) {
    spec.validate();
    const DepositRule rule = spec.effective_rule();
    Rng root(spec.seed);

    World world;
    world.raster = MultiBandRaster(spec.n_layers, spec.rows, spec.cols);
    world.raster.transform.origin_x = 0.0;
    world.raster.transform.origin_y = 0.0;
    world.raster.transform.pixel_w = 1.0;
    world.raster.transform.pixel_h = -1.0;

    // base fields, one stream per layer
    std::vector<std::vector<float>> fields(static_cast<size_t>(spec.n_layers));
    for (int64_t l = 0; l < spec.n_layers; ++l) {
        Rng stream = root.split(static_cast<uint64_t>(l));
        fields[static_cast<size_t>(l)] =
            gaussian_random_field(spec.rows, spec.cols, spec.corr_length(l), stream);
    }

    // overwrite the redundant block with noisy echoes of the rule layers
    const int64_t n_rule = static_cast<int64_t>(rule.layers.size());
    const double rho = spec.redundancy_rho;
    const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (int64_t k = 0; k < spec.n_redundant; ++k) {
        const int64_t dst = n_rule + k;
        const int64_t src = rule.layers[static_cast<size_t>(k % n_rule)];
        auto& d = fields[static_cast<size_t>(dst)];
        const auto& s = fields[static_cast<size_t>(src)];
        for (size_t i = 0; i < d.size(); ++i)
            d[i] = static_cast<float>(rho * s[i] + mix * d[i]);
        double mu = 0.0, ss = 0.0;
        for (float v : d) mu += v;
        mu /= static_cast<double>(d.size());
        for (float v : d) ss += (v - mu) * (v - mu);
        const double sd = std::sqrt(ss / static_cast<double>(d.size()));
        for (auto& v : d) v = static_cast<float>((v - mu) / sd);
    }

    for (int64_t l = 0; l < spec.n_layers; ++l)
        std::copy(fields[static_cast<size_t>(l)].begin(), fields[static_cast<size_t>(l)].end(),
                  world.raster.plane_data(l));

    world.truth = truth_from_raster(world.raster, rule);

    // deposits without replacement, weight = prospectivity^gamma
    Rng dep_rng = root.split(0x0DE905177ull);
    std::vector<double> weight(static_cast<size_t>(world.truth.plane()));
    for (size_t i = 0; i < weight.size(); ++i)
        weight[i] = std::pow(static_cast<double>(world.truth.data[i]), spec.gamma);
    std::vector<int64_t> chosen;
    for (int64_t k = 0; k < spec.n_deposits; ++k) {
        double total = 0.0;
        for (double w : weight) total += w;
        if (total <= 0.0) throw NumericError("deposit sampling ran out of mass");
        double u = dep_rng.uniform() * total;
        int64_t pick = static_cast<int64_t>(weight.size()) - 1;
        for (size_t i = 0; i < weight.size(); ++i) {
            u -= weight[i];
            if (u <= 0.0) {
                pick = static_cast<int64_t>(i);
                break;
            }
        }
        chosen.push_back(pick);
        weight[static_cast<size_t>(pick)] = 0.0;  // without replacement
    }

    char buf[32];
    for (size_t k = 0; k < chosen.size(); ++k) {
        const int64_t r = chosen[k] / spec.cols;
        const int64_t c = chosen[k] % spec.cols;
        double x, y;
        world.raster.transform.pixel_to_map(r, c, x, y);
        // pixel-center coordinates
        x += 0.5 * world.raster.transform.pixel_w;
        y += 0.5 * world.raster.transform.pixel_h;
        std::snprintf(buf, sizeof(buf), "dep_%04zu", k);
        world.records.push_back({buf, x, y, "synthetic"});
    }
    return world;
}

std::vector<uint8_t> degrade_features(std::vector<float>& windows, int64_t n, int64_t m,
                                      int64_t w, double drop_fraction, Rng& rng) {
    if (drop_fraction < 0.0 || drop_fraction >= 1.0)
        throw ConfigError("drop_fraction must be in [0,1)");
    if (static_cast<int64_t>(windows.size()) != n * m * w * w)
        throw ShapeError("degrade_features: buffer size mismatch");
    std::vector<uint8_t> mask(static_cast<size_t>(n * m), 0);
    const int64_t k = std::llround(drop_fraction * static_cast<double>(m));
    if (k == 0) return mask;
    const int64_t plane = w * w;
    for (int64_t i = 0; i < n; ++i) {
        Rng stream = rng.split(static_cast<uint64_t>(i));
        auto drop = stream.sample_without_replacement(m, k);
        for (int64_t layer : drop) {
            mask[static_cast<size_t>(i * m + layer)] = 1;
            float* p = windows.data() + (i * m + layer) * plane;
            std::fill(p, p + plane, 0.0f);
        }
    }
    return mask;
}

}  // namespace prospectr
