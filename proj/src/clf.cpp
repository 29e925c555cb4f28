#include "prospectr/clf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "prospectr/metrics.hpp"
#include "prospectr/parallel.hpp"

namespace prospectr {

using nlohmann::json;

void ClassifierConfig::validate() const {
    if (in_dim <= 0) throw ConfigError("classifier in_dim must be positive");
    if (hidden.empty()) throw ConfigError("classifier needs at least one hidden layer");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0,1)");
    if (mc_passes < 1) throw ConfigError("mc_passes must be >= 1");
    if (batch < 2) throw ConfigError("batch must be >= 2 for batch norm");
}

std::string ClassifierConfig::arch_json() const {
    json j = {{"in_dim", in_dim},       {"hidden", hidden},
              {"dropout_p", dropout_p}, {"init_seed", init_seed},
              {"features", feature_source}};
    return j.dump();
}

MlpHead::MlpHead(const ClassifierConfig& config) : cfg(config) {
    cfg.validate();
    Rng rng(cfg.init_seed, 0xC1Fu);
    int64_t prev = cfg.in_dim;
    for (int64_t h : cfg.hidden) {
        linears.emplace_back(prev, h, rng);
        norms.emplace_back(h);
        acts.emplace_back(0.25f);
        prev = h;
    }
    linears.emplace_back(prev, 1, rng);
}

Tensor MlpHead::forward(const Tensor& x, bool train, bool dropout_active, Rng& stream) {
    if (x.rank() != 2 || x.dim(1) != cfg.in_dim)
        throw ShapeError("classifier expects [B," + std::to_string(cfg.in_dim) + "]");
    Tensor h = x;
    for (size_t i = 0; i < norms.size(); ++i) {
        h = linears[i].forward(h);
        h = norms[i].forward(h, train);
        h = acts[i].forward(h);
        Rng layer_stream = stream.split(static_cast<uint64_t>(i));
        h = nn::dropout(h, static_cast<float>(cfg.dropout_p), dropout_active, layer_stream);
    }
    return sigmoid(linears.back().forward(h));
}

nn::ParamList<float> MlpHead::params() {
    nn::ParamList<float> p;
    for (size_t i = 0; i < linears.size(); ++i)
        linears[i].collect("mlp." + std::to_string(i), p);
    for (size_t i = 0; i < norms.size(); ++i) {
        norms[i].collect("bn." + std::to_string(i), p);
        acts[i].collect("prelu." + std::to_string(i), p);
    }
    return p;
}

std::vector<nn::StateRef<float>> MlpHead::state() {
    std::vector<nn::StateRef<float>> s;
    for (size_t i = 0; i < norms.size(); ++i) norms[i].collect_state("bn." + std::to_string(i), s);
    return s;
}

int64_t MlpHead::flops_per_prediction() const {
    int64_t f = 0;
    for (const auto& lin : linears) f += lin.flops(1);
    for (const auto& bn : norms) f += bn.flops(1);
    for (const auto& bn : norms) f += bn.dim * 2;  // prelu + dropout scale
    f += 4;                                        // sigmoid
    return f;
}

Tensor bce_loss(const Tensor& probs, const std::vector<float>& labels) {
    Tensor p = probs.rank() == 2 ? reshape(probs, {probs.dim(0)}) : probs;
    if (p.numel() != static_cast<int64_t>(labels.size()))
        throw ShapeError("bce_loss: batch size mismatch");
    Tensor y = Tensor::from_data({p.numel()}, std::vector<float>(labels));
    Tensor pc = clamp(p, 1e-7f, 1.0f - 1e-7f);
    Tensor one_minus_y = add_scalar(mul_scalar(y, -1.0f), 1.0f);
    Tensor one_minus_p = add_scalar(mul_scalar(pc, -1.0f), 1.0f);
    Tensor ll = add(mul(y, log(pc)), mul(one_minus_y, log(one_minus_p)));
    return mul_scalar(mean(ll), -1.0f);
}

// ---------------------------------------------------------------------------

std::string FitHistory::to_csv() const {
    std::string out = "epoch,loss,val_f1\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.8f,%.6f\n",
                      static_cast<long long>(r.epoch), r.loss, r.val_f1);
        out += buf;
    }
    return out;
}

namespace {

std::vector<float> snapshot(nn::ParamList<float>& params,
                            std::vector<nn::StateRef<float>> state) {
    std::vector<float> flat;
    for (auto& p : params)
        flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
    for (auto& s : state) flat.insert(flat.end(), s.vec->begin(), s.vec->end());
    return flat;
}

void restore(nn::ParamList<float>& params, std::vector<nn::StateRef<float>> state,
             const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : params) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p.tensor.data().size()),
                  p.tensor.data().begin());
        off += p.tensor.data().size();
    }
    for (auto& s : state) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + s.vec->size()),
                  s.vec->begin());
        off += s.vec->size();
    }
}

double val_f1_of(MlpHead& mlp, const FeatureMatrix& features,
                 const std::vector<uint8_t>& labels, const std::vector<int64_t>& val_rows,
                 double threshold) {
    if (val_rows.empty()) return 0.0;
    NoGradGuard ng;
    std::vector<float> buf;
    buf.reserve(val_rows.size() * static_cast<size_t>(features.dim));
    for (int64_t r : val_rows)
        buf.insert(buf.end(), features.row(r), features.row(r) + features.dim);
    Tensor x = Tensor::from_data({static_cast<int64_t>(val_rows.size()), features.dim},
                                 std::move(buf));
    Rng unused(0);
    Tensor p = mlp.forward(x, false, false, unused);
    ConfusionCounts c;
    for (size_t i = 0; i < val_rows.size(); ++i) {
        const bool pred = p.data()[i] >= static_cast<float>(threshold);
        const bool truth = labels[static_cast<size_t>(val_rows[i])] != 0;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return f1(c);
}

}  // namespace

FitHistory train_classifier(MlpHead& mlp, const FeatureMatrix& features,
                            const std::vector<uint8_t>& labels,
                            const std::vector<int64_t>& train_rows,
                            const std::vector<int64_t>& val_rows, uint64_t seed) {
    if (train_rows.empty()) throw ContractError("train_classifier: no labeled samples");
    if (features.n != static_cast<int64_t>(labels.size()))
        throw ShapeError("train_classifier: features/labels mismatch");

    Rng root(seed, 0x7124Au);
    nn::ParamList<float> params = mlp.params();
    nn::Adam<float> opt(params, static_cast<float>(mlp.cfg.lr));

    // no validation set means no early-stopping signal: keep the final epoch
    const bool early_stop = !val_rows.empty();
    FitHistory hist;
    std::vector<float> best = snapshot(params, mlp.state());
    hist.best_val_f1 = -1.0;  // first trained epoch always beats the baseline
    int64_t since_best = 0;

    for (int64_t epoch = 1; epoch <= mlp.cfg.max_epochs; ++epoch) {
        std::vector<int64_t> order(train_rows);
        Rng order_rng = root.split(static_cast<uint64_t>(epoch));
        order_rng.shuffle(order);

        double loss_acc = 0.0;
        int64_t loss_n = 0;
        for (size_t s = 0; s < order.size(); s += static_cast<size_t>(mlp.cfg.batch)) {
            const int64_t bsz =
                std::min<int64_t>(mlp.cfg.batch, static_cast<int64_t>(order.size() - s));
            if (bsz < 2) break;  // batch norm cannot run on a single row
            std::vector<float> buf;
            std::vector<float> y;
            buf.reserve(static_cast<size_t>(bsz * features.dim));
            for (int64_t i = 0; i < bsz; ++i) {
                const int64_t r = order[s + static_cast<size_t>(i)];
                buf.insert(buf.end(), features.row(r), features.row(r) + features.dim);
                y.push_back(static_cast<float>(labels[static_cast<size_t>(r)]));
            }
            Tensor x = Tensor::from_data({bsz, features.dim}, std::move(buf));
            Rng drop = root.split(0xD0ull + static_cast<uint64_t>(epoch) * 1000 +
                                  static_cast<uint64_t>(s));
            opt.zero_grad();
            Tensor p = mlp.forward(x, true, true, drop);
            Tensor loss = bce_loss(p, y);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericError("classifier training diverged at epoch " +
                                   std::to_string(epoch));
            loss.backward();
            opt.step();
            loss_acc += lv * static_cast<double>(bsz);
            loss_n += bsz;
        }

        const double vf1 = val_f1_of(mlp, features, labels, val_rows, mlp.cfg.threshold);
        hist.rows.push_back({epoch, loss_n ? loss_acc / loss_n : 0.0, vf1});
        if (!early_stop) {
            hist.best_epoch = epoch;
            continue;
        }
        if (vf1 > hist.best_val_f1) {
            hist.best_val_f1 = vf1;
            hist.best_epoch = epoch;
            best = snapshot(params, mlp.state());
            since_best = 0;
        } else if (++since_best >= mlp.cfg.patience) {
            break;
        }
    }
    if (early_stop) restore(params, mlp.state(), best);
    return hist;
}

std::pair<double, double> mc_predict(MlpHead& mlp, const float* feature, int64_t t_passes,
                                     Rng stream) {
    if (t_passes < 1) throw ContractError("mc_predict: T must be >= 1");
    NoGradGuard ng;
    // T stochastic rows in one batch; each pass draws its own masks
    std::vector<float> buf;
    buf.reserve(static_cast<size_t>(t_passes * mlp.cfg.in_dim));
    for (int64_t t = 0; t < t_passes; ++t)
        buf.insert(buf.end(), feature, feature + mlp.cfg.in_dim);
    Tensor x = Tensor::from_data({t_passes, mlp.cfg.in_dim}, std::move(buf));
    Tensor p = mlp.forward(x, false, true, stream);

    double mean_acc = 0.0;
    for (float v : p.data()) mean_acc += v;
    const double mean = mean_acc / static_cast<double>(t_passes);
    double var = 0.0;
    if (t_passes > 1) {
        for (float v : p.data()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(t_passes - 1);
    }
    return {mean, var};
}

double ProspectivityMap::mean_likelihood() const {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < raster.plane(); ++i) {
        if (!evaluated[static_cast<size_t>(i)]) continue;
        acc += raster.plane_data(0)[i];
        ++n;
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

ProspectivityMap predict_map(const Featurizer& featurize, MlpHead& mlp, int64_t rows,
                             int64_t cols, const GeoTransform& transform, int64_t stride,
                             int64_t t_passes, uint64_t seed) {
    if (stride < 1) throw ConfigError("predict stride must be >= 1");
    ProspectivityMap map;
    map.raster = MultiBandRaster(2, rows, cols);
    map.raster.band_names = {"likelihood_mean", "likelihood_std"};
    map.raster.transform = transform;
    std::fill(map.raster.data.begin(), map.raster.data.end(),
              std::numeric_limits<float>::quiet_NaN());
    map.evaluated.assign(static_cast<size_t>(rows * cols), 0);

    std::vector<int64_t> centers;
    for (int64_t r = 0; r < rows; r += stride)
        for (int64_t c = 0; c < cols; c += stride)
            centers.push_back(r * cols + c);

    Rng root(seed, 0x9A9ull);
    const int64_t chunk = 256;
    for (size_t s = 0; s < centers.size(); s += static_cast<size_t>(chunk)) {
        const int64_t bsz =
            std::min<int64_t>(chunk, static_cast<int64_t>(centers.size() - s));
        std::vector<int64_t> chunk_centers(centers.begin() + static_cast<std::ptrdiff_t>(s),
                                           centers.begin() +
                                               static_cast<std::ptrdiff_t>(s) + bsz);
        std::vector<float> feats = featurize(chunk_centers);
        if (static_cast<int64_t>(feats.size()) != bsz * mlp.cfg.in_dim)
            throw ShapeError("predict_map: featurizer returned a bad block");
        // worker streams keyed by pixel id, so chunking and threading are
        // irrelevant to the result
        parallel_for(bsz, [&](int64_t i) {
            const int64_t pixel = chunk_centers[static_cast<size_t>(i)];
            auto [m, v] = mc_predict(mlp, feats.data() + i * mlp.cfg.in_dim, t_passes,
                                     root.split(static_cast<uint64_t>(pixel)));
            map.raster.plane_data(0)[pixel] = static_cast<float>(m);
            map.raster.plane_data(1)[pixel] = static_cast<float>(std::sqrt(v));
            map.evaluated[static_cast<size_t>(pixel)] = 1;
        });
    }
    return map;
}

void save_classifier(const std::string& path, MlpHead& mlp) {
    nn::ParamList<float> params = mlp.params();
    save_checkpoint(path, "clf", mlp.cfg.arch_json(), params, mlp.state());
}

MlpHead load_classifier(const std::string& path) {
    const std::string arch = checkpoint_arch(path, "clf");
    json j = json::parse(arch);
    ClassifierConfig cfg;
    cfg.in_dim = j.at("in_dim").get<int64_t>();
    cfg.hidden = j.at("hidden").get<std::vector<int64_t>>();
    cfg.dropout_p = j.at("dropout_p").get<double>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    cfg.feature_source = j.at("features").get<std::string>();
    MlpHead mlp(cfg);
    nn::ParamList<float> params = mlp.params();
    load_checkpoint(path, "clf", mlp.cfg.arch_json(), params, mlp.state());
    return mlp;
}

}  // namespace prospectr
