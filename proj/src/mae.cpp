#include "prospectr/mae.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "prospectr/image.hpp"

namespace prospectr {

using nlohmann::json;

void MaeConfig::validate() const {
    if (bands <= 0 || window <= 0 || patch <= 0) throw ConfigError("mae: bad geometry");
    if (window % patch != 0) throw ConfigError("mae: patch must divide window");
    if (enc_dim % enc_heads != 0 || dec_dim % dec_heads != 0)
        throw ConfigError("mae: heads must divide dims");
    if (enc_dim % 4 != 0 || dec_dim % 4 != 0)
        throw ConfigError("mae: dims must be divisible by 4 for the position table");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw ConfigError("mae: mask_ratio in (0,1)");
}

std::string MaeConfig::arch_json() const {
    json j = {{"bands", bands},       {"window", window},
              {"patch", patch},       {"enc_dim", enc_dim},
              {"enc_blocks", enc_blocks}, {"enc_heads", enc_heads},
              {"dec_dim", dec_dim},   {"dec_blocks", dec_blocks},
              {"dec_heads", dec_heads}, {"mlp_ratio", mlp_ratio},
              {"mask_ratio", mask_ratio}, {"loss_on", loss_on_all ? "all" : "masked"},
              {"init_seed", init_seed}};
    return j.dump();
}

MaskPlan sample_mask(int64_t n_patches, double ratio, Rng& rng) {
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("mask ratio must be in (0,1)");
    const int64_t n_masked = std::llround(ratio * static_cast<double>(n_patches));
    if (n_masked <= 0 || n_masked >= n_patches)
        throw ConfigError("mask plan degenerates: nothing or everything masked");
    MaskPlan plan;
    plan.num_patches = n_patches;
    plan.masked = rng.sample_without_replacement(n_patches, n_masked);
    std::sort(plan.masked.begin(), plan.masked.end());
    size_t mi = 0;
    for (int64_t p = 0; p < n_patches; ++p) {
        if (mi < plan.masked.size() && plan.masked[mi] == p) {
            ++mi;
        } else {
            plan.kept.push_back(p);
        }
    }
    return plan;
}

MaeModel::MaeModel(const MaeConfig& config) : cfg(config) {
    cfg.validate();
    Rng rng(cfg.init_seed, 0x3AE0u);
    embed = nn::PatchEmbed<float>(cfg.bands, cfg.window, cfg.patch, cfg.enc_dim, rng);
    for (int64_t i = 0; i < cfg.enc_blocks; ++i)
        encoder.emplace_back(cfg.enc_dim, cfg.enc_heads, cfg.mlp_ratio, rng);
    enc_norm = nn::LayerNorm<float>(cfg.enc_dim);
    enc2dec = nn::Linear<float>(cfg.enc_dim, cfg.dec_dim, rng);
    mask_token = Tensor::trunc_normal({cfg.dec_dim}, rng, 0.02f, true);
    dec_pos = nn::sincos_pos_embed_2d<float>(cfg.window / cfg.patch, cfg.dec_dim);
    for (int64_t i = 0; i < cfg.dec_blocks; ++i)
        decoder.emplace_back(cfg.dec_dim, cfg.dec_heads, cfg.mlp_ratio, rng);
    dec_norm = nn::LayerNorm<float>(cfg.dec_dim);
    head = nn::Linear<float>(cfg.dec_dim, cfg.patch * cfg.patch * cfg.bands, rng);
}

nn::ParamList<float> MaeModel::encoder_params() {
    nn::ParamList<float> p;
    embed.collect("embed", p);
    for (size_t i = 0; i < encoder.size(); ++i)
        encoder[i].collect("enc." + std::to_string(i), p);
    enc_norm.collect("enc_norm", p);
    return p;
}

nn::ParamList<float> MaeModel::params() {
    nn::ParamList<float> p = encoder_params();
    enc2dec.collect("enc2dec", p);
    p.push_back({"mask_token", mask_token});
    for (size_t i = 0; i < decoder.size(); ++i)
        decoder[i].collect("dec." + std::to_string(i), p);
    dec_norm.collect("dec_norm", p);
    head.collect("head", p);
    return p;
}

int64_t MaeModel::decoder_param_count() {
    nn::ParamList<float> all = params();
    nn::ParamList<float> enc = encoder_params();
    return nn::count_params(all) - nn::count_params(enc);
}

int64_t MaeModel::encoder_flops_per_sample() const {
    const int64_t n = cfg.n_patches();
    int64_t f = embed.flops();
    for (const auto& blk : encoder) f += blk.flops(n);
    f += 8 * n * cfg.enc_dim;  // final norm
    f += 2 * n * cfg.enc_dim;  // mean pool
    return f;
}

Tensor MaeModel::forward(const Tensor& x, const std::vector<MaskPlan>& plans) const {
    const int64_t b = x.dim(0);
    if (x.rank() != 4 || x.dim(1) != cfg.bands || x.dim(2) != cfg.window ||
        x.dim(3) != cfg.window)
        throw ShapeError("mae forward: input is not [B,m,w,w] for this model");
    if (static_cast<int64_t>(plans.size()) != b)
        throw ShapeError("mae forward: one mask plan per sample required");
    const int64_t n_kept = static_cast<int64_t>(plans[0].kept.size());
    IndexRows kept_rows(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        const auto& plan = plans[static_cast<size_t>(i)];
        if (plan.num_patches != cfg.n_patches() ||
            static_cast<int64_t>(plan.kept.size()) != n_kept)
            throw ShapeError("mae forward: mask plan does not match the model");
        kept_rows[static_cast<size_t>(i)] = plan.kept;
    }

    Tensor tokens = embed.forward(x);                    // [B, P, D]
    Tensor enc_in = gather_rows(tokens, kept_rows);      // [B, K, D]
    // the encoder must only ever see the kept tokens
    if (enc_in.dim(1) != n_kept) throw ShapeError("mae forward: encoder length mismatch");
    Tensor h = enc_in;
    for (const auto& blk : encoder) h = blk.forward(h);
    h = enc_norm.forward(h);

    Tensor dec_kept = enc2dec.forward(h);                // [B, K, Dd]
    Tensor base = broadcast_to(reshape(mask_token, {1, 1, cfg.dec_dim}),
                               {b, cfg.n_patches(), cfg.dec_dim});
    Tensor seq = add(scatter_rows(base, kept_rows, dec_kept), dec_pos);
    for (const auto& blk : decoder) seq = blk.forward(seq);
    seq = dec_norm.forward(seq);
    Tensor patches = head.forward(seq);                  // [B, P, p*p*m]
    return nn::unpatchify(patches, cfg.bands, cfg.window, cfg.patch);
}

Tensor MaeModel::features(const Tensor& x) const {
    Tensor tokens = embed.forward(x);
    for (const auto& blk : encoder) tokens = blk.forward(tokens);
    tokens = enc_norm.forward(tokens);
    Tensor pooled = mean(tokens, 1);  // [B, 1, D]
    return reshape(pooled, {x.dim(0), cfg.enc_dim});
}

Tensor mse_loss(const Tensor& target, const Tensor& recon) {
    if (target.shape() != recon.shape()) throw ShapeError("mse_loss: shape mismatch");
    Tensor d = sub(target, recon);
    return mean(mul(d, d));
}

Tensor mse_loss_masked(const Tensor& target, const Tensor& recon,
                       const std::vector<MaskPlan>& plans, int64_t patch) {
    if (target.shape() != recon.shape()) throw ShapeError("mse_loss: shape mismatch");
    const int64_t m = target.dim(1), w = target.dim(2);
    Tensor dt = nn::patchify(sub(target, recon), patch);  // [B, P, ppm]
    IndexRows masked_rows(static_cast<size_t>(target.dim(0)));
    for (size_t i = 0; i < plans.size(); ++i) masked_rows[i] = plans[i].masked;
    Tensor sel = gather_rows(dt, masked_rows);
    (void)m;
    (void)w;
    return mean(mul(sel, sel));
}

// ---------------------------------------------------------------------------
// reconstruction monitors

namespace {

struct SsimKernel {
    int64_t radius;
    std::vector<double> k;  // (2r+1)^2 unnormalized weights
};

SsimKernel make_ssim_kernel(double sigma) {
    SsimKernel kr;
    kr.radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    const int64_t n = 2 * kr.radius + 1;
    kr.k.resize(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double dr = static_cast<double>(i - kr.radius);
            const double dc = static_cast<double>(j - kr.radius);
            kr.k[static_cast<size_t>(i * n + j)] =
                std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    return kr;
}

}  // namespace

double ssim(const std::vector<float>& a, const std::vector<float>& b, int64_t bands,
            int64_t rows, int64_t cols, double range) {
    if (a.size() != b.size() ||
        static_cast<int64_t>(a.size()) != bands * rows * cols)
        throw ShapeError("ssim: shape mismatch");
    if (range <= 0.0) {
        double lo = a[0], hi = a[0];
        for (float v : a) {
            lo = std::min(lo, static_cast<double>(v));
            hi = std::max(hi, static_cast<double>(v));
        }
        for (float v : b) {
            lo = std::min(lo, static_cast<double>(v));
            hi = std::max(hi, static_cast<double>(v));
        }
        range = hi - lo;
        if (range <= 0.0) range = 1.0;
    }
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    static const SsimKernel kernel = make_ssim_kernel(1.5);
    const int64_t rad = kernel.radius, kw = 2 * rad + 1;

    double band_acc = 0.0;
    for (int64_t band = 0; band < bands; ++band) {
        const float* pa = a.data() + band * rows * cols;
        const float* pb = b.data() + band * rows * cols;
        double acc = 0.0;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) {
                double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int64_t i = -rad; i <= rad; ++i) {
                    const int64_t rr = r + i;
                    if (rr < 0 || rr >= rows) continue;
                    for (int64_t j = -rad; j <= rad; ++j) {
                        const int64_t cc = c + j;
                        if (cc < 0 || cc >= cols) continue;
                        const double wgt =
                            kernel.k[static_cast<size_t>((i + rad) * kw + (j + rad))];
                        const double va = pa[rr * cols + cc];
                        const double vb = pb[rr * cols + cc];
                        wsum += wgt;
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                }
                ma /= wsum;
                mb /= wsum;
                const double va = saa / wsum - ma * ma;
                const double vb = sbb / wsum - mb * mb;
                const double cov = sab / wsum - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        band_acc += acc / static_cast<double>(rows * cols);
    }
    return band_acc / static_cast<double>(bands);
}

double psnr(const std::vector<float>& a, const std::vector<float>& b, double peak) {
    if (a.size() != b.size()) throw ShapeError("psnr: shape mismatch");
    if (peak <= 0.0) throw ContractError("psnr: peak must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse < peak * peak * 1e-10) return 100.0;
    return 10.0 * std::log10(peak * peak / mse);
}

// ---------------------------------------------------------------------------
// pretraining

std::string PretrainResult::history_csv() const {
    std::string out = "epoch,loss,ssim,psnr\n";
    char buf[128];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.8f,%.6f,%.4f\n",
                      static_cast<long long>(e.epoch), e.loss, e.ssim, e.psnr);
        out += buf;
    }
    return out;
}

namespace {

std::vector<float> snapshot_params(nn::ParamList<float>& params) {
    std::vector<float> flat;
    for (auto& p : params)
        flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
    return flat;
}

void restore_params(nn::ParamList<float>& params, const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : params) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p.tensor.data().size()),
                  p.tensor.data().begin());
        off += p.tensor.data().size();
    }
}

}  // namespace

PretrainResult pretrain(MaeModel& model, const MultiBandRaster& raster,
                        const PretrainConfig& cfg) {
    if (raster.bands != model.cfg.bands)
        throw ShapeError("pretrain: raster band count does not match the model");
    const int64_t n_pixels = raster.rows * raster.cols;
    const int64_t w = model.cfg.window;
    const int64_t n_patches = model.cfg.n_patches();

    Rng root(cfg.seed, 0x93AEu);

    // held-out reconstruction set, fixed masks, fixed peak
    std::vector<int64_t> centers(static_cast<size_t>(n_pixels));
    for (int64_t i = 0; i < n_pixels; ++i) centers[static_cast<size_t>(i)] = i;
    Rng holdout_rng = root.split(1);
    holdout_rng.shuffle(centers);
    int64_t n_hold = std::llround(cfg.holdout_fraction * static_cast<double>(n_pixels));
    n_hold = std::clamp<int64_t>(n_hold, 16, 256);
    if (n_hold >= n_pixels) throw ContractError("pretrain: raster too small to hold out from");
    const std::vector<int64_t> holdout(centers.begin(), centers.begin() + n_hold);
    const std::vector<int64_t> train(centers.begin() + n_hold, centers.end());

    const std::vector<float> hold_windows = extract_windows(raster, holdout, w);
    std::vector<MaskPlan> hold_plans;
    Rng hold_mask_rng = root.split(2);
    for (int64_t i = 0; i < n_hold; ++i) {
        Rng s = hold_mask_rng.split(static_cast<uint64_t>(i));
        hold_plans.push_back(sample_mask(n_patches, model.cfg.mask_ratio, s));
    }
    double peak = 0.0;
    {
        float lo = hold_windows[0], hi = hold_windows[0];
        for (float v : hold_windows) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        peak = static_cast<double>(hi - lo);
        if (peak <= 0.0) peak = 1.0;
    }

    auto eval_holdout = [&](double& out_ssim, double& out_psnr) {
        NoGradGuard ng;
        const int64_t stride = model.cfg.bands * w * w;
        std::vector<float> recon(hold_windows.size());
        const int64_t eb = 64;
        for (int64_t s = 0; s < n_hold; s += eb) {
            const int64_t bsz = std::min(eb, n_hold - s);
            std::vector<float> buf(hold_windows.begin() + s * stride,
                                   hold_windows.begin() + (s + bsz) * stride);
            Tensor x = Tensor::from_data({bsz, model.cfg.bands, w, w}, std::move(buf));
            std::vector<MaskPlan> plans(hold_plans.begin() + s, hold_plans.begin() + s + bsz);
            Tensor xhat = model.forward(x, plans);
            std::copy(xhat.data().begin(), xhat.data().end(), recon.begin() + s * stride);
        }
        double ssim_acc = 0.0;
        for (int64_t i = 0; i < n_hold; ++i) {
            std::vector<float> t(hold_windows.begin() + i * stride,
                                 hold_windows.begin() + (i + 1) * stride);
            std::vector<float> rcn(recon.begin() + i * stride, recon.begin() + (i + 1) * stride);
            ssim_acc += ssim(t, rcn, model.cfg.bands, w, w, peak);
        }
        out_ssim = ssim_acc / static_cast<double>(n_hold);
        out_psnr = psnr(hold_windows, recon, peak);
    };

    auto maybe_dump = [&](int64_t epoch) {
        if (cfg.dump_every <= 0 || cfg.dump_dir.empty()) return;
        if (epoch % cfg.dump_every != 0 && epoch != cfg.epochs) return;
        NoGradGuard ng;
        const int64_t n_show = std::min<int64_t>(8, n_hold);
        const int64_t stride = model.cfg.bands * w * w;
        std::vector<float> buf(hold_windows.begin(), hold_windows.begin() + n_show * stride);
        Tensor x = Tensor::from_data({n_show, model.cfg.bands, w, w},
                                     std::vector<float>(buf));
        std::vector<MaskPlan> plans(hold_plans.begin(), hold_plans.begin() + n_show);
        Tensor xhat = model.forward(x, plans);
        std::vector<std::vector<int64_t>> masked;
        for (const auto& p : plans) masked.push_back(p.masked);
        Image8 grid = reconstruction_grid(buf, xhat.data(), masked, n_show, model.cfg.bands,
                                          w, model.cfg.patch);
        std::filesystem::create_directories(cfg.dump_dir);
        write_png(cfg.dump_dir + "/recon_epoch_" + std::to_string(epoch) + ".png", grid);
    };

    nn::ParamList<float> params = model.params();
    nn::Adam<float> opt(params, static_cast<float>(cfg.lr));

    const int64_t per_epoch =
        cfg.samples_per_epoch > 0
            ? std::min<int64_t>(cfg.samples_per_epoch, static_cast<int64_t>(train.size()))
            : static_cast<int64_t>(train.size());
    const int64_t steps_per_epoch = (per_epoch + cfg.batch - 1) / cfg.batch;
    const int64_t total_steps = steps_per_epoch * cfg.epochs;

    PretrainResult result;
    std::vector<float> best_snapshot;
    int64_t global_step = 0;

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int64_t> order(train);
        Rng order_rng = root.split(1000 + static_cast<uint64_t>(epoch));
        order_rng.shuffle(order);
        order.resize(static_cast<size_t>(per_epoch));

        Rng mask_rng = root.split(5000 + static_cast<uint64_t>(epoch));
        double loss_acc = 0.0;
        int64_t loss_n = 0;

        for (int64_t s = 0; s < per_epoch; s += cfg.batch) {
            const int64_t bsz = std::min(cfg.batch, per_epoch - s);
            std::vector<int64_t> batch_centers(order.begin() + s, order.begin() + s + bsz);
            std::vector<float> buf = extract_windows(raster, batch_centers, w);
            Tensor x = Tensor::from_data({bsz, model.cfg.bands, w, w}, std::move(buf));
            std::vector<MaskPlan> plans;
            for (int64_t i = 0; i < bsz; ++i) {
                Rng ms = mask_rng.split(static_cast<uint64_t>(s + i));
                plans.push_back(sample_mask(n_patches, model.cfg.mask_ratio, ms));
            }

            opt.lr = nn::cosine_lr(static_cast<float>(cfg.lr), global_step, total_steps);
            opt.zero_grad();
            Tensor xhat = model.forward(x, plans);
            Tensor loss = model.cfg.loss_on_all
                              ? mse_loss(x, xhat)
                              : mse_loss_masked(x, xhat, plans, model.cfg.patch);
            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv))
                throw NumericError("pretraining diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(global_step));
            loss.backward();
            opt.step();
            loss_acc += lv * static_cast<double>(bsz);
            loss_n += bsz;
            ++global_step;
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_acc / static_cast<double>(loss_n);
        eval_holdout(st.ssim, st.psnr);
        result.history.push_back(st);
        maybe_dump(epoch);

        if (result.history.size() == 1 || st.psnr > result.best_psnr) {
            result.best_psnr = st.psnr;
            result.best_epoch = epoch;
            best_snapshot = snapshot_params(params);
        }
    }

    if (!best_snapshot.empty()) restore_params(params, best_snapshot);
    return result;
}

// ---------------------------------------------------------------------------

std::vector<float> extract_features(const MaeModel& model, const MultiBandRaster& raster,
                                    const std::vector<int64_t>& centers, int64_t batch) {
    const int64_t n = static_cast<int64_t>(centers.size());
    const int64_t w = model.cfg.window;
    std::vector<float> out(static_cast<size_t>(n * model.cfg.enc_dim));
    NoGradGuard ng;
    for (int64_t s = 0; s < n; s += batch) {
        const int64_t bsz = std::min(batch, n - s);
        std::vector<int64_t> chunk(centers.begin() + s, centers.begin() + s + bsz);
        std::vector<float> buf = extract_windows(raster, chunk, w);
        Tensor x = Tensor::from_data({bsz, model.cfg.bands, w, w}, std::move(buf));
        Tensor f = model.features(x);
        std::copy(f.data().begin(), f.data().end(), out.begin() + s * model.cfg.enc_dim);
    }
    return out;
}

std::vector<float> extract_features_from_windows(const MaeModel& model,
                                                 const std::vector<float>& windows,
                                                 int64_t n, int64_t batch) {
    const int64_t w = model.cfg.window;
    const int64_t stride = model.cfg.bands * w * w;
    if (static_cast<int64_t>(windows.size()) != n * stride)
        throw ShapeError("extract_features_from_windows: buffer size mismatch");
    std::vector<float> out(static_cast<size_t>(n * model.cfg.enc_dim));
    NoGradGuard ng;
    for (int64_t s = 0; s < n; s += batch) {
        const int64_t bsz = std::min(batch, n - s);
        std::vector<float> buf(windows.begin() + s * stride,
                               windows.begin() + (s + bsz) * stride);
        Tensor x = Tensor::from_data({bsz, model.cfg.bands, w, w}, std::move(buf));
        Tensor f = model.features(x);
        std::copy(f.data().begin(), f.data().end(), out.begin() + s * model.cfg.enc_dim);
    }
    return out;
}

void save_mae(const std::string& path, MaeModel& model) {
    nn::ParamList<float> params = model.params();
    save_checkpoint(path, "mae", model.cfg.arch_json(), params);
}

MaeModel load_mae(const std::string& path) {
    const std::string arch = checkpoint_arch(path, "mae");
    json j = json::parse(arch);
    MaeConfig cfg;
    cfg.bands = j.at("bands").get<int64_t>();
    cfg.window = j.at("window").get<int64_t>();
    cfg.patch = j.at("patch").get<int64_t>();
    cfg.enc_dim = j.at("enc_dim").get<int64_t>();
    cfg.enc_blocks = j.at("enc_blocks").get<int64_t>();
    cfg.enc_heads = j.at("enc_heads").get<int64_t>();
    cfg.dec_dim = j.at("dec_dim").get<int64_t>();
    cfg.dec_blocks = j.at("dec_blocks").get<int64_t>();
    cfg.dec_heads = j.at("dec_heads").get<int64_t>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<int64_t>();
    cfg.mask_ratio = j.at("mask_ratio").get<double>();
    cfg.loss_on_all = j.at("loss_on").get<std::string>() == "all";
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    MaeModel model(cfg);
    nn::ParamList<float> params = model.params();
    load_checkpoint(path, "mae", model.cfg.arch_json(), params);
    return model;
}

}  // namespace prospectr
