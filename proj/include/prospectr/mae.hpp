#pragma once

// Masked image modeling: per-sample patch masking, an asymmetric ViT
// encoder / shallow decoder, the reconstruction objective, pretraining with
// SSIM/PSNR monitors, and frozen-feature extraction for downstream use.

#include <cstdint>
#include <string>
#include <vector>

#include "prospectr/nn.hpp"
#include "prospectr/raster.hpp"
#include "prospectr/rng.hpp"
#include "prospectr/tensor.hpp"

namespace prospectr {

struct MaeConfig {
    int64_t bands = 24;
    int64_t window = 16;
    int64_t patch = 4;
    int64_t enc_dim = 256;
    int64_t enc_blocks = 6;
    int64_t enc_heads = 8;
    int64_t dec_dim = 128;
    int64_t dec_blocks = 2;
    int64_t dec_heads = 8;
    int64_t mlp_ratio = 4;
    double mask_ratio = 0.75;
    bool loss_on_all = true;  // the printed objective averages every pixel
    uint64_t init_seed = 0;

    int64_t n_patches() const { return (window / patch) * (window / patch); }
    std::string arch_json() const;
    void validate() const;
};

struct MaskPlan {
    int64_t num_patches = 0;
    std::vector<int64_t> kept;    // ascending
    std::vector<int64_t> masked;  // ascending complement
};

// Uniformly random subset of round(ratio*P) patches masked; deterministic
// under the stream. Degenerate plans (nothing or everything masked) error.
MaskPlan sample_mask(int64_t n_patches, double ratio, Rng& rng);

struct MaeModel {
    MaeConfig cfg;
    nn::PatchEmbed<float> embed;
    std::vector<nn::TransformerBlock<float>> encoder;
    nn::LayerNorm<float> enc_norm;
    nn::Linear<float> enc2dec;
    Tensor mask_token;  // [dec_dim], learned
    Tensor dec_pos;     // [P, dec_dim], fixed
    std::vector<nn::TransformerBlock<float>> decoder;
    nn::LayerNorm<float> dec_norm;
    nn::Linear<float> head;  // dec_dim -> patch*patch*bands

    explicit MaeModel(const MaeConfig& config);

    nn::ParamList<float> params();
    nn::ParamList<float> encoder_params();
    int64_t decoder_param_count();

    // FLOPs of one full-window feature extraction (all tokens), 2*MACs.
    int64_t encoder_flops_per_sample() const;

    // x: [B, m, w, w] batch; one plan per sample. Returns [B, m, w, w].
    Tensor forward(const Tensor& x, const std::vector<MaskPlan>& plans) const;

    // Full (unmasked) token sequence through the encoder, mean-pooled: [B, D].
    Tensor features(const Tensor& x) const;
};

// Eq-style reconstruction objective: mean over every element.
Tensor mse_loss(const Tensor& target, const Tensor& recon);
// Variant restricted to masked patches (ablation path).
Tensor mse_loss_masked(const Tensor& target, const Tensor& recon,
                       const std::vector<MaskPlan>& plans, int64_t patch);

// Mean SSIM over bands; Gaussian window sigma 1.5 (11x11), k1=0.01, k2=0.03,
// kernel renormalized at the edges. range <= 0 means use the joint min/max.
double ssim(const std::vector<float>& a, const std::vector<float>& b, int64_t bands,
            int64_t rows, int64_t cols, double range = 0.0);

// 10*log10(peak^2/MSE), capped at 100 dB once MSE < peak^2 * 1e-10.
double psnr(const std::vector<float>& a, const std::vector<float>& b, double peak);

struct PretrainConfig {
    int64_t epochs = 30;
    int64_t batch = 64;
    int64_t samples_per_epoch = 512;  // 0 = full pass over the raster
    double lr = 1e-3;                 // cosine-decayed Adam
    uint64_t seed = 0;
    double holdout_fraction = 0.05;   // clamped to [16, 256] samples
    int64_t dump_every = 0;           // reconstruction grids every N epochs
    std::string dump_dir;
};

struct EpochStats {
    int64_t epoch = 0;  // 1-based
    double loss = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

struct PretrainResult {
    std::vector<EpochStats> history;
    int64_t best_epoch = 0;  // epoch whose checkpoint the model now holds
    double best_psnr = 0.0;
    std::string history_csv() const;  // epoch,loss,ssim,psnr
};

// Self-supervised: uses every pixel of the raster, no labels anywhere.
PretrainResult pretrain(MaeModel& model, const MultiBandRaster& raster,
                        const PretrainConfig& cfg);

// Frozen-feature extraction for a set of center pixels; returns [n, enc_dim].
std::vector<float> extract_features(const MaeModel& model, const MultiBandRaster& raster,
                                    const std::vector<int64_t>& centers,
                                    int64_t batch = 128);
// Same, but over already-extracted windows [n, m, w, w] (degraded inputs).
std::vector<float> extract_features_from_windows(const MaeModel& model,
                                                 const std::vector<float>& windows,
                                                 int64_t n, int64_t batch = 128);

void save_mae(const std::string& path, MaeModel& model);
MaeModel load_mae(const std::string& path);

}  // namespace prospectr
