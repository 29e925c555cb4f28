#pragma once

// Prospectivity estimation: the MLP classifier head over frozen encoder
// features (or raw pixels), BCE training with early stopping on validation
// F1, MC-dropout mean/variance inference, and full-map prediction.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prospectr/nn.hpp"
#include "prospectr/raster.hpp"

namespace prospectr {

struct ClassifierConfig {
    int64_t in_dim = 256;
    std::vector<int64_t> hidden = {128, 32};
    double dropout_p = 0.2;
    int64_t mc_passes = 50;  // T
    double lr = 1e-3;
    int64_t max_epochs = 200;
    int64_t patience = 20;  // epochs without val-F1 improvement
    int64_t batch = 32;
    double threshold = 0.5;
    uint64_t init_seed = 0;
    std::string feature_source = "encoder";  // encoder | raw; recorded in checkpoints

    std::string arch_json() const;
    void validate() const;
};

// Linear -> BatchNorm -> PReLU -> Dropout per hidden layer, sigmoid output.
struct MlpHead {
    ClassifierConfig cfg;
    std::vector<nn::Linear<float>> linears;  // hidden layers + final
    std::vector<nn::BatchNorm1d<float>> norms;
    std::vector<nn::PReLU<float>> acts;

    MlpHead() = default;
    explicit MlpHead(const ClassifierConfig& config);

    // x: [B, in_dim] -> probabilities [B, 1]. Dropout masks come from the
    // stream; batch norm uses batch stats in train mode, running stats
    // otherwise (MC inference keeps dropout on but norms in eval mode).
    Tensor forward(const Tensor& x, bool train, bool dropout_active, Rng& stream);

    nn::ParamList<float> params();
    std::vector<nn::StateRef<float>> state();
    int64_t flops_per_prediction() const;
};

// -(1/J) sum y log p + (1-y) log(1-p), probabilities clamped to
// [1e-7, 1-1e-7]. probs: [B,1] or [B]; labels 0/1.
Tensor bce_loss(const Tensor& probs, const std::vector<float>& labels);

struct FeatureMatrix {
    std::vector<float> data;  // [n, dim]
    int64_t n = 0;
    int64_t dim = 0;

    const float* row(int64_t i) const { return data.data() + i * dim; }
};

struct FitHistory {
    struct Row {
        int64_t epoch;
        double loss;
        double val_f1;
    };
    std::vector<Row> rows;
    int64_t best_epoch = 0;
    double best_val_f1 = 0.0;
    std::string to_csv() const;
};

// Trains the head only (features are whatever frozen extractor produced).
// Early-stops on best validation F1; the model ends at the best epoch.
// train_rows may be a multiset (oversampled); labels align with features rows.
FitHistory train_classifier(MlpHead& mlp, const FeatureMatrix& features,
                            const std::vector<uint8_t>& labels,
                            const std::vector<int64_t>& train_rows,
                            const std::vector<int64_t>& val_rows, uint64_t seed);

// MC dropout: mean and unbiased sample variance over T stochastic passes.
std::pair<double, double> mc_predict(MlpHead& mlp, const float* feature, int64_t t_passes,
                                     Rng stream);

struct ProspectivityMap {
    MultiBandRaster raster;           // bands: mean, std; NaN where not evaluated
    std::vector<uint8_t> evaluated;   // rows*cols

    double mean_likelihood() const;   // over evaluated pixels
};

// featurize(center_pixels) -> row-major [k, feat_dim] feature block.
using Featurizer = std::function<std::vector<float>(const std::vector<int64_t>&)>;

ProspectivityMap predict_map(const Featurizer& featurize, MlpHead& mlp, int64_t rows,
                             int64_t cols, const GeoTransform& transform, int64_t stride,
                             int64_t t_passes, uint64_t seed);

void save_classifier(const std::string& path, MlpHead& mlp);
MlpHead load_classifier(const std::string& path);

}  // namespace prospectr
