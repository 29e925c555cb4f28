#pragma once

// Orchestration shared by the CLI and the acceptance suite: run-directory
// handling, dataset assembly (positives, similarity scale, per-seed negative
// draws and splits), method training (ours / vit / ann), scoring, and the
// experiment protocols behind each subcommand.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prospectr/clf.hpp"
#include "prospectr/config.hpp"
#include "prospectr/mae.hpp"
#include "prospectr/metrics.hpp"
#include "prospectr/pu.hpp"
#include "prospectr/raster.hpp"
#include "prospectr/synth.hpp"

namespace prospectr::pipeline {

struct RunDir {
    std::string dir;
    std::string path(const std::string& name) const;
    void log(const std::string& line) const;  // appends to log.txt
};

// out non-empty uses it verbatim; otherwise runs/<timestamp>-<name>.
RunDir open_run_dir(const std::string& out, const std::string& name);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
// Echoes the materialized config and the CRC32 of every input file.
void record_run(const RunDir& rd, const RunConfig& cfg,
                const std::vector<std::string>& input_files);

// ---------------------------------------------------------------------------
// dataset assembly

struct DataContext {
    RunConfig cfg;
    const MultiBandRaster* raster = nullptr;
    MaeModel* mae = nullptr;  // null when pu.features == "raw"
    std::vector<int64_t> positives;  // pixel ids
    std::vector<int64_t> unknowns;   // pixel ids
    SimilarityScale scale;

    int64_t raw_dim() const {
        return raster->bands * cfg.raster.window * cfg.raster.window;
    }
};

DataContext build_context(const RunConfig& cfg, const MultiBandRaster& raster,
                          const std::vector<DepositRecord>& records, MaeModel* mae);

struct SeedDataset {
    std::vector<int64_t> ids;      // labeled pixel ids: positives then negatives
    std::vector<uint8_t> labels;   // aligned, 1 = present
    SplitResult split;             // positions into ids
    std::vector<int64_t> train_rows;  // positions, oversampled multiset
};

SeedDataset make_dataset(const DataContext& ctx, uint64_t seed, double filter_range);

// features of the given labeled ids under a method's feature source
FeatureMatrix features_for(const DataContext& ctx, const std::vector<int64_t>& ids,
                           const std::string& source);
// same, but from caller-provided (possibly degraded) windows
FeatureMatrix features_from_windows(const DataContext& ctx, const std::vector<float>& windows,
                                    int64_t n, const std::string& source);

// ---------------------------------------------------------------------------
// methods: "ours" = frozen encoder + MLP, "vit" = same architecture trained
// end to end without pretraining, "ann" = MLP on raw pixels

struct MethodModel {
    std::string method;
    MlpHead mlp;
    std::unique_ptr<MaeModel> own_encoder;  // vit only: the jointly trained encoder

    const MaeModel* encoder(const DataContext& ctx) const {
        return own_encoder ? own_encoder.get() : ctx.mae;
    }
    std::string feature_source() const { return method == "ann" ? "raw" : "encoder"; }
};

MethodModel train_method(const DataContext& ctx, const SeedDataset& ds,
                         const std::string& method, uint64_t seed);

// end-to-end training of encoder + head on labeled windows (the vit baseline)
FitHistory train_end_to_end(MaeModel& encoder, MlpHead& mlp, const DataContext& ctx,
                            const SeedDataset& ds, uint64_t seed);

// MC-mean scores on the test rows; drop_fraction > 0 degrades the test
// windows (whole layers zeroed) before featurizing.
ScoredLabels score_test(const DataContext& ctx, const SeedDataset& ds, MethodModel& model,
                        double drop_fraction, uint64_t seed);

// params and flops-per-prediction of a method's full model
std::pair<int64_t, int64_t> method_complexity(const DataContext& ctx, MethodModel& model);

// ---------------------------------------------------------------------------
// subcommand bodies

void run_synth(const RunConfig& cfg, const RunDir& rd);
void run_preprocess(const RunConfig& cfg, const std::string& raster_path, const RunDir& rd);
void run_pretrain(const RunConfig& cfg, const std::string& raster_path, uint64_t seed,
                  const RunDir& rd);
void run_sample_negatives(const RunConfig& cfg, const std::string& raster_path,
                          const std::string& records_path, const std::string& mae_ckpt,
                          uint64_t seed, const RunDir& rd);
void run_train(const RunConfig& cfg, const std::string& raster_path,
               const std::string& records_path, const std::string& mae_ckpt,
               const std::string& method, uint64_t seed, const RunDir& rd);
void run_predict(const RunConfig& cfg, const std::string& raster_path,
                 const std::string& mae_ckpt, const std::string& clf_ckpt, int64_t stride,
                 int64_t t_passes, uint64_t seed, const RunDir& rd);
void run_explain(const RunConfig& cfg, const std::string& raster_path,
                 const std::string& mae_ckpt, const std::string& clf_ckpt, int64_t band,
                 int64_t steps, int64_t stride, const RunDir& rd);
EvalReport run_evaluate(const RunConfig& cfg, const std::string& raster_path,
                        const std::string& records_path, const std::string& mae_ckpt,
                        const RunDir& rd);
EvalReport run_ablate_sparsity(const RunConfig& cfg, const std::string& raster_path,
                               const std::string& records_path, const std::string& mae_ckpt,
                               double drop_fraction, const RunDir& rd);

struct FilterRangeRow {
    double filter_range;
    MetricRow mean;  // over seeds
    double map_mean_likelihood;
};
std::vector<FilterRangeRow> run_ablate_filter_range(const RunConfig& cfg,
                                                    const std::string& raster_path,
                                                    const std::string& records_path,
                                                    const std::string& mae_ckpt,
                                                    const RunDir& rd);

void run_report(const std::string& source_run_dir, const RunDir& rd);

}  // namespace prospectr::pipeline
