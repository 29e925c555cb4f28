// prospectr: self-supervised prospectivity mapping on multi-band rasters.
// Subcommands cover the full protocol: synthetic world generation,
// preprocessing, masked-image pretraining, likely-negative sampling,
// classifier training, map prediction, attribution, evaluation, and the
// two ablations.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "prospectr/parallel.hpp"
#include "prospectr/pipeline.hpp"

using namespace prospectr;

namespace {

struct Common {
    std::string config_path;
    std::string out;
    uint64_t seed = 0;
    int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "run configuration JSON");
    cmd->add_option("--out", c.out, "run directory (default runs/<timestamp>-<name>)");
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--threads", c.threads, "worker threads (PROSPECTR_THREADS fallback)");
}

RunConfig load_config(const Common& c) {
    if (c.config_path.empty()) return RunConfig{};
    return RunConfig::from_file(c.config_path);
}

pipeline::RunDir start(const Common& c, const RunConfig& cfg, const std::string& name,
                       const std::vector<std::string>& inputs) {
    if (c.threads > 0) set_thread_count(c.threads);
    pipeline::RunDir rd = pipeline::open_run_dir(c.out, name);
    pipeline::record_run(rd, cfg, inputs);
    return rd;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised mineral prospectivity mapping"};
    app.require_subcommand(1);

    Common c_synth, c_prep, c_pre, c_neg, c_train, c_pred, c_expl, c_eval, c_spars, c_filt,
        c_rep;
    std::string raster_path, records_path, mae_ckpt, clf_ckpt, method = "ours";
    std::string report_src;
    bool no_pretrain = false;
    std::string features_flag, arch_flag;
    int64_t stride = 0, mc_passes = 0, ig_steps = 0, band = 0;
    double filter_range = -1.0, drop_fraction = -1.0, threshold = -1.0;

    auto* synth = app.add_subcommand("synth", "generate the synthetic world");
    add_common(synth, c_synth);

    auto* prep = app.add_subcommand("preprocess", "clean and standardize a raster");
    add_common(prep, c_prep);
    prep->add_option("--raster", raster_path, "input .mbr")->required();

    auto* pre = app.add_subcommand("pretrain", "masked-image pretraining");
    add_common(pre, c_pre);
    pre->add_option("--raster", raster_path, "preprocessed .mbr")->required();

    auto* neg = app.add_subcommand("sample-negatives", "build the likely-negative labels");
    add_common(neg, c_neg);
    neg->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    neg->add_option("--records", records_path, "deposit records CSV")->required();
    neg->add_option("--mae", mae_ckpt, "pretrained checkpoint");
    neg->add_option("--filter-range", filter_range, "override pu.filter_range");

    auto* train = app.add_subcommand("train", "train a prospectivity classifier");
    add_common(train, c_train);
    train->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    train->add_option("--records", records_path, "deposit records CSV")->required();
    train->add_option("--mae", mae_ckpt, "pretrained checkpoint");
    train->add_option("--method", method, "ours | vit | ann");
    train->add_flag("--no-pretrain", no_pretrain,
                    "train the same architecture end to end (the vit baseline)");
    train->add_option("--features", features_flag, "raw selects the pixel-MLP baseline");
    train->add_option("--arch", arch_flag, "mlp with --features=raw selects the ann baseline");
    train->add_option("--filter-range", filter_range, "override pu.filter_range");

    auto* pred = app.add_subcommand("predict", "prospectivity mean/std maps");
    add_common(pred, c_pred);
    pred->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    pred->add_option("--mae", mae_ckpt, "pretrained checkpoint");
    pred->add_option("--clf", clf_ckpt, "trained classifier checkpoint")->required();
    pred->add_option("--stride", stride, "evaluate every stride-th pixel");
    pred->add_option("--mc-passes", mc_passes, "stochastic passes T");

    auto* expl = app.add_subcommand("explain", "integrated-gradients attribution maps");
    add_common(expl, c_expl);
    expl->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    expl->add_option("--mae", mae_ckpt, "pretrained checkpoint");
    expl->add_option("--clf", clf_ckpt, "trained classifier checkpoint")->required();
    expl->add_option("--band", band, "explanatory layer index");
    expl->add_option("--ig-steps", ig_steps, "path integral steps");
    expl->add_option("--stride", stride, "attribute every stride-th pixel");

    auto* eval = app.add_subcommand("evaluate", "multi-seed evaluation with significance");
    add_common(eval, c_eval);
    eval->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    eval->add_option("--records", records_path, "deposit records CSV")->required();
    eval->add_option("--mae", mae_ckpt, "pretrained checkpoint");
    eval->add_option("--threshold", threshold, "decision threshold");

    auto* spars = app.add_subcommand("ablate-sparsity", "test-time feature-dropping ablation");
    add_common(spars, c_spars);
    spars->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    spars->add_option("--records", records_path, "deposit records CSV")->required();
    spars->add_option("--mae", mae_ckpt, "pretrained checkpoint")->required();
    spars->add_option("--drop-fraction", drop_fraction, "fraction of layers zeroed");

    auto* filt = app.add_subcommand("ablate-filter-range", "likely-negative range ablation");
    add_common(filt, c_filt);
    filt->add_option("--raster", raster_path, "preprocessed .mbr")->required();
    filt->add_option("--records", records_path, "deposit records CSV")->required();
    filt->add_option("--mae", mae_ckpt, "pretrained checkpoint")->required();

    auto* rep = app.add_subcommand("report", "assemble a summary from run artifacts");
    add_common(rep, c_rep);
    rep->add_option("--run", report_src, "source run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            RunConfig cfg = load_config(c_synth);
            auto rd = start(c_synth, cfg, "synth", {});
            pipeline::run_synth(cfg, rd);
        } else if (prep->parsed()) {
            RunConfig cfg = load_config(c_prep);
            auto rd = start(c_prep, cfg, "preprocess", {raster_path});
            pipeline::run_preprocess(cfg, raster_path, rd);
        } else if (pre->parsed()) {
            RunConfig cfg = load_config(c_pre);
            auto rd = start(c_pre, cfg, "pretrain", {raster_path});
            pipeline::run_pretrain(cfg, raster_path, c_pre.seed, rd);
        } else if (neg->parsed()) {
            RunConfig cfg = load_config(c_neg);
            if (filter_range >= 0.0) cfg.pu.filter_range = filter_range;
            std::vector<std::string> inputs = {raster_path, records_path};
            if (!mae_ckpt.empty()) inputs.push_back(mae_ckpt);
            auto rd = start(c_neg, cfg, "sample-negatives", inputs);
            pipeline::run_sample_negatives(cfg, raster_path, records_path, mae_ckpt,
                                           c_neg.seed, rd);
        } else if (train->parsed()) {
            RunConfig cfg = load_config(c_train);
            if (filter_range >= 0.0) cfg.pu.filter_range = filter_range;
            if (no_pretrain) method = "vit";
            if (features_flag == "raw") {
                if (!arch_flag.empty() && arch_flag != "mlp")
                    throw ConfigError("--features=raw supports --arch=mlp only");
                method = "ann";
                cfg.pu.features = "raw";
            }
            if (method != "ours" && method != "vit" && method != "ann")
                throw ConfigError("--method must be ours, vit, or ann");
            std::vector<std::string> inputs = {raster_path, records_path};
            if (!mae_ckpt.empty()) inputs.push_back(mae_ckpt);
            auto rd = start(c_train, cfg, "train-" + method, inputs);
            pipeline::run_train(cfg, raster_path, records_path, mae_ckpt, method,
                                c_train.seed, rd);
        } else if (pred->parsed()) {
            RunConfig cfg = load_config(c_pred);
            std::vector<std::string> inputs = {raster_path, clf_ckpt};
            if (!mae_ckpt.empty()) inputs.push_back(mae_ckpt);
            auto rd = start(c_pred, cfg, "predict", inputs);
            pipeline::run_predict(cfg, raster_path, mae_ckpt, clf_ckpt,
                                  stride > 0 ? stride : cfg.eval.stride,
                                  mc_passes > 0 ? mc_passes : cfg.clf.mc_passes, c_pred.seed,
                                  rd);
        } else if (expl->parsed()) {
            RunConfig cfg = load_config(c_expl);
            std::vector<std::string> inputs = {raster_path, clf_ckpt};
            if (!mae_ckpt.empty()) inputs.push_back(mae_ckpt);
            auto rd = start(c_expl, cfg, "explain", inputs);
            pipeline::run_explain(cfg, raster_path, mae_ckpt, clf_ckpt,
                                  band ? band : cfg.xai.band,
                                  ig_steps > 0 ? ig_steps : cfg.xai.steps,
                                  stride > 0 ? stride : cfg.xai.stride, rd);
        } else if (eval->parsed()) {
            RunConfig cfg = load_config(c_eval);
            if (threshold > 0.0) cfg.clf.threshold = threshold;
            std::vector<std::string> inputs = {raster_path, records_path};
            if (!mae_ckpt.empty()) inputs.push_back(mae_ckpt);
            auto rd = start(c_eval, cfg, "evaluate", inputs);
            pipeline::run_evaluate(cfg, raster_path, records_path, mae_ckpt, rd);
        } else if (spars->parsed()) {
            RunConfig cfg = load_config(c_spars);
            auto rd = start(c_spars, cfg, "ablate-sparsity",
                            {raster_path, records_path, mae_ckpt});
            pipeline::run_ablate_sparsity(
                cfg, raster_path, records_path, mae_ckpt,
                drop_fraction >= 0.0 ? drop_fraction : cfg.eval.drop_fraction, rd);
        } else if (filt->parsed()) {
            RunConfig cfg = load_config(c_filt);
            auto rd = start(c_filt, cfg, "ablate-filter-range",
                            {raster_path, records_path, mae_ckpt});
            pipeline::run_ablate_filter_range(cfg, raster_path, records_path, mae_ckpt, rd);
        } else if (rep->parsed()) {
            RunConfig cfg = load_config(c_rep);
            auto rd = start(c_rep, cfg, "report", {});
            pipeline::run_report(report_src, rd);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
