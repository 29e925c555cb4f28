#include "prospectr/pipeline.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "prospectr/image.hpp"
#include "prospectr/xai.hpp"

namespace prospectr::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// run directories

std::string RunDir::path(const std::string& name) const { return dir + "/" + name; }

void RunDir::log(const std::string& line) const {
    std::ofstream os(path("log.txt"), std::ios::app);
    os << line << "\n";
}

RunDir open_run_dir(const std::string& out, const std::string& name) {
    RunDir rd;
    if (!out.empty()) {
        rd.dir = out;
    } else {
        const auto now = std::chrono::system_clock::now();
        const auto secs =
            std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
        rd.dir = "runs/" + std::to_string(secs) + "-" + name;
    }
    fs::create_directories(rd.dir);
    return rd;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << content;
    if (!os) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

namespace {

uint32_t file_crc32(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open for hashing: " + path);
    uint32_t crc = static_cast<uint32_t>(crc32(0L, nullptr, 0));
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        crc = static_cast<uint32_t>(crc32(crc, reinterpret_cast<const Bytef*>(buf),
                                          static_cast<uInt>(is.gcount())));
    }
    return crc;
}

}  // namespace

void record_run(const RunDir& rd, const RunConfig& cfg,
                const std::vector<std::string>& input_files) {
    write_text_file(rd.path("config_echo.json"), cfg.to_json());
    json inputs = json::object();
    for (const auto& f : input_files)
        inputs[f] = {{"crc32", file_crc32(f)},
                     {"bytes", static_cast<int64_t>(fs::file_size(f))}};
    write_text_file(rd.path("inputs.json"), inputs.dump(2));
}

// ---------------------------------------------------------------------------
// dataset assembly

DataContext build_context(const RunConfig& cfg, const MultiBandRaster& raster,
                          const std::vector<DepositRecord>& records, MaeModel* mae) {
    DataContext ctx;
    ctx.cfg = cfg;
    ctx.raster = &raster;
    ctx.mae = mae;
    if (cfg.pu.features == "encoder" && mae == nullptr)
        throw ConfigError("pu.features=encoder requires a pretrained checkpoint");

    auto rr = rasterize_records(records, raster.transform, raster.rows, raster.cols,
                                &raster.nodata);
    ctx.positives = rr.labels.pixels_with(Label::Present);
    if (ctx.positives.empty()) throw DataError("no deposit record lies inside the raster");
    ctx.unknowns = rr.labels.pixels_with(Label::Unknown);

    const std::string src = cfg.pu.features;
    FeatureMatrix unk = features_for(ctx, ctx.unknowns, src);
    FeatureMatrix pos = features_for(ctx, ctx.positives, src);
    ctx.scale = similarity_scale(unk.data, ctx.unknowns, pos.data, pos.n, pos.dim,
                                 cfg.pu.metric);
    return ctx;
}

FeatureMatrix features_for(const DataContext& ctx, const std::vector<int64_t>& ids,
                           const std::string& source) {
    FeatureMatrix fm;
    fm.n = static_cast<int64_t>(ids.size());
    const int64_t w = ctx.cfg.raster.window;
    if (source == "raw") {
        fm.dim = ctx.raw_dim();
        fm.data = extract_windows(*ctx.raster, ids, w);
        return fm;
    }
    if (source != "encoder") throw ConfigError("unknown feature source: " + source);
    if (!ctx.mae) throw ConfigError("encoder features requested without a checkpoint");
    fm.dim = ctx.mae->cfg.enc_dim;
    fm.data = extract_features(*ctx.mae, *ctx.raster, ids);
    return fm;
}

FeatureMatrix features_from_windows(const DataContext& ctx, const std::vector<float>& windows,
                                    int64_t n, const std::string& source) {
    FeatureMatrix fm;
    fm.n = n;
    if (source == "raw") {
        fm.dim = ctx.raw_dim();
        fm.data = windows;
        return fm;
    }
    if (source != "encoder") throw ConfigError("unknown feature source: " + source);
    if (!ctx.mae) throw ConfigError("encoder features requested without a checkpoint");
    fm.dim = ctx.mae->cfg.enc_dim;
    fm.data = extract_features_from_windows(*ctx.mae, windows, n);
    return fm;
}

SeedDataset make_dataset(const DataContext& ctx, uint64_t seed, double filter_range) {
    SeedDataset ds;
    const int64_t n_neg = ctx.cfg.pu.n_negatives < 0
                              ? static_cast<int64_t>(ctx.positives.size())
                              : ctx.cfg.pu.n_negatives;
    Rng neg_rng(seed, 0x4E6ull);
    auto negatives = select_negatives(ctx.scale, filter_range, n_neg, neg_rng);

    ds.ids = ctx.positives;
    ds.labels.assign(ctx.positives.size(), 1);
    ds.ids.insert(ds.ids.end(), negatives.begin(), negatives.end());
    ds.labels.resize(ds.ids.size(), 0);

    ds.split = split_80_10_10(ds.ids, ds.labels, seed);

    if (ctx.cfg.pu.oversample) {
        std::vector<int64_t> tr_pos, tr_neg;
        for (int64_t row : ds.split.train)
            (ds.labels[static_cast<size_t>(row)] ? tr_pos : tr_neg).push_back(row);
        Rng os_rng(seed, 0x0E52ull);
        BalancedSet bal = balance_oversample(tr_pos, tr_neg, os_rng);
        ds.train_rows = bal.ids;
    } else {
        ds.train_rows = ds.split.train;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// method training

namespace {

ClassifierConfig head_config(const RunConfig& cfg, int64_t in_dim, uint64_t seed,
                             const std::string& source) {
    ClassifierConfig c = cfg.clf;
    c.in_dim = in_dim;
    c.init_seed = seed;
    c.feature_source = source;
    return c;
}

std::vector<float> snapshot_all(nn::ParamList<float>& params) {
    std::vector<float> flat;
    for (auto& p : params)
        flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
    return flat;
}

void restore_all(nn::ParamList<float>& params, const std::vector<float>& flat) {
    size_t off = 0;
    for (auto& p : params) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p.tensor.data().size()),
                  p.tensor.data().begin());
        off += p.tensor.data().size();
    }
}

}  // namespace

FitHistory train_end_to_end(MaeModel& encoder, MlpHead& mlp, const DataContext& ctx,
                            const SeedDataset& ds, uint64_t seed) {
    const int64_t w = ctx.cfg.raster.window;
    Rng root(seed, 0xE2Eull);

    nn::ParamList<float> params = encoder.encoder_params();
    {
        nn::ParamList<float> head = mlp.params();
        params.insert(params.end(), head.begin(), head.end());
    }
    nn::Adam<float> opt(params, static_cast<float>(mlp.cfg.lr));

    auto batch_windows = [&](const std::vector<int64_t>& rows) {
        std::vector<int64_t> centers;
        for (int64_t r : rows) centers.push_back(ds.ids[static_cast<size_t>(r)]);
        return extract_windows(*ctx.raster, centers, w);
    };

    auto val_f1 = [&]() {
        if (ds.split.val.empty()) return 0.0;
        NoGradGuard ng;
        std::vector<float> buf = batch_windows(ds.split.val);
        Tensor x = Tensor::from_data({static_cast<int64_t>(ds.split.val.size()),
                                      ctx.raster->bands, w, w},
                                     std::move(buf));
        Rng unused(0);
        Tensor p = mlp.forward(encoder.features(x), false, false, unused);
        ConfusionCounts c;
        for (size_t i = 0; i < ds.split.val.size(); ++i) {
            const bool pred = p.data()[i] >= static_cast<float>(mlp.cfg.threshold);
            const bool truth = ds.labels[static_cast<size_t>(ds.split.val[i])] != 0;
            if (pred && truth) ++c.tp;
            else if (pred) ++c.fp;
            else if (truth) ++c.fn;
            else ++c.tn;
        }
        return f1(c);
    };

    const bool early_stop = !ds.split.val.empty();
    FitHistory hist;
    hist.best_val_f1 = -1.0;
    std::vector<float> best = snapshot_all(params);
    std::vector<float> bn_best;  // batch-norm running stats travel with the weights
    for (auto& s : mlp.state()) bn_best.insert(bn_best.end(), s.vec->begin(), s.vec->end());
    int64_t since_best = 0;

    for (int64_t epoch = 1; epoch <= mlp.cfg.max_epochs; ++epoch) {
        std::vector<int64_t> order(ds.train_rows);
        Rng order_rng = root.split(static_cast<uint64_t>(epoch));
        order_rng.shuffle(order);

        double loss_acc = 0.0;
        int64_t loss_n = 0;
        for (size_t s = 0; s < order.size(); s += static_cast<size_t>(mlp.cfg.batch)) {
            const int64_t bsz =
                std::min<int64_t>(mlp.cfg.batch, static_cast<int64_t>(order.size() - s));
            if (bsz < 2) break;
            std::vector<int64_t> rows(order.begin() + static_cast<std::ptrdiff_t>(s),
                                      order.begin() + static_cast<std::ptrdiff_t>(s) + bsz);
            std::vector<float> buf = batch_windows(rows);
            std::vector<float> y;
            for (int64_t r : rows)
                y.push_back(static_cast<float>(ds.labels[static_cast<size_t>(r)]));
            Tensor x =
                Tensor::from_data({bsz, ctx.raster->bands, w, w}, std::move(buf));
            Rng drop = root.split(0xD0ull + static_cast<uint64_t>(epoch) * 1000 +
                                  static_cast<uint64_t>(s));
            opt.zero_grad();
            Tensor p = mlp.forward(encoder.features(x), true, true, drop);
            Tensor loss = bce_loss(p, y);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericError("end-to-end training diverged at epoch " +
                                   std::to_string(epoch));
            loss.backward();
            opt.step();
            loss_acc += lv * static_cast<double>(bsz);
            loss_n += bsz;
        }

        const double vf1 = val_f1();
        hist.rows.push_back({epoch, loss_n ? loss_acc / loss_n : 0.0, vf1});
        if (!early_stop) {
            hist.best_epoch = epoch;
            continue;
        }
        if (vf1 > hist.best_val_f1) {
            hist.best_val_f1 = vf1;
            hist.best_epoch = epoch;
            best = snapshot_all(params);
            bn_best.clear();
            for (auto& st : mlp.state())
                bn_best.insert(bn_best.end(), st.vec->begin(), st.vec->end());
            since_best = 0;
        } else if (++since_best >= mlp.cfg.patience) {
            break;
        }
    }
    if (early_stop) {
        restore_all(params, best);
        size_t off = 0;
        for (auto& st : mlp.state()) {
            std::copy(bn_best.begin() + static_cast<std::ptrdiff_t>(off),
                      bn_best.begin() + static_cast<std::ptrdiff_t>(off + st.vec->size()),
                      st.vec->begin());
            off += st.vec->size();
        }
    }
    return hist;
}

MethodModel train_method(const DataContext& ctx, const SeedDataset& ds,
                         const std::string& method, uint64_t seed) {
    MethodModel mm;
    mm.method = method;

    if (method == "ours" || method == "ann") {
        const std::string src = method == "ann" ? "raw" : "encoder";
        FeatureMatrix feats = features_for(ctx, ds.ids, src);
        mm.mlp = MlpHead(head_config(ctx.cfg, feats.dim, seed, src));
        train_classifier(mm.mlp, feats, ds.labels, ds.train_rows, ds.split.val, seed);
        return mm;
    }
    if (method == "vit") {
        MaeConfig mc = ctx.cfg.mae;
        mc.bands = ctx.raster->bands;
        mc.window = ctx.cfg.raster.window;
        mc.init_seed = seed;  // fresh random encoder, no pretraining
        mm.own_encoder = std::make_unique<MaeModel>(mc);
        mm.mlp = MlpHead(head_config(ctx.cfg, mc.enc_dim, seed, "encoder"));
        train_end_to_end(*mm.own_encoder, mm.mlp, ctx, ds, seed);
        return mm;
    }
    throw ConfigError("unknown method: " + method);
}

ScoredLabels score_test(const DataContext& ctx, const SeedDataset& ds, MethodModel& model,
                        double drop_fraction, uint64_t seed) {
    const int64_t w = ctx.cfg.raster.window;
    std::vector<int64_t> centers;
    for (int64_t r : ds.split.test) centers.push_back(ds.ids[static_cast<size_t>(r)]);
    std::vector<float> windows = extract_windows(*ctx.raster, centers, w);
    const int64_t n = static_cast<int64_t>(centers.size());
    if (drop_fraction > 0.0) {
        Rng drop_rng(seed, 0xD40Full);
        degrade_features(windows, n, ctx.raster->bands, w, drop_fraction, drop_rng);
    }

    FeatureMatrix feats;
    if (model.method == "vit") {
        feats.n = n;
        feats.dim = model.own_encoder->cfg.enc_dim;
        feats.data = extract_features_from_windows(*model.own_encoder, windows, n);
    } else {
        feats = features_from_windows(ctx, windows, n, model.feature_source());
    }

    ScoredLabels out;
    Rng mc_root(seed, 0x5C03Eull);
    for (int64_t i = 0; i < n; ++i) {
        auto [m, v] = mc_predict(model.mlp, feats.row(i), ctx.cfg.clf.mc_passes,
                                 mc_root.split(static_cast<uint64_t>(centers[static_cast<size_t>(i)])));
        (void)v;
        out.scores.push_back(m);
        out.labels.push_back(ds.labels[static_cast<size_t>(ds.split.test[static_cast<size_t>(i)])] != 0);
    }
    return out;
}

std::pair<int64_t, int64_t> method_complexity(const DataContext& ctx, MethodModel& model) {
    int64_t params = 0, flops = 0;
    nn::ParamList<float> head = model.mlp.params();
    params += nn::count_params(head);
    flops += model.mlp.flops_per_prediction();
    if (model.method != "ann") {
        const MaeModel* enc = model.encoder(ctx);
        nn::ParamList<float> ep = const_cast<MaeModel*>(enc)->encoder_params();
        params += nn::count_params(ep);
        flops += enc->encoder_flops_per_sample();
    }
    return {params, flops};
}

// ---------------------------------------------------------------------------
// subcommands

void run_synth(const RunConfig& cfg, const RunDir& rd) {
    World world = generate_world(cfg.synth);
    save_raster(world.raster, rd.path("world.mbr"));
    save_raster(world.truth, rd.path("truth.mbr"));
    save_records_csv(world.records, rd.path("deposits.csv"));
    Image8 quicklook = render_raster(world.truth.data, world.truth.rows, world.truth.cols,
                                     MapStyle::HeatOverGray);
    write_png(rd.path("truth.png"), quicklook);
    rd.log("synth: " + std::to_string(world.raster.bands) + " bands " +
           std::to_string(world.raster.rows) + "x" + std::to_string(world.raster.cols) +
           ", " + std::to_string(world.records.size()) + " deposits");
}

void run_preprocess(const RunConfig& cfg, const std::string& raster_path, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    PreprocessReport rep;
    MultiBandRaster out = run_pipeline(raster, cfg.preprocess, &rep);
    save_raster(out, rd.path("preprocessed.mbr"));
    write_text_file(rd.path("preprocess_report.json"), rep.to_json());
    rd.log("preprocess: " + std::to_string(rep.bands_in) + " bands in, " +
           std::to_string(rep.bands_out) + " out");
}

void run_pretrain(const RunConfig& cfg, const std::string& raster_path, uint64_t seed,
                  const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    MaeConfig mc = cfg.mae;
    mc.bands = raster.bands;
    mc.window = cfg.raster.window;
    mc.init_seed = seed;
    MaeModel model(mc);
    PretrainConfig pc = cfg.pretrain;
    pc.seed = seed;
    if (pc.dump_every > 0) pc.dump_dir = rd.path("recon");
    PretrainResult res = pretrain(model, raster, pc);
    save_mae(rd.path("mae.ckpt"), model);
    write_text_file(rd.path("history.csv"), res.history_csv());
    rd.log("pretrain: best epoch " + std::to_string(res.best_epoch) + " psnr " +
           std::to_string(res.best_psnr));
}

void run_sample_negatives(const RunConfig& cfg, const std::string& raster_path,
                          const std::string& records_path, const std::string& mae_ckpt,
                          uint64_t seed, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    auto records = load_records_csv(records_path);
    std::unique_ptr<MaeModel> mae;
    if (cfg.pu.features == "encoder") mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
    DataContext ctx = build_context(cfg, raster, records, mae.get());

    const int64_t n_neg = cfg.pu.n_negatives < 0
                              ? static_cast<int64_t>(ctx.positives.size())
                              : cfg.pu.n_negatives;
    Rng rng(seed, 0x4E6ull);
    auto negatives = select_negatives(ctx.scale, cfg.pu.filter_range, n_neg, rng);

    LabelRaster labels(raster.rows, raster.cols);
    for (int64_t p : ctx.positives) labels.labels[static_cast<size_t>(p)] = Label::Present;
    for (int64_t p : negatives) labels.labels[static_cast<size_t>(p)] = Label::Absent;
    save_labels(labels, raster.transform, rd.path("labels.mbr"));
    write_text_file(rd.path("similarity_scale.csv"), ctx.scale.to_csv(raster.cols));
    std::string neg_csv = "sample_id,row,col\n";
    for (int64_t p : negatives)
        neg_csv += std::to_string(p) + "," + std::to_string(p / raster.cols) + "," +
                   std::to_string(p % raster.cols) + "\n";
    write_text_file(rd.path("negatives.csv"), neg_csv);
    rd.log("sample-negatives: " + std::to_string(ctx.positives.size()) + " positives, " +
           std::to_string(negatives.size()) + " negatives, filter " +
           std::to_string(cfg.pu.filter_range));
}

void run_train(const RunConfig& cfg, const std::string& raster_path,
               const std::string& records_path, const std::string& mae_ckpt,
               const std::string& method, uint64_t seed, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    auto records = load_records_csv(records_path);
    std::unique_ptr<MaeModel> mae;
    if (cfg.pu.features == "encoder" || method == "ours")
        mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
    DataContext ctx = build_context(cfg, raster, records, mae.get());
    SeedDataset ds = make_dataset(ctx, seed, cfg.pu.filter_range);

    MethodModel mm = train_method(ctx, ds, method, seed);
    save_classifier(rd.path("clf.ckpt"), mm.mlp);
    if (mm.own_encoder) save_mae(rd.path("encoder.ckpt"), *mm.own_encoder);

    ScoredLabels test = score_test(ctx, ds, mm, 0.0, seed);
    MetricRow row = compute_metrics(test, cfg.clf.threshold, seed);
    json jt = {{"seed", seed},     {"method", method},   {"f1", row.f1},
               {"mcc", row.mcc},   {"auprc", row.auprc}, {"bacc", row.bacc},
               {"auroc", row.auroc}, {"acc", row.acc}};
    write_text_file(rd.path("test_metrics.json"), jt.dump(2));

    json split = {{"ids", ds.ids},
                  {"labels", ds.labels},
                  {"train_rows", ds.train_rows},
                  {"val_rows", ds.split.val},
                  {"test_rows", ds.split.test}};
    write_text_file(rd.path("split.json"), split.dump(2));
    rd.log("train[" + method + "] seed " + std::to_string(seed) + ": test F1 " +
           std::to_string(row.f1));
}

void run_predict(const RunConfig& cfg, const std::string& raster_path,
                 const std::string& mae_ckpt, const std::string& clf_ckpt, int64_t stride,
                 int64_t t_passes, uint64_t seed, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    MlpHead mlp = load_classifier(clf_ckpt);
    std::unique_ptr<MaeModel> mae;
    Featurizer featurize;
    const int64_t w = cfg.raster.window;
    if (mlp.cfg.feature_source == "encoder") {
        mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
        featurize = [&](const std::vector<int64_t>& centers) {
            return extract_features(*mae, raster, centers);
        };
    } else {
        featurize = [&](const std::vector<int64_t>& centers) {
            return extract_windows(raster, centers, w);
        };
    }
    ProspectivityMap map = predict_map(featurize, mlp, raster.rows, raster.cols,
                                       raster.transform, stride, t_passes, seed);
    map.raster.nodata.assign(map.evaluated.size(), 0);
    for (size_t i = 0; i < map.evaluated.size(); ++i)
        map.raster.nodata[i] = map.evaluated[i] ? 0 : 1;
    save_raster(map.raster, rd.path("prospectivity.mbr"));

    std::vector<float> mean_plane(map.raster.plane_data(0),
                                  map.raster.plane_data(0) + map.raster.plane());
    std::vector<float> std_plane(map.raster.plane_data(1),
                                 map.raster.plane_data(1) + map.raster.plane());
    write_png(rd.path("prospectivity.png"),
              render_raster(mean_plane, raster.rows, raster.cols, MapStyle::HeatOverGray,
                            &std_plane, &map.evaluated));
    write_png(rd.path("prospectivity_quantiles.png"),
              render_raster(mean_plane, raster.rows, raster.cols, MapStyle::Quantile5,
                            nullptr, &map.evaluated));
    rd.log("predict: stride " + std::to_string(stride) + ", T " + std::to_string(t_passes) +
           ", mean likelihood " + std::to_string(map.mean_likelihood()));
}

void run_explain(const RunConfig& cfg, const std::string& raster_path,
                 const std::string& mae_ckpt, const std::string& clf_ckpt, int64_t band,
                 int64_t steps, int64_t stride, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    MlpHead mlp = load_classifier(clf_ckpt);
    std::unique_ptr<MaeModel> mae;
    if (mlp.cfg.feature_source == "encoder")
        mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));

    const int64_t w = cfg.raster.window;
    // deterministic prediction path: dropout off, norms in eval mode
    BatchScalarFn f = [&](const Tensor& x) -> Tensor {
        Rng unused(0);
        Tensor feats;
        if (mae) {
            feats = mae->features(x);
        } else {
            feats = reshape(x, {x.dim(0), mlp.cfg.in_dim});
        }
        return reshape(mlp.forward(feats, false, false, unused), {x.dim(0)});
    };

    std::vector<int64_t> pixels;
    for (int64_t r = 0; r < raster.rows; r += stride)
        for (int64_t c = 0; c < raster.cols; c += stride)
            pixels.push_back(r * raster.cols + c);

    MultiBandRaster amap = attribution_map(f, raster, w, band, pixels, steps);
    save_raster(amap, rd.path("attribution.mbr"));
    std::vector<uint8_t> valid(amap.data.size(), 0);
    for (size_t i = 0; i < amap.data.size(); ++i)
        valid[i] = std::isfinite(amap.data[i]) ? 1 : 0;
    write_png(rd.path("attribution.png"),
              render_raster(amap.data, raster.rows, raster.cols, MapStyle::SignedGreen,
                            nullptr, &valid));

    // detailed dump for the first attributed pixel
    Sample s0 = window_at(raster, pixels[0] / raster.cols, pixels[0] % raster.cols, w);
    Attribution attr = integrated_gradients(f, {raster.bands, w, w}, s0.window, {}, steps);
    write_text_file(rd.path("attribution_pixel0.json"), attr.to_json());
    rd.log("explain: band " + std::to_string(band) + ", " + std::to_string(pixels.size()) +
           " pixels, completeness gap " + std::to_string(attr.completeness_gap));
}

namespace {

void fill_significance(EvalReport& report) {
    if (report.rows.size() < 2) return;
    const std::vector<std::pair<std::string, double MetricRow::*>> metrics = {
        {"f1", &MetricRow::f1},     {"mcc", &MetricRow::mcc},
        {"auprc", &MetricRow::auprc}, {"bacc", &MetricRow::bacc},
        {"auroc", &MetricRow::auroc}, {"acc", &MetricRow::acc}};
    for (const auto& [name, member] : metrics) {
        TrialTable t;
        for (const auto& [method, rows] : report.rows) {
            t.names.push_back(method);
            std::vector<double> vals;
            for (const auto& r : rows) vals.push_back(r.*member);
            t.values.push_back(std::move(vals));
        }
        try {
            report.anova[name] = anova_oneway(t);
            report.tukey[name] = tukey_hsd(t, 0.05);
        } catch (const Error&) {
            // degenerate groups (zero within-variance); leave this metric out
        }
    }
}

}  // namespace

EvalReport run_evaluate(const RunConfig& cfg, const std::string& raster_path,
                        const std::string& records_path, const std::string& mae_ckpt,
                        const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    auto records = load_records_csv(records_path);
    std::unique_ptr<MaeModel> mae;
    bool needs_encoder = cfg.pu.features == "encoder";
    for (const auto& m : cfg.eval.methods) needs_encoder = needs_encoder || m == "ours";
    if (needs_encoder) mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
    DataContext ctx = build_context(cfg, raster, records, mae.get());

    EvalReport report;
    report.threshold = cfg.clf.threshold;
    for (const auto& method : cfg.eval.methods) {
        for (uint64_t seed : cfg.seeds) {
            SeedDataset ds = make_dataset(ctx, seed, cfg.pu.filter_range);
            MethodModel mm = train_method(ctx, ds, method, seed);
            ScoredLabels test = score_test(ctx, ds, mm, 0.0, seed);
            report.rows[method].push_back(compute_metrics(test, cfg.clf.threshold, seed));
            if (!report.complexity.count(method))
                report.complexity[method] = method_complexity(ctx, mm);
            rd.log("evaluate[" + method + "] seed " + std::to_string(seed) + ": F1 " +
                   std::to_string(report.rows[method].back().f1));
        }
    }
    fill_significance(report);
    write_text_file(rd.path("eval_report.json"), report.to_json());
    write_text_file(rd.path("eval_report.csv"), report.to_csv());
    return report;
}

EvalReport run_ablate_sparsity(const RunConfig& cfg, const std::string& raster_path,
                               const std::string& records_path, const std::string& mae_ckpt,
                               double drop_fraction, const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    auto records = load_records_csv(records_path);
    std::unique_ptr<MaeModel> mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
    DataContext ctx = build_context(cfg, raster, records, mae.get());

    EvalReport report;
    report.threshold = cfg.clf.threshold;
    for (const auto& method : cfg.eval.methods) {
        for (uint64_t seed : cfg.seeds) {
            SeedDataset ds = make_dataset(ctx, seed, cfg.pu.filter_range);
            MethodModel mm = train_method(ctx, ds, method, seed);
            ScoredLabels test = score_test(ctx, ds, mm, drop_fraction, seed);
            report.rows[method].push_back(compute_metrics(test, cfg.clf.threshold, seed));
            if (!report.complexity.count(method))
                report.complexity[method] = method_complexity(ctx, mm);
            rd.log("ablate-sparsity[" + method + "] seed " + std::to_string(seed) +
                   ": F1 " + std::to_string(report.rows[method].back().f1));
        }
    }
    fill_significance(report);
    write_text_file(rd.path("sparsity_report.json"), report.to_json());
    write_text_file(rd.path("sparsity_report.csv"), report.to_csv());
    return report;
}

std::vector<FilterRangeRow> run_ablate_filter_range(const RunConfig& cfg,
                                                    const std::string& raster_path,
                                                    const std::string& records_path,
                                                    const std::string& mae_ckpt,
                                                    const RunDir& rd) {
    MultiBandRaster raster = load_raster(raster_path);
    auto records = load_records_csv(records_path);
    std::unique_ptr<MaeModel> mae = std::make_unique<MaeModel>(load_mae(mae_ckpt));
    DataContext ctx = build_context(cfg, raster, records, mae.get());

    // map features are frozen-encoder outputs: compute the strided grid once
    std::vector<int64_t> map_centers;
    for (int64_t r = 0; r < raster.rows; r += cfg.eval.stride)
        for (int64_t c = 0; c < raster.cols; c += cfg.eval.stride)
            map_centers.push_back(r * raster.cols + c);
    std::vector<float> map_feats = extract_features(*mae, raster, map_centers);
    std::unordered_map<int64_t, int64_t> map_row;
    for (size_t i = 0; i < map_centers.size(); ++i)
        map_row[map_centers[i]] = static_cast<int64_t>(i);
    const int64_t enc_dim = mae->cfg.enc_dim;
    Featurizer cached = [&](const std::vector<int64_t>& centers) {
        std::vector<float> out;
        out.reserve(centers.size() * static_cast<size_t>(enc_dim));
        for (int64_t c : centers) {
            const int64_t row = map_row.at(c);
            out.insert(out.end(), map_feats.begin() + row * enc_dim,
                       map_feats.begin() + (row + 1) * enc_dim);
        }
        return out;
    };

    const std::vector<double> filters = {0.0, 0.10, 0.75};
    std::vector<FilterRangeRow> table;
    std::string csv = "filter_range,seed,F1,MCC,AUPRC,B.ACC,AUROC+,ACC+,map_mean_likelihood\n";
    char buf[256];
    for (double fr : filters) {
        std::vector<MetricRow> rows;
        double map_mean = 0.0;
        for (uint64_t seed : cfg.seeds) {
            SeedDataset ds = make_dataset(ctx, seed, fr);
            MethodModel mm = train_method(ctx, ds, "ours", seed);
            ScoredLabels test = score_test(ctx, ds, mm, 0.0, seed);
            rows.push_back(compute_metrics(test, cfg.clf.threshold, seed));
            if (seed == cfg.seeds.front()) {
                ProspectivityMap map =
                    predict_map(cached, mm.mlp, raster.rows, raster.cols, raster.transform,
                                cfg.eval.stride, cfg.clf.mc_passes, seed);
                map_mean = map.mean_likelihood();
                const int tag = static_cast<int>(std::lround(fr * 100));
                std::vector<float> mean_plane(map.raster.plane_data(0),
                                              map.raster.plane_data(0) + map.raster.plane());
                std::vector<float> std_plane(map.raster.plane_data(1),
                                             map.raster.plane_data(1) + map.raster.plane());
                write_png(rd.path("prospectivity_f" + std::to_string(tag) + ".png"),
                          render_raster(mean_plane, raster.rows, raster.cols,
                                        MapStyle::HeatOverGray, &std_plane, &map.evaluated));
            }
            const MetricRow& r = rows.back();
            std::snprintf(buf, sizeof(buf), "%.2f,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,\n",
                          fr, static_cast<unsigned long long>(seed), r.f1, r.mcc, r.auprc,
                          r.bacc, r.auroc, r.acc);
            csv += buf;
            rd.log("ablate-filter-range " + std::to_string(fr) + " seed " +
                   std::to_string(seed) + ": F1 " + std::to_string(r.f1));
        }
        FilterRangeRow fr_row;
        fr_row.filter_range = fr;
        MetricRow stddev;
        EvalReport::aggregate(rows, fr_row.mean, stddev);
        fr_row.map_mean_likelihood = map_mean;
        table.push_back(fr_row);
        const MetricRow& m = fr_row.mean;
        std::snprintf(buf, sizeof(buf), "%.2f,mean,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", fr,
                      m.f1, m.mcc, m.auprc, m.bacc, m.auroc, m.acc, map_mean);
        csv += buf;
    }
    write_text_file(rd.path("filter_range_report.csv"), csv);
    return table;
}

void run_report(const std::string& source_run_dir, const RunDir& rd) {
    std::string md = "# Run report\n\nSource: " + source_run_dir + "\n\n";
    const std::vector<std::pair<std::string, std::string>> artifacts = {
        {"config_echo.json", "Configuration"},
        {"history.csv", "Pretraining history (epoch,loss,ssim,psnr)"},
        {"eval_report.csv", "Evaluation metrics"},
        {"sparsity_report.csv", "Sparsity-robustness ablation"},
        {"filter_range_report.csv", "Likely-negative filter-range ablation"},
    };
    bool any = false;
    for (const auto& [file, title] : artifacts) {
        const std::string p = source_run_dir + "/" + file;
        if (!fs::exists(p)) continue;
        any = true;
        md += "## " + title + "\n\n```\n" + read_text_file(p) + "```\n\n";
    }
    if (!any) throw DataError("no known artifacts found in " + source_run_dir);
    write_text_file(rd.path("summary.md"), md);
}

}  // namespace prospectr::pipeline
