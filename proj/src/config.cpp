#include "prospectr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace prospectr {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

DistanceMetric metric_from(const std::string& s) {
    if (s == "euclidean") return DistanceMetric::Euclidean;
    if (s == "cosine") return DistanceMetric::Cosine;
    throw ConfigError("pu.metric must be 'euclidean' or 'cosine', got '" + s + "'");
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"schema_version", "seeds", "raster", "preprocess", "mae", "pu", "clf",
                   "xai", "eval", "synth"},
               "config root");

    RunConfig c;
    if (j.contains("schema_version")) {
        c.schema_version = j["schema_version"].get<int64_t>();
        if (c.schema_version != 1)
            throw ConfigError("unsupported schema_version " +
                              std::to_string(c.schema_version));
    }
    if (j.contains("seeds")) {
        c.seeds = j["seeds"].get<std::vector<uint64_t>>();
        if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
    }

    if (j.contains("raster")) {
        const auto& r = j["raster"];
        check_keys(r, {"window"}, "raster");
        if (r.contains("window")) c.raster.window = r["window"].get<int64_t>();
        if (c.raster.window < 2) throw ConfigError("raster.window must be >= 2");
    }

    if (j.contains("preprocess")) {
        const auto& p = j["preprocess"];
        check_keys(p, {"tukey_k", "idw_power", "idw_radius", "smooth_sigma"}, "preprocess");
        if (p.contains("tukey_k")) c.preprocess.tukey_k = p["tukey_k"].get<double>();
        if (p.contains("idw_power")) c.preprocess.idw_power = p["idw_power"].get<double>();
        if (p.contains("idw_radius")) c.preprocess.idw_radius = p["idw_radius"].get<int64_t>();
        if (p.contains("smooth_sigma"))
            c.preprocess.smooth_sigma = p["smooth_sigma"].get<double>();
        if (c.preprocess.tukey_k <= 0) throw ConfigError("preprocess.tukey_k must be > 0");
        if (c.preprocess.idw_power <= 0) throw ConfigError("preprocess.idw_power must be > 0");
        if (c.preprocess.idw_radius < 1) throw ConfigError("preprocess.idw_radius must be >= 1");
    }

    if (j.contains("mae")) {
        const auto& m = j["mae"];
        check_keys(m,
                   {"patch", "enc_dim", "enc_blocks", "enc_heads", "dec_dim", "dec_blocks",
                    "dec_heads", "mlp_ratio", "mask_ratio", "loss_on", "epochs", "batch",
                    "samples_per_epoch", "lr", "holdout_fraction", "dump_every"},
                   "mae");
        if (m.contains("patch")) c.mae.patch = m["patch"].get<int64_t>();
        if (m.contains("enc_dim")) c.mae.enc_dim = m["enc_dim"].get<int64_t>();
        if (m.contains("enc_blocks")) c.mae.enc_blocks = m["enc_blocks"].get<int64_t>();
        if (m.contains("enc_heads")) c.mae.enc_heads = m["enc_heads"].get<int64_t>();
        if (m.contains("dec_dim")) c.mae.dec_dim = m["dec_dim"].get<int64_t>();
        if (m.contains("dec_blocks")) c.mae.dec_blocks = m["dec_blocks"].get<int64_t>();
        if (m.contains("dec_heads")) c.mae.dec_heads = m["dec_heads"].get<int64_t>();
        if (m.contains("mlp_ratio")) c.mae.mlp_ratio = m["mlp_ratio"].get<int64_t>();
        if (m.contains("mask_ratio")) c.mae.mask_ratio = m["mask_ratio"].get<double>();
        if (m.contains("loss_on")) {
            const std::string lo = m["loss_on"].get<std::string>();
            if (lo != "all" && lo != "masked")
                throw ConfigError("mae.loss_on must be 'all' or 'masked'");
            c.mae.loss_on_all = lo == "all";
        }
        if (m.contains("epochs")) c.pretrain.epochs = m["epochs"].get<int64_t>();
        if (m.contains("batch")) c.pretrain.batch = m["batch"].get<int64_t>();
        if (m.contains("samples_per_epoch"))
            c.pretrain.samples_per_epoch = m["samples_per_epoch"].get<int64_t>();
        if (m.contains("lr")) c.pretrain.lr = m["lr"].get<double>();
        if (m.contains("holdout_fraction"))
            c.pretrain.holdout_fraction = m["holdout_fraction"].get<double>();
        if (m.contains("dump_every")) c.pretrain.dump_every = m["dump_every"].get<int64_t>();
        if (c.pretrain.epochs < 0) throw ConfigError("mae.epochs must be >= 0");
        if (c.pretrain.batch < 1) throw ConfigError("mae.batch must be >= 1");
    }

    if (j.contains("pu")) {
        const auto& p = j["pu"];
        check_keys(p, {"filter_range", "n_negatives", "metric", "oversample", "features"},
                   "pu");
        if (p.contains("filter_range")) c.pu.filter_range = p["filter_range"].get<double>();
        if (p.contains("n_negatives")) {
            if (p["n_negatives"].is_string()) {
                if (p["n_negatives"].get<std::string>() != "match_positives")
                    throw ConfigError("pu.n_negatives must be a count or 'match_positives'");
                c.pu.n_negatives = -1;
            } else {
                c.pu.n_negatives = p["n_negatives"].get<int64_t>();
                if (c.pu.n_negatives < 1)
                    throw ConfigError("pu.n_negatives must be positive");
            }
        }
        if (p.contains("metric")) c.pu.metric = metric_from(p["metric"].get<std::string>());
        if (p.contains("oversample")) c.pu.oversample = p["oversample"].get<bool>();
        if (p.contains("features")) {
            c.pu.features = p["features"].get<std::string>();
            if (c.pu.features != "encoder" && c.pu.features != "raw")
                throw ConfigError("pu.features must be 'encoder' or 'raw'");
        }
        if (c.pu.filter_range < 0.0 || c.pu.filter_range >= 1.0)
            throw ConfigError("pu.filter_range must be in [0,1)");
    }

    if (j.contains("clf")) {
        const auto& p = j["clf"];
        check_keys(p,
                   {"hidden", "dropout_p", "mc_passes", "lr", "max_epochs", "patience",
                    "batch", "threshold"},
                   "clf");
        if (p.contains("hidden")) c.clf.hidden = p["hidden"].get<std::vector<int64_t>>();
        if (p.contains("dropout_p")) c.clf.dropout_p = p["dropout_p"].get<double>();
        if (p.contains("mc_passes")) c.clf.mc_passes = p["mc_passes"].get<int64_t>();
        if (p.contains("lr")) c.clf.lr = p["lr"].get<double>();
        if (p.contains("max_epochs")) c.clf.max_epochs = p["max_epochs"].get<int64_t>();
        if (p.contains("patience")) c.clf.patience = p["patience"].get<int64_t>();
        if (p.contains("batch")) c.clf.batch = p["batch"].get<int64_t>();
        if (p.contains("threshold")) c.clf.threshold = p["threshold"].get<double>();
        if (c.clf.threshold <= 0.0 || c.clf.threshold >= 1.0)
            throw ConfigError("clf.threshold must be in (0,1)");
    }

    if (j.contains("xai")) {
        const auto& p = j["xai"];
        check_keys(p, {"steps", "band", "stride"}, "xai");
        if (p.contains("steps")) c.xai.steps = p["steps"].get<int64_t>();
        if (p.contains("band")) c.xai.band = p["band"].get<int64_t>();
        if (p.contains("stride")) c.xai.stride = p["stride"].get<int64_t>();
        if (c.xai.steps < 8) throw ConfigError("xai.steps must be >= 8");
        if (c.xai.stride < 1) throw ConfigError("xai.stride must be >= 1");
    }

    if (j.contains("eval")) {
        const auto& p = j["eval"];
        check_keys(p, {"methods", "stride", "drop_fraction"}, "eval");
        if (p.contains("methods")) {
            c.eval.methods = p["methods"].get<std::vector<std::string>>();
            for (const auto& m : c.eval.methods)
                if (m != "ours" && m != "vit" && m != "ann")
                    throw ConfigError("eval.methods entries must be ours|vit|ann, got '" + m +
                                      "'");
        }
        if (p.contains("stride")) c.eval.stride = p["stride"].get<int64_t>();
        if (p.contains("drop_fraction"))
            c.eval.drop_fraction = p["drop_fraction"].get<double>();
        if (c.eval.stride < 1) throw ConfigError("eval.stride must be >= 1");
        if (c.eval.drop_fraction < 0.0 || c.eval.drop_fraction >= 1.0)
            throw ConfigError("eval.drop_fraction must be in [0,1)");
    }

    if (j.contains("synth")) {
        const auto& p = j["synth"];
        check_keys(p,
                   {"rows", "cols", "n_layers", "correlation_length", "n_deposits", "gamma",
                    "n_redundant", "redundancy_rho", "rule"},
                   "synth");
        if (p.contains("rows")) c.synth.rows = p["rows"].get<int64_t>();
        if (p.contains("cols")) c.synth.cols = p["cols"].get<int64_t>();
        if (p.contains("n_layers")) c.synth.n_layers = p["n_layers"].get<int64_t>();
        if (p.contains("correlation_length")) {
            if (p["correlation_length"].is_array())
                c.synth.correlation_length =
                    p["correlation_length"].get<std::vector<double>>();
            else
                c.synth.correlation_length = {p["correlation_length"].get<double>()};
        }
        if (p.contains("n_deposits")) c.synth.n_deposits = p["n_deposits"].get<int64_t>();
        if (p.contains("gamma")) c.synth.gamma = p["gamma"].get<double>();
        if (p.contains("n_redundant")) c.synth.n_redundant = p["n_redundant"].get<int64_t>();
        if (p.contains("redundancy_rho"))
            c.synth.redundancy_rho = p["redundancy_rho"].get<double>();
        if (p.contains("rule")) {
            const auto& r = p["rule"];
            check_keys(r, {"layers", "weights", "bias", "sharpness"}, "synth.rule");
            if (r.contains("layers"))
                c.synth.rule.layers = r["layers"].get<std::vector<int64_t>>();
            if (r.contains("weights"))
                c.synth.rule.weights = r["weights"].get<std::vector<double>>();
            if (r.contains("bias")) c.synth.rule.bias = r["bias"].get<double>();
            if (r.contains("sharpness")) c.synth.rule.sharpness = r["sharpness"].get<double>();
        }
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json() const {
    const DepositRule rule = synth.effective_rule();
    json j = {
        {"schema_version", schema_version},
        {"seeds", seeds},
        {"raster", {{"window", raster.window}}},
        {"preprocess",
         {{"tukey_k", preprocess.tukey_k},
          {"idw_power", preprocess.idw_power},
          {"idw_radius", preprocess.idw_radius},
          {"smooth_sigma", preprocess.smooth_sigma}}},
        {"mae",
         {{"patch", mae.patch},
          {"enc_dim", mae.enc_dim},
          {"enc_blocks", mae.enc_blocks},
          {"enc_heads", mae.enc_heads},
          {"dec_dim", mae.dec_dim},
          {"dec_blocks", mae.dec_blocks},
          {"dec_heads", mae.dec_heads},
          {"mlp_ratio", mae.mlp_ratio},
          {"mask_ratio", mae.mask_ratio},
          {"loss_on", mae.loss_on_all ? "all" : "masked"},
          {"epochs", pretrain.epochs},
          {"batch", pretrain.batch},
          {"samples_per_epoch", pretrain.samples_per_epoch},
          {"lr", pretrain.lr},
          {"holdout_fraction", pretrain.holdout_fraction},
          {"dump_every", pretrain.dump_every}}},
        {"pu",
         {{"filter_range", pu.filter_range},
          {"n_negatives",
           pu.n_negatives < 0 ? json("match_positives") : json(pu.n_negatives)},
          {"metric", pu.metric == DistanceMetric::Euclidean ? "euclidean" : "cosine"},
          {"oversample", pu.oversample},
          {"features", pu.features}}},
        {"clf",
         {{"hidden", clf.hidden},
          {"dropout_p", clf.dropout_p},
          {"mc_passes", clf.mc_passes},
          {"lr", clf.lr},
          {"max_epochs", clf.max_epochs},
          {"patience", clf.patience},
          {"batch", clf.batch},
          {"threshold", clf.threshold}}},
        {"xai", {{"steps", xai.steps}, {"band", xai.band}, {"stride", xai.stride}}},
        {"eval",
         {{"methods", eval.methods},
          {"stride", eval.stride},
          {"drop_fraction", eval.drop_fraction}}},
        {"synth",
         {{"rows", synth.rows},
          {"cols", synth.cols},
          {"n_layers", synth.n_layers},
          {"correlation_length", synth.correlation_length},
          {"n_deposits", synth.n_deposits},
          {"gamma", synth.gamma},
          {"n_redundant", synth.n_redundant},
          {"redundancy_rho", synth.redundancy_rho},
          {"rule",
           {{"layers", rule.layers},
            {"weights", rule.weights},
            {"bias", rule.bias},
            {"sharpness", rule.sharpness}}}}},
    };
    return j.dump(2);
}

}  // namespace prospectr
