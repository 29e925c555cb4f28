#pragma once

// The JSON run configuration. Parsing is strict: unknown keys anywhere are a
// ConfigError. to_json materializes every default so the echoed config in a
// run directory fully pins the run.

#include <cstdint>
#include <string>
#include <vector>

#include "prospectr/clf.hpp"
#include "prospectr/mae.hpp"
#include "prospectr/preprocess.hpp"
#include "prospectr/pu.hpp"
#include "prospectr/synth.hpp"

namespace prospectr {

struct RasterSectionConfig {
    int64_t window = 16;
};

struct PuSectionConfig {
    double filter_range = 0.10;
    int64_t n_negatives = -1;  // -1 = match positive count
    DistanceMetric metric = DistanceMetric::Euclidean;
    bool oversample = true;
    std::string features = "encoder";  // encoder | raw
};

struct XaiSectionConfig {
    int64_t steps = 64;
    int64_t band = 0;
    int64_t stride = 8;  // pixels attributed in `explain`
};

struct EvalSectionConfig {
    std::vector<std::string> methods = {"ours"};
    int64_t stride = 1;          // predict-map stride
    double drop_fraction = 0.5;  // ablate-sparsity test-time feature dropping
};

struct RunConfig {
    int64_t schema_version = 1;
    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    RasterSectionConfig raster;
    PreprocessConfig preprocess;
    MaeConfig mae;            // bands filled from data at run time
    PretrainConfig pretrain;  // lives in the "mae" section of the JSON
    PuSectionConfig pu;
    ClassifierConfig clf;
    XaiSectionConfig xai;
    EvalSectionConfig eval;
    WorldSpec synth;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json() const;
};

}  // namespace prospectr
