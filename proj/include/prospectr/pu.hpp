#pragma once

// Positive-unlabeled dataset construction: the positive-similarity scale over
// unknown samples, likely-negative filtering before undersampling, minority
// oversampling, and stratified 80/10/10 splits.

#include <cstdint>
#include <string>
#include <vector>

#include "prospectr/errors.hpp"
#include "prospectr/rng.hpp"

namespace prospectr {

enum class DistanceMetric { Euclidean, Cosine };

struct SimilarityScale {
    std::vector<int64_t> unknown_ids;  // sample ids (pixel indices)
    std::vector<double> distance;      // nearest-positive distance per id
    std::vector<int64_t> order;        // positions into unknown_ids, most similar first

    // sample_id,row,col,distance,rank
    std::string to_csv(int64_t raster_cols) const;
};

// distance(u) = min over positives; ties in the ordering break by ascending id.
SimilarityScale similarity_scale(const std::vector<float>& unknown_features,
                                 const std::vector<int64_t>& unknown_ids,
                                 const std::vector<float>& positive_features,
                                 int64_t n_positive, int64_t dim, DistanceMetric metric);

struct SamplingConfig {
    double filter_range = 0.10;  // fraction of most-similar unknowns excluded
    int64_t n_negatives = -1;    // -1 = match the positive count
    DistanceMetric metric = DistanceMetric::Euclidean;
    bool oversample = true;
    uint64_t seed = 0;
};

// The ceil(filter_range*U) most-similar ids are never eligible; negatives are
// drawn uniformly without replacement from the rest. Returns sorted ids.
std::vector<int64_t> select_negatives(const SimilarityScale& scale, double filter_range,
                                      int64_t n_negatives, Rng& rng);

struct BalancedSet {
    std::vector<int64_t> ids;     // multiset
    std::vector<uint8_t> labels;  // 1 = positive, aligned with ids
};

// Duplicates the minority class until counts match: floor(M/m) copies of each
// member plus (M mod m) distinct extras drawn uniformly.
BalancedSet balance_oversample(const std::vector<int64_t>& pos_ids,
                               const std::vector<int64_t>& neg_ids, Rng& rng);

struct SplitResult {
    std::vector<int64_t> train, val, test;  // positions into the input ids
    bool stratification_warning = false;    // a class with < 3 members stayed in train
};

// Stratified by class; deterministic under seed; sizes within +-1 of 80/10/10.
SplitResult split_80_10_10(const std::vector<int64_t>& ids,
                           const std::vector<uint8_t>& labels, uint64_t seed);

}  // namespace prospectr
