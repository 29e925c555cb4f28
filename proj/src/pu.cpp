#include "prospectr/pu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "prospectr/parallel.hpp"

namespace prospectr {

namespace {

double euclidean(const float* a, const float* b, int64_t dim) {
    double acc = 0.0;
    for (int64_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double cosine_distance(const float* a, const float* b, int64_t dim) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < dim; ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

SimilarityScale similarity_scale(const std::vector<float>& unknown_features,
                                 const std::vector<int64_t>& unknown_ids,
                                 const std::vector<float>& positive_features,
                                 int64_t n_positive, int64_t dim, DistanceMetric metric) {
    const int64_t n_unknown = static_cast<int64_t>(unknown_ids.size());
    if (n_positive < 1) throw DataError("similarity_scale: empty positive set");
    if (static_cast<int64_t>(unknown_features.size()) != n_unknown * dim ||
        static_cast<int64_t>(positive_features.size()) != n_positive * dim)
        throw ShapeError("similarity_scale: feature matrix size mismatch");

    SimilarityScale scale;
    scale.unknown_ids = unknown_ids;
    scale.distance.resize(static_cast<size_t>(n_unknown));
    parallel_for(n_unknown, [&](int64_t u) {
        const float* fu = unknown_features.data() + u * dim;
        double best = std::numeric_limits<double>::infinity();
        for (int64_t p = 0; p < n_positive; ++p) {
            const float* fp = positive_features.data() + p * dim;
            const double d = metric == DistanceMetric::Euclidean
                                 ? euclidean(fu, fp, dim)
                                 : cosine_distance(fu, fp, dim);
            best = std::min(best, d);
        }
        scale.distance[static_cast<size_t>(u)] = best;
    });

    scale.order.resize(static_cast<size_t>(n_unknown));
    std::iota(scale.order.begin(), scale.order.end(), int64_t{0});
    std::sort(scale.order.begin(), scale.order.end(), [&](int64_t a, int64_t b) {
        if (scale.distance[static_cast<size_t>(a)] != scale.distance[static_cast<size_t>(b)])
            return scale.distance[static_cast<size_t>(a)] <
                   scale.distance[static_cast<size_t>(b)];
        return scale.unknown_ids[static_cast<size_t>(a)] <
               scale.unknown_ids[static_cast<size_t>(b)];
    });
    return scale;
}

std::string SimilarityScale::to_csv(int64_t raster_cols) const {
    std::string out = "sample_id,row,col,distance,rank\n";
    char buf[128];
    for (size_t rank = 0; rank < order.size(); ++rank) {
        const int64_t pos = order[rank];
        const int64_t id = unknown_ids[static_cast<size_t>(pos)];
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.9g,%zu\n",
                      static_cast<long long>(id),
                      static_cast<long long>(id / raster_cols),
                      static_cast<long long>(id % raster_cols),
                      distance[static_cast<size_t>(pos)], rank);
        out += buf;
    }
    return out;
}

std::vector<int64_t> select_negatives(const SimilarityScale& scale, double filter_range,
                                      int64_t n_negatives, Rng& rng) {
    if (filter_range < 0.0 || filter_range >= 1.0)
        throw ConfigError("filter_range must be in [0,1)");
    if (n_negatives < 1) throw ConfigError("n_negatives must be positive");
    const int64_t n_unknown = static_cast<int64_t>(scale.unknown_ids.size());
    const int64_t n_filtered = static_cast<int64_t>(
        std::ceil(filter_range * static_cast<double>(n_unknown)));
    const int64_t pool = n_unknown - n_filtered;
    if (pool < n_negatives)
        throw DataError("negative pool exhausted: " + std::to_string(pool) +
                        " eligible unknowns, " + std::to_string(n_negatives) + " requested");

    std::vector<int64_t> eligible;
    eligible.reserve(static_cast<size_t>(pool));
    for (int64_t r = n_filtered; r < n_unknown; ++r)
        eligible.push_back(scale.unknown_ids[static_cast<size_t>(scale.order[static_cast<size_t>(r)])]);

    auto picks = rng.sample_without_replacement(pool, n_negatives);
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(n_negatives));
    for (int64_t p : picks) out.push_back(eligible[static_cast<size_t>(p)]);
    std::sort(out.begin(), out.end());
    return out;
}

BalancedSet balance_oversample(const std::vector<int64_t>& pos_ids,
                               const std::vector<int64_t>& neg_ids, Rng& rng) {
    if (pos_ids.empty() || neg_ids.empty())
        throw ContractError("balance_oversample: both classes must be non-empty");
    const bool pos_minor = pos_ids.size() < neg_ids.size();
    const auto& minor = pos_minor ? pos_ids : neg_ids;
    const auto& major = pos_minor ? neg_ids : pos_ids;

    std::vector<int64_t> minor_multiset;
    const int64_t copies = static_cast<int64_t>(major.size() / minor.size());
    const int64_t extra = static_cast<int64_t>(major.size() % minor.size());
    for (int64_t c = 0; c < copies; ++c)
        minor_multiset.insert(minor_multiset.end(), minor.begin(), minor.end());
    auto extra_idx =
        rng.sample_without_replacement(static_cast<int64_t>(minor.size()), extra);
    for (int64_t i : extra_idx) minor_multiset.push_back(minor[static_cast<size_t>(i)]);

    BalancedSet out;
    auto push = [&](const std::vector<int64_t>& ids, uint8_t label) {
        for (int64_t id : ids) {
            out.ids.push_back(id);
            out.labels.push_back(label);
        }
    };
    if (pos_minor) {
        push(minor_multiset, 1);
        push(major, 0);
    } else {
        push(major, 1);
        push(minor_multiset, 0);
    }
    return out;
}

SplitResult split_80_10_10(const std::vector<int64_t>& ids,
                           const std::vector<uint8_t>& labels, uint64_t seed) {
    if (ids.size() != labels.size()) throw ShapeError("split: ids/labels length mismatch");
    if (ids.size() < 10) throw ContractError("split needs at least 10 labeled samples");

    SplitResult res;
    Rng rng(seed, 0x58717ull);
    for (uint8_t cls : {uint8_t{1}, uint8_t{0}}) {
        std::vector<int64_t> members;
        for (size_t i = 0; i < ids.size(); ++i)
            if (labels[i] == cls) members.push_back(static_cast<int64_t>(i));
        if (members.empty()) continue;
        if (members.size() < 3) {
            res.stratification_warning = true;
            res.train.insert(res.train.end(), members.begin(), members.end());
            continue;
        }
        Rng stream = rng.split(cls);
        stream.shuffle(members);
        const int64_t n = static_cast<int64_t>(members.size());
        const int64_t n_val = std::llround(0.1 * static_cast<double>(n));
        const int64_t n_test = std::llround(0.1 * static_cast<double>(n));
        for (int64_t i = 0; i < n; ++i) {
            if (i < n_val)
                res.val.push_back(members[static_cast<size_t>(i)]);
            else if (i < n_val + n_test)
                res.test.push_back(members[static_cast<size_t>(i)]);
            else
                res.train.push_back(members[static_cast<size_t>(i)]);
        }
    }
    std::sort(res.train.begin(), res.train.end());
    std::sort(res.val.begin(), res.val.end());
    std::sort(res.test.begin(), res.test.end());
    return res;
}

}  // namespace prospectr
