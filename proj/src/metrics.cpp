#include "prospectr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace prospectr {

using nlohmann::json;

ConfusionCounts confusion_at(const ScoredLabels& s, double threshold) {
    if (s.scores.size() != s.labels.size())
        throw ShapeError("scores/labels length mismatch");
    ConfusionCounts c;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        const bool pred = s.scores[i] >= threshold;
        if (pred && s.labels[i]) ++c.tp;
        else if (pred && !s.labels[i]) ++c.fp;
        else if (!pred && s.labels[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {
void check_counts(const ConfusionCounts& c) {
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0)
        throw ContractError("negative confusion counts");
    if (c.total() == 0) throw ContractError("empty confusion counts");
}
}  // namespace

double f1(const ConfusionCounts& c) {
    check_counts(c);
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 1.0;  // nothing to find, nothing claimed
    return 2.0 * static_cast<double>(c.tp) / denom;
}

double acc(const ConfusionCounts& c) {
    check_counts(c);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double bacc(const ConfusionCounts& c) {
    check_counts(c);
    const double tpr = c.tp + c.fn > 0
                           ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                           : 0.0;
    const double tnr = c.tn + c.fp > 0
                           ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp)
                           : 0.0;
    return 0.5 * (tpr + tnr);
}

double mcc(const ConfusionCounts& c) {
    check_counts(c);
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double denom2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom2 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom2);
}

double auroc(const ScoredLabels& s) {
    const size_t n = s.scores.size();
    if (n != s.labels.size()) throw ShapeError("scores/labels length mismatch");
    int64_t npos = 0, nneg = 0;
    for (bool l : s.labels) (l ? npos : nneg)++;
    if (npos == 0 || nneg == 0)
        throw DataError("auroc undefined: needs both classes");

    // average ranks over ties
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double rank_pos = 0.0;
    for (size_t t = 0; t < n; ++t)
        if (s.labels[t]) rank_pos += rank[t];
    const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
    return (rank_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(const ScoredLabels& s) {
    const size_t n = s.scores.size();
    if (n != s.labels.size()) throw ShapeError("scores/labels length mismatch");
    int64_t npos = 0;
    for (bool l : s.labels)
        if (l) ++npos;
    if (npos == 0) throw DataError("auprc undefined: no positives");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return s.scores[a] > s.scores[b]; });

    // walk thresholds from high to low; step-interpolated AP
    double ap = 0.0;
    int64_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
        for (size_t t = i; t <= j; ++t) (s.labels[order[t]] ? tp : fp)++;
        const double recall = static_cast<double>(tp) / static_cast<double>(npos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

// ---------------------------------------------------------------------------
// ANOVA + Tukey

AnovaResult anova_oneway(const TrialTable& t) {
    const size_t k = t.values.size();
    if (k < 2) throw ContractError("anova needs at least 2 groups");
    int64_t n_total = 0;
    double grand_sum = 0.0;
    for (const auto& g : t.values) {
        if (g.size() < 2) throw ContractError("anova needs n_i >= 2 per group");
        for (double v : g) grand_sum += v;
        n_total += static_cast<int64_t>(g.size());
    }
    const double grand_mean = grand_sum / static_cast<double>(n_total);

    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : t.values) {
        double gsum = 0.0;
        for (double v : g) gsum += v;
        const double gmean = gsum / static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (gmean - grand_mean) * (gmean - grand_mean);
        for (double v : g) ssw += (v - gmean) * (v - gmean);
    }

    AnovaResult r;
    r.df_between = static_cast<int64_t>(k) - 1;
    r.df_within = n_total - static_cast<int64_t>(k);
    if (ssw <= 0.0) throw DataError("anova degenerate: zero within-group variance");
    const double msb = ssb / static_cast<double>(r.df_between);
    r.ms_within = ssw / static_cast<double>(r.df_within);
    r.f_stat = msb / r.ms_within;
    r.p_value = f_dist_sf(r.f_stat, r.df_between, r.df_within);
    return r;
}

std::vector<TukeyComparison> tukey_hsd(const TrialTable& t, double alpha) {
    AnovaResult a = anova_oneway(t);
    const size_t k = t.values.size();
    const double q = studentized_range_q(alpha, static_cast<int64_t>(k), a.df_within);

    // harmonic mean of group sizes (equal sizes reduce to n)
    double hn = 0.0;
    for (const auto& g : t.values) hn += 1.0 / static_cast<double>(g.size());
    hn = static_cast<double>(k) / hn;

    const double hsd = q * std::sqrt(a.ms_within / hn);
    std::vector<double> means(k);
    for (size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (double v : t.values[i]) s += v;
        means[i] = s / static_cast<double>(t.values[i].size());
    }
    std::vector<TukeyComparison> out;
    for (size_t i = 0; i < k; ++i)
        for (size_t j = i + 1; j < k; ++j) {
            TukeyComparison c;
            c.a = t.names[i];
            c.b = t.names[j];
            c.mean_diff = means[i] - means[j];
            c.hsd = hsd;
            c.significant = std::fabs(c.mean_diff) > hsd;
            out.push_back(c);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Special functions (Lentz continued fractions, standard forms)

namespace {

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ContractError("incomplete beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double f_dist_sf(double f, int64_t df1, int64_t df2) {
    if (f <= 0.0) return 1.0;
    const double d1 = static_cast<double>(df1), d2 = static_cast<double>(df2);
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

namespace {

// upper regularized incomplete gamma Q(a, x)
double gammq_impl(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw ContractError("gammq: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) {
        // series for P(a,x)
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 3e-14) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    // continued fraction for Q(a,x)
    constexpr double kFpMin = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kFpMin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 3e-14) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double chi2_sf(double x, int64_t df) {
    if (df < 1) throw ContractError("chi2_sf: df must be >= 1");
    if (x <= 0.0) return 1.0;
    return gammq_impl(static_cast<double>(df) / 2.0, x / 2.0);
}

// ---------------------------------------------------------------------------
// Studentized range critical values q(alpha, k, df), standard tables.
// Rows: df in {1..20, 24, 30, 40, 60, 120, inf}; columns: k = 2..10.

namespace {

const int64_t kTableDf[] = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13,
                            14, 15, 16, 17, 18, 19, 20, 24, 30, 40, 60, 120, -1};
constexpr size_t kTableRows = sizeof(kTableDf) / sizeof(kTableDf[0]);

const double kQ05[kTableRows][9] = {
    {17.97, 26.98, 32.82, 37.08, 40.41, 43.12, 45.40, 47.36, 49.07},
    {6.085, 8.331, 9.798, 10.88, 11.74, 12.44, 13.03, 13.54, 13.99},
    {4.501, 5.910, 6.825, 7.502, 8.037, 8.478, 8.853, 9.177, 9.462},
    {3.927, 5.040, 5.757, 6.287, 6.707, 7.053, 7.347, 7.602, 7.826},
    {3.635, 4.602, 5.218, 5.673, 6.033, 6.330, 6.582, 6.802, 6.995},
    {3.461, 4.339, 4.896, 5.305, 5.628, 5.895, 6.122, 6.319, 6.493},
    {3.344, 4.165, 4.681, 5.060, 5.359, 5.606, 5.815, 5.998, 6.158},
    {3.261, 4.041, 4.529, 4.886, 5.167, 5.399, 5.597, 5.767, 5.918},
    {3.199, 3.949, 4.415, 4.756, 5.024, 5.244, 5.432, 5.595, 5.739},
    {3.151, 3.877, 4.327, 4.654, 4.912, 5.124, 5.305, 5.461, 5.599},
    {3.113, 3.820, 4.256, 4.574, 4.823, 5.028, 5.202, 5.353, 5.487},
    {3.082, 3.773, 4.199, 4.508, 4.751, 4.950, 5.119, 5.265, 5.395},
    {3.055, 3.735, 4.151, 4.453, 4.690, 4.885, 5.049, 5.192, 5.318},
    {3.033, 3.702, 4.111, 4.407, 4.639, 4.829, 4.990, 5.131, 5.254},
    {3.014, 3.673, 4.076, 4.367, 4.595, 4.782, 4.940, 5.077, 5.198},
    {2.998, 3.649, 4.046, 4.333, 4.557, 4.741, 4.897, 5.031, 5.150},
    {2.984, 3.628, 4.020, 4.303, 4.524, 4.705, 4.858, 4.991, 5.108},
    {2.971, 3.609, 3.997, 4.277, 4.495, 4.673, 4.824, 4.956, 5.071},
    {2.960, 3.593, 3.977, 4.253, 4.469, 4.645, 4.794, 4.924, 5.038},
    {2.950, 3.578, 3.958, 4.232, 4.445, 4.620, 4.768, 4.896, 5.008},
    {2.919, 3.532, 3.901, 4.166, 4.373, 4.541, 4.684, 4.807, 4.915},
    {2.888, 3.486, 3.845, 4.102, 4.302, 4.464, 4.602, 4.720, 4.824},
    {2.858, 3.442, 3.791, 4.039, 4.232, 4.389, 4.521, 4.635, 4.735},
    {2.829, 3.399, 3.737, 3.977, 4.163, 4.314, 4.441, 4.550, 4.646},
    {2.800, 3.356, 3.685, 3.917, 4.096, 4.241, 4.363, 4.468, 4.560},
    {2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286, 4.387, 4.474},
};

const double kQ01[kTableRows][9] = {
    {90.03, 135.0, 164.3, 185.6, 202.2, 215.8, 227.2, 237.0, 245.6},
    {14.04, 19.02, 22.29, 24.72, 26.63, 28.20, 29.53, 30.68, 31.69},
    {8.261, 10.62, 12.17, 13.33, 14.24, 15.00, 15.64, 16.20, 16.69},
    {6.512, 8.120, 9.173, 9.958, 10.58, 11.10, 11.55, 11.93, 12.27},
    {5.702, 6.976, 7.804, 8.421, 8.913, 9.321, 9.669, 9.972, 10.24},
    {5.243, 6.331, 7.033, 7.556, 7.973, 8.318, 8.613, 8.869, 9.097},
    {4.949, 5.919, 6.543, 7.005, 7.373, 7.679, 7.939, 8.166, 8.368},
    {4.746, 5.635, 6.204, 6.625, 6.960, 7.237, 7.474, 7.681, 7.863},
    {4.596, 5.428, 5.957, 6.348, 6.658, 6.915, 7.134, 7.325, 7.495},
    {4.482, 5.270, 5.769, 6.136, 6.428, 6.669, 6.875, 7.055, 7.213},
    {4.392, 5.146, 5.621, 5.970, 6.247, 6.476, 6.672, 6.842, 6.992},
    {4.320, 5.046, 5.502, 5.836, 6.101, 6.321, 6.507, 6.670, 6.814},
    {4.260, 4.964, 5.404, 5.727, 5.981, 6.192, 6.372, 6.528, 6.667},
    {4.210, 4.895, 5.322, 5.634, 5.881, 6.085, 6.258, 6.409, 6.543},
    {4.168, 4.836, 5.252, 5.556, 5.796, 5.994, 6.162, 6.309, 6.439},
    {4.131, 4.786, 5.192, 5.489, 5.722, 5.915, 6.079, 6.222, 6.349},
    {4.099, 4.742, 5.140, 5.430, 5.659, 5.847, 6.007, 6.147, 6.270},
    {4.071, 4.703, 5.094, 5.379, 5.603, 5.788, 5.944, 6.081, 6.201},
    {4.046, 4.670, 5.054, 5.334, 5.554, 5.735, 5.889, 6.022, 6.141},
    {4.024, 4.639, 5.018, 5.294, 5.510, 5.688, 5.839, 5.970, 6.087},
    {3.956, 4.546, 4.907, 5.168, 5.374, 5.542, 5.685, 5.809, 5.919},
    {3.889, 4.455, 4.799, 5.048, 5.242, 5.401, 5.536, 5.653, 5.756},
    {3.825, 4.367, 4.696, 4.931, 5.114, 5.265, 5.392, 5.502, 5.559},
    {3.762, 4.282, 4.595, 4.818, 4.991, 5.133, 5.253, 5.356, 5.447},
    {3.702, 4.200, 4.497, 4.709, 4.872, 5.005, 5.118, 5.214, 5.299},
    {3.643, 4.120, 4.403, 4.603, 4.757, 4.882, 4.987, 5.078, 5.157},
};

}  // namespace

double studentized_range_q(double alpha, int64_t k, int64_t df) {
    const bool a05 = std::fabs(alpha - 0.05) < 1e-12;
    const bool a01 = std::fabs(alpha - 0.01) < 1e-12;
    if (!a05 && !a01)
        throw DataError("tukey_hsd: only alpha 0.05 and 0.01 are tabulated");
    if (k < 2 || k > 10)
        throw DataError("tukey_hsd: k outside tabulated range 2..10");
    if (df < 1) throw DataError("tukey_hsd: df < 1");

    // bucket df down to the nearest finite tabulated row (conservative:
    // larger q); the -1 infinity row is the asymptote and never matches
    size_t row = 0;
    for (size_t i = 0; i < kTableRows; ++i) {
        if (kTableDf[i] == -1) break;
        if (kTableDf[i] <= df) row = i;
        else break;
    }
    const auto& table = a05 ? kQ05 : kQ01;
    return table[row][static_cast<size_t>(k - 2)];
}

// ---------------------------------------------------------------------------
// EvalReport

MetricRow compute_metrics(const ScoredLabels& s, double threshold, uint64_t seed) {
    MetricRow r;
    r.seed = seed;
    const ConfusionCounts c = confusion_at(s, threshold);
    r.f1 = f1(c);
    r.mcc = mcc(c);
    r.bacc = bacc(c);
    r.acc = acc(c);
    r.auroc = auroc(s);
    r.auprc = auprc(s);
    return r;
}

void EvalReport::aggregate(const std::vector<MetricRow>& rows, MetricRow& mean,
                           MetricRow& stdev) {
    const double n = static_cast<double>(rows.size());
    auto each = [&](auto get) {
        double m = 0.0;
        for (const auto& r : rows) m += get(r);
        m /= n;
        double ss = 0.0;
        for (const auto& r : rows) ss += (get(r) - m) * (get(r) - m);
        return std::pair<double, double>(m, n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
    };
    std::tie(mean.f1, stdev.f1) = each([](const MetricRow& r) { return r.f1; });
    std::tie(mean.mcc, stdev.mcc) = each([](const MetricRow& r) { return r.mcc; });
    std::tie(mean.auprc, stdev.auprc) = each([](const MetricRow& r) { return r.auprc; });
    std::tie(mean.bacc, stdev.bacc) = each([](const MetricRow& r) { return r.bacc; });
    std::tie(mean.auroc, stdev.auroc) = each([](const MetricRow& r) { return r.auroc; });
    std::tie(mean.acc, stdev.acc) = each([](const MetricRow& r) { return r.acc; });
}

namespace {

json row_to_json(const MetricRow& r) {
    return json{{"seed", r.seed},   {"f1", r.f1},       {"mcc", r.mcc},
                {"auprc", r.auprc}, {"bacc", r.bacc},   {"auroc", r.auroc},
                {"acc", r.acc}};
}

MetricRow row_from_json(const json& j) {
    MetricRow r;
    r.seed = j.at("seed").get<uint64_t>();
    r.f1 = j.at("f1").get<double>();
    r.mcc = j.at("mcc").get<double>();
    r.auprc = j.at("auprc").get<double>();
    r.bacc = j.at("bacc").get<double>();
    r.auroc = j.at("auroc").get<double>();
    r.acc = j.at("acc").get<double>();
    return r;
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["threshold"] = threshold;
    j["caveat"] = "AUROC and ACC are not intended for imbalanced datasets";
    json methods = json::object();
    for (const auto& [name, rws] : rows) {
        json jm;
        jm["per_seed"] = json::array();
        for (const auto& r : rws) jm["per_seed"].push_back(row_to_json(r));
        MetricRow mean, stdev;
        aggregate(rws, mean, stdev);
        jm["mean"] = row_to_json(mean);
        jm["std"] = row_to_json(stdev);
        auto it = complexity.find(name);
        if (it != complexity.end()) {
            jm["params"] = it->second.first;
            jm["flops_per_prediction"] = it->second.second;
        }
        methods[name] = jm;
    }
    j["methods"] = methods;
    if (!anova.empty()) {
        json ja = json::object();
        for (const auto& [metric, a] : anova)
            ja[metric] = {{"f", a.f_stat},
                          {"p", a.p_value},
                          {"df_between", a.df_between},
                          {"df_within", a.df_within}};
        j["anova"] = ja;
        json jt = json::object();
        for (const auto& [metric, comps] : tukey) {
            json arr = json::array();
            for (const auto& c : comps)
                arr.push_back({{"a", c.a},
                               {"b", c.b},
                               {"mean_diff", c.mean_diff},
                               {"hsd", c.hsd},
                               {"significant", c.significant}});
            jt[metric] = arr;
        }
        j["tukey"] = jt;
    }
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport rep;
    rep.threshold = j.at("threshold").get<double>();
    for (const auto& [name, jm] : j.at("methods").items()) {
        std::vector<MetricRow> rws;
        for (const auto& jr : jm.at("per_seed")) rws.push_back(row_from_json(jr));
        rep.rows[name] = std::move(rws);
        if (jm.contains("params"))
            rep.complexity[name] = {jm.at("params").get<int64_t>(),
                                    jm.at("flops_per_prediction").get<int64_t>()};
    }
    if (j.contains("anova")) {
        for (const auto& [metric, ja] : j.at("anova").items()) {
            AnovaResult a;
            a.f_stat = ja.at("f").get<double>();
            a.p_value = ja.at("p").get<double>();
            a.df_between = ja.at("df_between").get<int64_t>();
            a.df_within = ja.at("df_within").get<int64_t>();
            rep.anova[metric] = a;
        }
        for (const auto& [metric, jt] : j.at("tukey").items()) {
            std::vector<TukeyComparison> comps;
            for (const auto& jc : jt) {
                TukeyComparison c;
                c.a = jc.at("a").get<std::string>();
                c.b = jc.at("b").get<std::string>();
                c.mean_diff = jc.at("mean_diff").get<double>();
                c.hsd = jc.at("hsd").get<double>();
                c.significant = jc.at("significant").get<bool>();
                comps.push_back(c);
            }
            rep.tukey[metric] = comps;
        }
    }
    return rep;
}

std::string EvalReport::to_csv() const {
    std::string out = "method,seed,F1,MCC,AUPRC,B.ACC,AUROC+,ACC+\n";
    auto append = [&](const std::string& method, const std::string& seed,
                      const MetricRow& r) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      method.c_str(), seed.c_str(), r.f1, r.mcc, r.auprc, r.bacc, r.auroc,
                      r.acc);
        out += buf;
    };
    for (const auto& [name, rws] : rows) {
        for (const auto& r : rws) append(name, std::to_string(r.seed), r);
        MetricRow mean, stdev;
        aggregate(rws, mean, stdev);
        append(name, "mean", mean);
        append(name, "std", stdev);
    }
    return out;
}

}  // namespace prospectr
