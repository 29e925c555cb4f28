#pragma once

// Classification metrics, one-way ANOVA with post-hoc Tukey-HSD, and the
// evaluation report. Everything here is a pure function of its inputs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prospectr/errors.hpp"

namespace prospectr {

struct ConfusionCounts {
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    int64_t total() const { return tp + tn + fp + fn; }
};

struct ScoredLabels {
    std::vector<double> scores;  // in [0,1]
    std::vector<bool> labels;    // true = positive
};

ConfusionCounts confusion_at(const ScoredLabels& s, double threshold);

// F1 = 2*TP / (2*TP + FP + FN); the 0/0 case (tp=fp=fn=0) scores 1.
double f1(const ConfusionCounts& c);
double acc(const ConfusionCounts& c);
double bacc(const ConfusionCounts& c);
// MCC with the 0/0 convention -> 0.
double mcc(const ConfusionCounts& c);

// Rank-based Mann-Whitney AUROC (ties count half). Equals the trapezoidal
// area under the ROC curve.
double auroc(const ScoredLabels& s);

// Average precision: right-step interpolation over all distinct thresholds.
double auprc(const ScoredLabels& s);

struct TrialTable {
    std::vector<std::string> names;                // k methods
    std::vector<std::vector<double>> values;       // k groups of observations
};

struct AnovaResult {
    double f_stat = 0.0;
    double p_value = 1.0;
    double ms_within = 0.0;
    int64_t df_between = 0;
    int64_t df_within = 0;
};

AnovaResult anova_oneway(const TrialTable& t);

struct TukeyComparison {
    std::string a, b;
    double mean_diff = 0.0;  // mean(a) - mean(b)
    double hsd = 0.0;
    bool significant = false;
};

// HSD = q(alpha, k, df) * sqrt(MSW / n); unequal group sizes use the harmonic
// mean of n_i. alpha must be 0.05 or 0.01; k <= 10; df is bucketed down to the
// nearest table row.
std::vector<TukeyComparison> tukey_hsd(const TrialTable& t, double alpha = 0.05);

// --- special functions used by the tests and the stats above ---
double regularized_incomplete_beta(double a, double b, double x);
double f_dist_sf(double f, int64_t df1, int64_t df2);    // P(F > f)
double chi2_sf(double x, int64_t df);                    // P(X > x)
double studentized_range_q(double alpha, int64_t k, int64_t df);

// --- evaluation report ---

struct MetricRow {
    uint64_t seed = 0;
    double f1 = 0, mcc = 0, auprc = 0, bacc = 0, auroc = 0, acc = 0;
};

struct EvalReport {
    // per method: per-seed rows
    std::map<std::string, std::vector<MetricRow>> rows;
    // per method: params / flops of one prediction
    std::map<std::string, std::pair<int64_t, int64_t>> complexity;
    double threshold = 0.5;
    // filled when >= 2 methods are present; keyed by metric name
    std::map<std::string, AnovaResult> anova;
    std::map<std::string, std::vector<TukeyComparison>> tukey;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    // Column order F1, MCC, AUPRC, B.ACC, AUROC†, ACC† ("†" marks metrics not
    // intended for imbalanced data).
    std::string to_csv() const;

    static void aggregate(const std::vector<MetricRow>& rows, MetricRow& mean, MetricRow& stdev);
};

MetricRow compute_metrics(const ScoredLabels& s, double threshold, uint64_t seed);

}  // namespace prospectr
