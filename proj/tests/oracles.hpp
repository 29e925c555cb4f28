#pragma once

// Independent reference implementations the tests check against. These stay
// deliberately naive (two-loop sums, O(n^2) pair counts, exhaustive
// thresholds) and must not share code with the library paths they verify.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

namespace oracles {

// C[m,n] = A[m,k] * B[k,n], triple loop
template <typename T>
std::vector<T> matmul(const std::vector<T>& a, const std::vector<T>& b, int64_t m, int64_t k,
                      int64_t n) {
    std::vector<T> c(static_cast<size_t>(m * n), T(0));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            T acc = 0;
            for (int64_t kk = 0; kk < k; ++kk)
                acc += a[static_cast<size_t>(i * k + kk)] * b[static_cast<size_t>(kk * n + j)];
            c[static_cast<size_t>(i * n + j)] = acc;
        }
    return c;
}

// mean of squared differences, elementwise two-pass
template <typename T>
double mse(const std::vector<T>& x, const std::vector<T>& y) {
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

// -(1/J) sum y log p + (1-y) log(1-p), with the library's clamp applied
inline double bce(const std::vector<double>& p, const std::vector<double>& y) {
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double pc = std::min(1.0 - 1e-7, std::max(1e-7, p[i]));
        acc += y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
    }
    return -acc / static_cast<double>(p.size());
}

// P(score_pos > score_neg) + 0.5 P(equal), all pairs
inline double auroc_pairwise(const std::vector<double>& scores,
                             const std::vector<bool>& labels) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// trapezoidal area under the TPR-vs-FPR curve over all distinct thresholds
inline double auroc_trapezoid(const std::vector<double>& scores,
                              const std::vector<bool>& labels) {
    std::set<double> th(scores.begin(), scores.end());
    int64_t npos = 0, nneg = 0;
    for (bool l : labels) (l ? npos : nneg)++;
    // sweep thresholds from +inf down; at each, predict positive iff s >= t
    std::vector<std::pair<double, double>> pts;  // (fpr, tpr)
    pts.emplace_back(0.0, 0.0);
    std::vector<double> sorted(th.rbegin(), th.rend());
    for (double t : sorted) {
        int64_t tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= t) (labels[i] ? tp : fp)++;
        pts.emplace_back(static_cast<double>(fp) / nneg, static_cast<double>(tp) / npos);
    }
    pts.emplace_back(1.0, 1.0);
    double area = 0.0;
    for (size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    return area;
}

// average precision by exhaustive threshold enumeration (step interpolation)
inline double auprc_threshold(const std::vector<double>& scores,
                              const std::vector<bool>& labels) {
    std::set<double> th(scores.begin(), scores.end());
    int64_t npos = 0;
    for (bool l : labels)
        if (l) ++npos;
    std::vector<double> sorted(th.rbegin(), th.rend());  // descending
    double ap = 0.0, prev_recall = 0.0;
    for (double t : sorted) {
        int64_t tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i)
            if (scores[i] >= t) (labels[i] ? tp : fp)++;
        const double recall = static_cast<double>(tp) / static_cast<double>(npos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// hand ANOVA table: returns (F, df_between, df_within)
struct AnovaHand {
    double f;
    int64_t df_b, df_w;
    double msw;
};

inline AnovaHand anova_table(const std::vector<std::vector<double>>& groups) {
    double grand = 0.0;
    int64_t n = 0;
    for (const auto& g : groups)
        for (double v : g) {
            grand += v;
            ++n;
        }
    grand /= static_cast<double>(n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        double m = 0.0;
        for (double v : g) m += v;
        m /= static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ssw += (v - m) * (v - m);
    }
    AnovaHand h;
    h.df_b = static_cast<int64_t>(groups.size()) - 1;
    h.df_w = n - static_cast<int64_t>(groups.size());
    h.msw = ssw / static_cast<double>(h.df_w);
    h.f = (ssb / static_cast<double>(h.df_b)) / h.msw;
    return h;
}

}  // namespace oracles
