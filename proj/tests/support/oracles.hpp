#pragma once

// Brute-force reference implementations used as independent oracles. These
// deliberately avoid the library's construction paths: edge sets are built by
// quadratic scans and metrics straight from label/prediction lists.

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Edge = std::pair<int, int>;

// Quadratic scan over all position pairs; 1-based positions.
struct EdgeSets {
    std::set<Edge> forward, backward, repeat;
};

inline EdgeSets brute_force_edges(const std::vector<int>& acts) {
    const int k = static_cast<int>(acts.size());
    EdgeSets out;
    for (int i = 1; i < k; ++i) {
        out.forward.insert({i, i + 1});
        out.backward.insert({i + 1, i});
    }
    for (int i = 1; i <= k; ++i)
        for (int j = i + 1; j <= k; ++j) {
            if (acts[static_cast<std::size_t>(i - 1)] != acts[static_cast<std::size_t>(j - 1)])
                continue;
            if (j + 1 <= k) out.repeat.insert({i, j + 1});
            if (i + 1 <= k) out.repeat.insert({j, i + 1});
        }
    return out;
}

// One-vs-rest decomposition straight from label/prediction pairs.
struct BinaryCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BinaryCounts one_vs_rest(const std::vector<int>& labels, const std::vector<int>& preds,
                                int cls) {
    BinaryCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool is_cls = labels[i] == cls;
        const bool pred_cls = preds[i] == cls;
        if (is_cls && pred_cls) ++c.tp;
        else if (!is_cls && pred_cls) ++c.fp;
        else if (is_cls && !pred_cls) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline double accuracy(const std::vector<int>& labels, const std::vector<int>& preds) {
    if (labels.empty()) return 0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == preds[i]) ++ok;
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

inline double macro_f1(const std::vector<int>& labels, const std::vector<int>& preds,
                       const std::vector<int>& classes) {
    double sum = 0;
    for (int cls : classes) {
        const auto c = one_vs_rest(labels, preds, cls);
        const double prec = (c.tp + c.fp) > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
        const double rec = (c.tp + c.fn) > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
        sum += (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    return classes.empty() ? 0.0 : sum / static_cast<double>(classes.size());
}

inline double macro_gmean(const std::vector<int>& labels, const std::vector<int>& preds,
                          const std::vector<int>& classes) {
    double sum = 0;
    for (int cls : classes) {
        const auto c = one_vs_rest(labels, preds, cls);
        const double sens = (c.tp + c.fn) > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
        const double spec = (c.tn + c.fp) > 0 ? double(c.tn) / double(c.tn + c.fp) : 0.0;
        sum += std::sqrt(sens * spec);
    }
    return classes.empty() ? 0.0 : sum / static_cast<double>(classes.size());
}

// Sorted-sample linear-interpolation quantile, written independently.
inline double quantile_linear(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace oracle
