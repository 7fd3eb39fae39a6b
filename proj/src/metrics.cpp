#include "flowcast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "flowcast/error.hpp"

namespace flowcast {

void ConfusionMatrix::record(int label, int predicted) {
    if (label < 0 || label >= n_ || predicted < 0 || predicted >= n_)
        throw InternalError("confusion matrix index out of range");
    ++counts_[static_cast<std::size_t>(label) * n_ + predicted];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::int64_t ConfusionMatrix::support(int cls) const {
    std::int64_t s = 0;
    for (int j = 0; j < n_; ++j) s += count(cls, j);
    return s;
}

std::int64_t ConfusionMatrix::predicted(int cls) const {
    std::int64_t s = 0;
    for (int i = 0; i < n_; ++i) s += count(i, cls);
    return s;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw InternalError("confusion matrix size mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::vector<ClassReport> per_class_report(const ConfusionMatrix& cm) {
    const int n = cm.num_classes();
    const std::int64_t total = cm.total();
    std::vector<ClassReport> out(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        ClassReport& r = out[static_cast<std::size_t>(c)];
        const std::int64_t tp = cm.count(c, c);
        const std::int64_t fn = cm.support(c) - tp;
        const std::int64_t fp = cm.predicted(c) - tp;
        const std::int64_t tn = total - tp - fn - fp;
        r.support = cm.support(c);
        r.undefined = (r.support == 0 && cm.predicted(c) == 0);
        r.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        r.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        r.f1 = (r.precision + r.recall) > 0
                   ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                   : 0.0;
        const double sens = r.recall;
        const double spec = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
        r.gmean = std::sqrt(sens * spec);
    }
    return out;
}

double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total == 0) return 0.0;
    std::int64_t correct = 0;
    for (int c = 0; c < cm.num_classes(); ++c) correct += cm.count(c, c);
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

double macro_average(const ConfusionMatrix& cm, const std::vector<bool>& include_class,
                     double ClassReport::* field) {
    const auto reports = per_class_report(cm);
    double sum = 0;
    int n = 0;
    for (int c = 0; c < cm.num_classes(); ++c) {
        if (!include_class.empty() && !include_class[static_cast<std::size_t>(c)]) continue;
        sum += reports[static_cast<std::size_t>(c)].*field;
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

}  // namespace

double macro_f1(const ConfusionMatrix& cm, const std::vector<bool>& include_class) {
    return macro_average(cm, include_class, &ClassReport::f1);
}

double macro_gmean(const ConfusionMatrix& cm, const std::vector<bool>& include_class) {
    return macro_average(cm, include_class, &ClassReport::gmean);
}

LatencyStats summarize_latency(std::vector<double> millis, double warmup_fraction) {
    LatencyStats st;
    if (millis.empty()) return st;
    const std::size_t skip = static_cast<std::size_t>(static_cast<double>(millis.size()) * warmup_fraction);
    millis.erase(millis.begin(), millis.begin() + static_cast<std::ptrdiff_t>(std::min(skip, millis.size() - 1)));
    std::sort(millis.begin(), millis.end());
    double sum = 0;
    for (double v : millis) sum += v;
    st.samples = millis.size();
    st.mean_ms = sum / static_cast<double>(millis.size());
    const std::size_t idx =
        std::min(millis.size() - 1,
                 static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(millis.size()))) - 1);
    st.p95_ms = millis[idx];
    return st;
}

}  // namespace flowcast
