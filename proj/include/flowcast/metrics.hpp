#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowcast {

// Row = true class, column = predicted class.
class ConfusionMatrix {
  public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int num_classes)
        : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

    void record(int label, int predicted);
    std::int64_t count(int label, int predicted) const {
        return counts_[static_cast<std::size_t>(label) * n_ + predicted];
    }
    int num_classes() const { return n_; }
    std::int64_t total() const;
    std::int64_t support(int cls) const;   // row sum
    std::int64_t predicted(int cls) const; // column sum

    void merge(const ConfusionMatrix& other);

  private:
    int n_ = 0;
    std::vector<std::int64_t> counts_;
};

struct ClassReport {
    double precision = 0;  // 0/0 -> 0 convention
    double recall = 0;
    double f1 = 0;
    double gmean = 0;      // sqrt(sensitivity * specificity), one-vs-rest
    std::int64_t support = 0;
    bool undefined = false;  // class absent from labels and predictions
};

// include_class[c] = false drops a class from the macro averages (used to
// skip the reserved UNK class when it never occurs).
std::vector<ClassReport> per_class_report(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);
double macro_f1(const ConfusionMatrix& cm, const std::vector<bool>& include_class = {});
double macro_gmean(const ConfusionMatrix& cm, const std::vector<bool>& include_class = {});

struct LatencyStats {
    double mean_ms = 0;
    double p95_ms = 0;
    std::size_t samples = 0;
};

LatencyStats summarize_latency(std::vector<double> millis, double warmup_fraction = 0.1);

// Everything a fold evaluation reports. Latency is kept out of the
// deterministic metrics files and filled only by the benchmark path.
struct Metrics {
    double accuracy = 0;
    double macro_f1 = 0;
    double gmean = 0;
    ConfusionMatrix confusion;
    std::vector<ClassReport> per_class;
    std::vector<std::int64_t> action_histogram;  // selected structure counts, size 4
    std::size_t num_samples = 0;
};

}  // namespace flowcast
