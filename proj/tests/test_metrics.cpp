#include <vector>

#include "doctest.h"
#include "flowcast/metrics.hpp"
#include "flowcast/rng.hpp"
#include "support/oracles.hpp"

using namespace flowcast;

namespace {

ConfusionMatrix from_pairs(int classes, const std::vector<int>& labels,
                           const std::vector<int>& preds) {
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) cm.record(labels[i], preds[i]);
    return cm;
}

}  // namespace

TEST_CASE("perfect diagonal scores 1.0 everywhere") {
    ConfusionMatrix cm(3);
    cm.record(0, 0);
    cm.record(1, 1);
    cm.record(2, 2);
    CHECK(accuracy(cm) == doctest::Approx(1.0));
    CHECK(macro_f1(cm) == doctest::Approx(1.0));
    CHECK(macro_gmean(cm) == doctest::Approx(1.0));
}

TEST_CASE("hand-computed two-class macro F1") {
    // [[5,5],[0,10]]: class-0 F1 = 2/3, class-1 F1 = 0.8, macro = 0.73333
    ConfusionMatrix cm(2);
    for (int i = 0; i < 5; ++i) cm.record(0, 0);
    for (int i = 0; i < 5; ++i) cm.record(0, 1);
    for (int i = 0; i < 10; ++i) cm.record(1, 1);
    CHECK(macro_f1(cm) == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
    CHECK(accuracy(cm) == doctest::Approx(0.75));
    // row sums equal class supports
    CHECK(cm.support(0) == 10);
    CHECK(cm.support(1) == 10);
}

TEST_CASE("absent classes contribute zero and are flagged") {
    ConfusionMatrix cm(3);
    cm.record(0, 0);
    cm.record(1, 1);
    const auto reports = per_class_report(cm);
    CHECK(reports[2].undefined);
    CHECK(reports[2].f1 == 0.0);
    // macro over all three classes drags the mean down
    CHECK(macro_f1(cm) == doctest::Approx(2.0 / 3.0));
    // masking the absent class recovers the two-class mean
    CHECK(macro_f1(cm, {true, true, false}) == doctest::Approx(1.0));
}

TEST_CASE("zero-sensitivity class has zero per-class gmean") {
    ConfusionMatrix cm(2);
    cm.record(0, 1);  // class 0 never predicted correctly
    cm.record(1, 1);
    const auto reports = per_class_report(cm);
    CHECK(reports[0].gmean == 0.0);
}

TEST_CASE("metrics match the brute-force oracle on random label sets") {
    Rng rng = seeded_rng(100, "metric-oracle");
    for (int trial = 0; trial < 100; ++trial) {
        const int classes = 2 + static_cast<int>(uniform_index(rng, 6));
        const std::size_t n = 20 + uniform_index(rng, 200);
        std::vector<int> labels(n), preds(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)));
            preds[i] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)));
        }
        const ConfusionMatrix cm = from_pairs(classes, labels, preds);
        std::vector<int> all_classes(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c) all_classes[static_cast<std::size_t>(c)] = c;

        CHECK(accuracy(cm) == doctest::Approx(oracle::accuracy(labels, preds)).epsilon(1e-12));
        CHECK(macro_f1(cm) ==
              doctest::Approx(oracle::macro_f1(labels, preds, all_classes)).epsilon(1e-12));
        CHECK(macro_gmean(cm) ==
              doctest::Approx(oracle::macro_gmean(labels, preds, all_classes)).epsilon(1e-12));
    }
}

TEST_CASE("latency summary discards warmup and reports p95") {
    std::vector<double> ms;
    for (int i = 0; i < 100; ++i) ms.push_back(static_cast<double>(i + 1));
    const LatencyStats st = summarize_latency(ms, 0.1);
    CHECK(st.samples == 90);
    // remaining values are 11..100; p95 = value at ceil(0.95 * 90) = 86th
    CHECK(st.mean_ms == doctest::Approx(55.5));
    CHECK(st.p95_ms == doctest::Approx(96.0));
}
