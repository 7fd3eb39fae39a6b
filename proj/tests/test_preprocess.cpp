#include <set>
#include <string>

#include "doctest.h"
#include "flowcast/error.hpp"
#include "flowcast/preprocess.hpp"
#include "flowcast/rng.hpp"
#include "support/oracles.hpp"

using namespace flowcast;

namespace {

Trace make_trace(const std::vector<std::string>& acts, std::int64_t gap = 10,
                 const std::string& case_id = "c") {
    Trace t;
    t.case_id = case_id;
    std::int64_t ts = 0;
    for (const auto& a : acts) {
        Event e;
        e.case_id = case_id;
        e.activity = a;
        e.timestamp = ts;
        ts += gap;
        t.events.push_back(e);
    }
    return t;
}

}  // namespace

TEST_CASE("vocabulary indexes by first occurrence with UNK at zero") {
    const Trace t = make_trace({"A", "B", "A", "C"});
    const Vocabulary v = build_vocabulary({&t}, "activity",
                                          [](const Event& e) -> const std::string& { return e.activity; });
    CHECK(v.size() == 4);
    CHECK(v.encode("A") == 1);
    CHECK(v.encode("B") == 2);
    CHECK(v.encode("C") == 3);
    CHECK(v.encode("Z") == kUnkIndex);
    CHECK(v.decode(1) == "A");
    CHECK(v.decode(0) == "<UNK>");

    const Vocabulary empty = build_vocabulary({}, "activity",
                                              [](const Event& e) -> const std::string& { return e.activity; });
    CHECK(empty.size() == 1);
}

TEST_CASE("vocabulary size equals distinct count plus UNK on random tokens") {
    Rng rng = seeded_rng(4, "vocab");
    Trace t;
    t.case_id = "c";
    std::set<std::string> distinct;
    for (int i = 0; i < 10000; ++i) {
        Event e;
        e.case_id = "c";
        e.activity = "tok" + std::to_string(uniform_index(rng, 2500));
        e.timestamp = i;
        distinct.insert(e.activity);
        t.events.push_back(e);
    }
    const Vocabulary v = build_vocabulary({&t}, "activity",
                                          [](const Event& e) -> const std::string& { return e.activity; });
    CHECK(v.size() == distinct.size() + 1);
    // every training token encodes to a nonzero index
    for (const auto& e : t.events) CHECK(v.encode(e.activity) != kUnkIndex);
}

TEST_CASE("quantile edges on 1..8 match the interpolation example") {
    const BinEdges be = fit_quantile_bins({1, 2, 3, 4, 5, 6, 7, 8}, 4, "x");
    REQUIRE(be.edges.size() == 5);
    CHECK(be.edges[0] == doctest::Approx(1.0));
    CHECK(be.edges[1] == doctest::Approx(2.75));
    CHECK(be.edges[2] == doctest::Approx(4.5));
    CHECK(be.edges[3] == doctest::Approx(6.25));
    CHECK(be.edges[4] == doctest::Approx(8.0));
    CHECK(be.bin_count() == 4);

    // matches the independent quantile oracle on a random sample
    Rng rng = seeded_rng(11, "quantile");
    std::vector<double> values;
    for (int i = 0; i < 1000; ++i) values.push_back(uniform_range(rng, -3, 9));
    const BinEdges r = fit_quantile_bins(values, 4, "x");
    for (int i = 0; i <= 4; ++i)
        CHECK(r.edges[static_cast<std::size_t>(i)] ==
              doctest::Approx(oracle::quantile_linear(values, i / 4.0)).epsilon(1e-12));
}

TEST_CASE("degenerate samples collapse to a single bin") {
    const BinEdges be = fit_quantile_bins({5, 5, 5, 5, 5}, 4, "x");
    CHECK(be.edges.size() == 1);
    CHECK(be.bin_count() == 1);
    CHECK(discretize(be, 5) == 1);
    CHECK(discretize(be, -100) == 1);
    CHECK(discretize(be, 100) == 1);

    CHECK_THROWS_AS(fit_quantile_bins({}, 4, "x"), DataError);
    CHECK_THROWS_AS(fit_quantile_bins({1.0}, 1, "x"), ConfigError);
}

TEST_CASE("equal-frequency property: 10k uniform samples, 2500 +/- 2 per bin") {
    Rng rng = seeded_rng(21, "uniform");
    std::vector<double> values;
    for (int i = 0; i < 10000; ++i) values.push_back(uniform_real(rng));
    const BinEdges be = fit_quantile_bins(values, 4, "x");
    REQUIRE(be.bin_count() == 4);
    std::array<int, 5> counts{};
    for (double v : values) ++counts[static_cast<std::size_t>(discretize(be, v))];
    for (int b = 1; b <= 4; ++b) {
        CHECK(counts[static_cast<std::size_t>(b)] >= 2498);
        CHECK(counts[static_cast<std::size_t>(b)] <= 2502);
    }
}

TEST_CASE("discretize clamps and respects half-open intervals") {
    BinEdges be;
    be.attribute_name = "x";
    be.edges = {1, 2.75, 4.5, 6.25, 8};
    CHECK(discretize(be, 3) == 2);
    CHECK(discretize(be, 1) == 1);      // x = q0 clamps low
    CHECK(discretize(be, 0.5) == 1);    // below range
    CHECK(discretize(be, 100) == 4);    // above range clamps high
    CHECK(discretize(be, 2.75) == 1);   // boundary belongs to the lower bin
    CHECK(discretize(be, 2.7500001) == 2);
}

TEST_CASE("order preservation for interior points") {
    Rng rng = seeded_rng(31, "order");
    std::vector<double> values;
    for (int i = 0; i < 500; ++i) values.push_back(uniform_range(rng, 0, 100));
    const BinEdges be = fit_quantile_bins(values, 4, "x");
    for (int trial = 0; trial < 200; ++trial) {
        double x = uniform_range(rng, 0, 100);
        double y = uniform_range(rng, 0, 100);
        if (x > y) std::swap(x, y);
        CHECK(discretize(be, x) <= discretize(be, y));
    }
}

TEST_CASE("temporal features match the stated arithmetic") {
    Trace t = make_trace({"A", "B", "C"}, 0);
    t.events[0].timestamp = 0;
    t.events[1].timestamp = 10;
    t.events[2].timestamp = 25;
    const TemporalFeatures tf = extract_temporal_features(t);
    CHECK(tf.dt_prev == std::vector<double>{0, 10, 15});
    CHECK(tf.dt_start == std::vector<double>{0, 10, 25});

    const Trace single = make_trace({"A"});
    const TemporalFeatures tfs = extract_temporal_features(single);
    CHECK(tfs.dt_prev == std::vector<double>{0});
    CHECK(tfs.dt_start == std::vector<double>{0});
}

TEST_CASE("dt_start is the prefix sum of dt_prev") {
    Rng rng = seeded_rng(41, "monotone");
    Trace t;
    t.case_id = "c";
    std::int64_t ts = 1000;
    for (int i = 0; i < 50; ++i) {
        Event e;
        e.case_id = "c";
        e.activity = "A";
        ts += uniform_int(rng, 0, 500);
        e.timestamp = ts;
        t.events.push_back(e);
    }
    const TemporalFeatures tf = extract_temporal_features(t);
    double acc = 0;
    for (std::size_t i = 0; i < tf.dt_prev.size(); ++i) {
        acc += tf.dt_prev[i];
        CHECK(tf.dt_start[i] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("encode_log is deterministic and maps unknowns to UNK") {
    const EventLog train_log = generate_synthetic_log({4, 20, 3, 6, 0.3, 0.2}, 5);
    std::vector<const Trace*> train_ptrs;
    for (const auto& t : train_log.traces) train_ptrs.push_back(&t);
    const Encoders enc = fit_encoders(train_ptrs, EncoderOptions{});

    // training log encoded with its own vocabularies has no UNK activities
    const auto encoded = encode_log(train_log, enc);
    for (const auto& t : encoded)
        for (const auto& e : t.events) {
            CHECK(e.activity_id != kUnkIndex);
            CHECK(e.dt_prev_bin >= 1);
            CHECK(e.dt_prev_bin <= enc.dt_prev_bins.bin_count());
        }

    // a novel activity and only it encodes to UNK
    EventLog test_log = train_log;
    test_log.traces[0].events[1].activity = "NOVEL";
    const auto enc_test = encode_log(test_log, enc);
    std::size_t unks = 0;
    for (const auto& t : enc_test)
        for (const auto& e : t.events)
            if (e.activity_id == kUnkIndex) ++unks;
    CHECK(unks == 1);
    CHECK(enc_test[0].events[1].activity_id == kUnkIndex);

    // re-encoding twice gives identical output
    const auto encoded2 = encode_log(train_log, enc);
    REQUIRE(encoded.size() == encoded2.size());
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        REQUIRE(encoded[i].events.size() == encoded2[i].events.size());
        for (std::size_t j = 0; j < encoded[i].events.size(); ++j) {
            CHECK(encoded[i].events[j].activity_id == encoded2[i].events[j].activity_id);
            CHECK(encoded[i].events[j].dt_prev_bin == encoded2[i].events[j].dt_prev_bin);
        }
    }
}

TEST_CASE("fitting requires training traces") {
    CHECK_THROWS_AS(fit_encoders({}, EncoderOptions{}), DataError);
}
