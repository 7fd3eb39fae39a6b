#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "flowcast/error.hpp"
#include "flowcast/event_log.hpp"
#include "flowcast/rng.hpp"

using namespace flowcast;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kLoanCsv =
    "case,activity,timestamp,resource\n"
    "1,SUBMITTED-COMPLETE,2011/12/25 0:18:09,1\n"
    "1,PARTLYSUBMITTED-COMPLETE,2011/12/25 0:38:44,1\n"
    "1,PREACCEPTED-COMPLETE,2011/12/25 0:39:37,1\n"
    "1,Completeren aanvraag-COMPLETE,2011/12/25 0:39:45,2\n";

CsvSchema schema_with_resource() {
    CsvSchema s;
    s.resource_column = "resource";
    return s;
}

}  // namespace

TEST_CASE("timestamps parse and format through the default pattern") {
    const std::int64_t t = parse_timestamp("2011/12/25 0:18:09", "%Y/%m/%d %H:%M:%S");
    CHECK(format_timestamp(t, "%Y/%m/%d %H:%M:%S") == "2011/12/25 00:18:09");
    CHECK(parse_timestamp("1970/01/01 00:00:00", "%Y/%m/%d %H:%M:%S") == 0);
    CHECK(parse_timestamp("1970/01/02 00:00:01", "%Y/%m/%d %H:%M:%S") == 86401);
    CHECK_THROWS_AS(parse_timestamp("2011-12-25 00:00:00", "%Y/%m/%d %H:%M:%S"), DataError);
    CHECK_THROWS_AS(parse_timestamp("2011/13/25 00:00:00", "%Y/%m/%d %H:%M:%S"), DataError);
}

TEST_CASE("loan example CSV parses into one four-event trace") {
    const std::string path = temp_path("fc_loan.csv");
    write_file(path, kLoanCsv);
    const EventLog log = parse_csv_log(path, schema_with_resource());

    REQUIRE(log.traces.size() == 1);
    REQUIRE(log.traces[0].events.size() == 4);
    const LogStats st = compute_stats(log);
    CHECK(st.cases == 1);
    CHECK(st.events == 4);
    CHECK(st.distinct_activities == 4);
    CHECK(log.traces[0].events[0].activity == "SUBMITTED-COMPLETE");
    CHECK(log.traces[0].events[3].activity == "Completeren aanvraag-COMPLETE");
    CHECK(log.traces[0].events[3].resource == "2");
    // temporal ordering holds
    for (std::size_t i = 1; i < 4; ++i)
        CHECK(log.traces[0].events[i - 1].timestamp <= log.traces[0].events[i].timestamp);
}

TEST_CASE("single-row file yields a single length-1 trace") {
    const std::string path = temp_path("fc_single.csv");
    write_file(path, "case,activity,timestamp\nc1,A,2020/01/01 10:00:00\n");
    const EventLog log = parse_csv_log(path, CsvSchema{});
    REQUIRE(log.traces.size() == 1);
    CHECK(log.traces[0].events.size() == 1);
}

TEST_CASE("shuffled rows group and sort to match a brute-force oracle") {
    Rng rng = seeded_rng(99, "shuffle-csv");
    struct Row {
        int case_id;
        int order;  // timestamp offset
    };
    std::vector<Row> rows;
    std::map<int, int> expected_counts;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 10; ++i) {
            rows.push_back({c, i});
            ++expected_counts[c];
        }
    shuffle(rows, rng);

    std::ostringstream csv;
    csv << "case,activity,timestamp\n";
    for (const Row& r : rows)
        csv << "c" << r.case_id << ",A" << (r.order % 4) << ",2020/01/0" << 1 + r.case_id % 9
            << " 0" << r.order / 10 << ":0" << r.order % 10 << ":00\n";
    const std::string path = temp_path("fc_shuffled.csv");
    write_file(path, csv.str());

    const EventLog log = parse_csv_log(path, CsvSchema{});
    REQUIRE(log.traces.size() == 10);
    std::size_t total = 0;
    for (const auto& t : log.traces) {
        const int cid = std::stoi(t.case_id.substr(1));
        CHECK(t.events.size() == static_cast<std::size_t>(expected_counts[cid]));
        total += t.events.size();
        for (std::size_t i = 1; i < t.events.size(); ++i)
            CHECK(t.events[i - 1].timestamp <= t.events[i].timestamp);
    }
    CHECK(total == 100);
}

TEST_CASE("schema and data errors are precise") {
    const std::string path = temp_path("fc_err.csv");

    write_file(path, "case,activity,timestamp\nc1,A,2020/01/01 10:00:00\n");
    CsvSchema bad;
    bad.activity_column = "missing_col";
    CHECK_THROWS_WITH_AS(parse_csv_log(path, bad),
                         doctest::Contains("missing_col"), ConfigError);

    write_file(path, "case,activity,timestamp\nc1,A,not-a-time\n");
    CHECK_THROWS_WITH_AS(parse_csv_log(path, CsvSchema{}), doctest::Contains("line 2"), DataError);

    write_file(path, "");
    CHECK_THROWS_AS(parse_csv_log(path, CsvSchema{}), DataError);

    write_file(path, "case,activity,timestamp\n");
    CHECK_THROWS_AS(parse_csv_log(path, CsvSchema{}), DataError);
}

TEST_CASE("write then reparse is identity") {
    const std::string path = temp_path("fc_roundtrip_src.csv");
    write_file(path, kLoanCsv);
    const EventLog log = parse_csv_log(path, schema_with_resource());

    const std::string out = temp_path("fc_roundtrip_out.csv");
    write_csv_log(log, out, schema_with_resource());
    const EventLog again = parse_csv_log(out, schema_with_resource());
    CHECK(log == again);
}

TEST_CASE("prefix enumeration counts and labels") {
    Trace t;
    t.case_id = "c";
    for (int i = 0; i < 6; ++i) {
        Event e;
        e.case_id = "c";
        e.activity = "A" + std::to_string(i);
        e.timestamp = i * 10;
        t.events.push_back(e);
    }

    auto samples = enumerate_prefixes(t, 1);
    REQUIRE(samples.size() == 5);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].k == i + 1);
        CHECK(samples[i].label() == t.events[i + 1].activity);
        CHECK(samples[i].prefix().size() == i + 1);
    }

    Trace single;
    single.case_id = "s";
    single.events.push_back(t.events[0]);
    CHECK(enumerate_prefixes(single, 1).empty());
}

TEST_CASE("prefix totals match the summation oracle on a random log") {
    const EventLog log = generate_synthetic_log({6, 50, 1, 9, 0.3, 0.2}, 123);
    for (std::size_t min_k : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        std::size_t expected = 0;
        for (const auto& t : log.traces)
            expected += t.events.size() > min_k ? t.events.size() - min_k : 0;
        std::size_t got = 0;
        for (const auto& t : log.traces) got += enumerate_prefixes(t, min_k).size();
        CHECK(got == expected);
    }
}

TEST_CASE("fold splits partition traces with train-side rounding") {
    const EventLog nine = generate_synthetic_log({4, 9, 3, 5, 0.0, 0.0}, 1);
    const FoldAssignment f9 = split_folds(nine, 42);
    std::set<std::size_t> seen;
    for (int f = 0; f < 3; ++f) {
        const auto test = f9.traces_with_role(f, FoldRole::Test);
        CHECK(test.size() == 3);
        for (auto t : test) CHECK(seen.insert(t).second);  // pairwise disjoint
    }
    CHECK(seen.size() == 9);

    const EventLog ten = generate_synthetic_log({4, 10, 3, 5, 0.0, 0.0}, 1);
    const FoldAssignment f10 = split_folds(ten, 42);
    std::multiset<std::size_t> sizes;
    for (int f = 0; f < 3; ++f) sizes.insert(f10.traces_with_role(f, FoldRole::Test).size());
    CHECK(sizes == std::multiset<std::size_t>{3, 3, 4});

    // same log, same seed -> identical assignment
    const FoldAssignment again = split_folds(ten, 42);
    CHECK(again.test_fold == f10.test_fold);
    for (int f = 0; f < 3; ++f) CHECK(again.roles[f] == f10.roles[f]);

    // baseline and RL halves are disjoint and cover the training portion
    for (int f = 0; f < 3; ++f) {
        const auto base = f10.traces_with_role(f, FoldRole::TrainBaseline);
        const auto rl = f10.traces_with_role(f, FoldRole::TrainRl);
        const auto val = f10.traces_with_role(f, FoldRole::Validation);
        const auto test = f10.traces_with_role(f, FoldRole::Test);
        CHECK(base.size() + rl.size() + val.size() + test.size() == 10);
        std::set<std::size_t> b(base.begin(), base.end());
        for (auto t : rl) CHECK(!b.count(t));
        // 80/20 rounding toward training, 50/50 with the extra trace to RL
        const std::size_t rest = 10 - test.size();
        CHECK(val.size() == rest / 5);
        const std::size_t train = rest - val.size();
        CHECK(base.size() == train / 2);
        CHECK(rl.size() == train - train / 2);
    }

    const EventLog two = generate_synthetic_log({4, 2, 3, 5, 0.0, 0.0}, 1);
    CHECK_THROWS_AS(split_folds(two, 42), DataError);
}

TEST_CASE("synthetic generator honors p_loop and determinism") {
    // p_loop = 0 forbids repeats entirely
    const EventLog clean = generate_synthetic_log({4, 10, 3, 6, 0.0, 0.0}, 7);
    CHECK(clean.traces.size() == 10);
    for (const auto& t : clean.traces) {
        std::set<std::string> seen;
        for (const auto& e : t.events) CHECK(seen.insert(e.activity).second);
    }

    // p_loop = 0.5 produces repeats in well over 20% of traces (scan oracle)
    const EventLog loopy = generate_synthetic_log({4, 100, 3, 6, 0.5, 0.0}, 7);
    std::size_t with_repeat = 0;
    for (const auto& t : loopy.traces) {
        std::set<std::string> seen;
        bool rep = false;
        for (const auto& e : t.events)
            if (!seen.insert(e.activity).second) rep = true;
        if (rep) ++with_repeat;
    }
    CHECK(static_cast<double>(with_repeat) / 100.0 > 0.2);

    // timestamps strictly increase within a trace
    for (const auto& t : loopy.traces)
        for (std::size_t i = 1; i < t.events.size(); ++i)
            CHECK(t.events[i].timestamp > t.events[i - 1].timestamp);

    // same spec/seed -> byte-identical CSV
    CsvSchema schema = schema_with_resource();
    const std::string p1 = temp_path("fc_synth1.csv"), p2 = temp_path("fc_synth2.csv");
    write_csv_log(generate_synthetic_log({4, 100, 3, 6, 0.5, 0.0}, 7), p1, schema);
    write_csv_log(generate_synthetic_log({4, 100, 3, 6, 0.5, 0.0}, 7), p2, schema);
    CHECK(read_file(p1) == read_file(p2));

    CHECK_THROWS_AS(generate_synthetic_log({1, 10, 3, 6, 0.0, 0.0}, 7), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_log({4, 10, 6, 3, 0.0, 0.0}, 7), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_log({4, 10, 3, 6, 1.5, 0.0}, 7), ConfigError);
}

TEST_CASE("fold export writes one row per case and fold") {
    const EventLog log = generate_synthetic_log({4, 6, 3, 5, 0.0, 0.0}, 3);
    const FoldAssignment folds = split_folds(log, 5);
    const std::string path = temp_path("fc_folds.csv");
    write_fold_csv(folds, log, path);
    const std::string content = read_file(path);
    std::size_t lines = std::count(content.begin(), content.end(), '\n');
    CHECK(lines == 1 + 3 * 6);
}
