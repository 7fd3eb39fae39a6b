#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowcast {

// ---------------------------------------------------------------------------
// Raw process data model
// ---------------------------------------------------------------------------

struct Event {
    std::string case_id;
    std::string activity;
    std::int64_t timestamp = 0;  // unix seconds
    std::string resource;        // empty when absent
    std::vector<std::pair<std::string, std::string>> extras;

    bool operator==(const Event&) const = default;
};

struct Trace {
    std::string case_id;
    std::vector<Event> events;

    std::size_t length() const { return events.size(); }
    bool operator==(const Trace&) const = default;
};

struct EventLog {
    std::vector<Trace> traces;
    std::string source_name;

    std::size_t num_events() const;
    bool operator==(const EventLog& other) const { return traces == other.traces; }
};

struct LogStats {
    std::size_t cases = 0;
    std::size_t events = 0;
    std::size_t distinct_activities = 0;
    double avg_case_length = 0.0;
    std::size_t max_case_length = 0;
    double case_repetition_ratio = 0.0;  // fraction of cases with a repeated activity
};

LogStats compute_stats(const EventLog& log);

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSchema {
    std::string case_column = "case";
    std::string activity_column = "activity";
    std::string timestamp_column = "timestamp";
    std::string resource_column;  // optional, empty = none
    std::vector<std::string> extra_columns;
    std::string timestamp_format = "%Y/%m/%d %H:%M:%S";
    char delimiter = ',';
};

// Strict timestamp handling with a fixed token set (%Y %m %d %H %M %S).
// Everything is plain calendar arithmetic, no timezone lookup involved.
std::int64_t parse_timestamp(const std::string& text, const std::string& format);
std::string format_timestamp(std::int64_t unix_seconds, const std::string& format);

// Groups rows by case id and sorts each trace by timestamp (stable, so file
// order is preserved for equal timestamps). Throws DataError with the line
// number for unparsable rows and ConfigError for schema problems.
EventLog parse_csv_log(const std::string& path, const CsvSchema& schema);

void write_csv_log(const EventLog& log, const std::string& path, const CsvSchema& schema);

// ---------------------------------------------------------------------------
// Prefix enumeration
// ---------------------------------------------------------------------------

// A k-prefix of a trace together with its ground-truth next activity. Holds a
// pointer into the owning log; the log must outlive the sample.
struct PrefixSample {
    const Trace* trace = nullptr;
    std::size_t k = 0;

    std::span<const Event> prefix() const { return {trace->events.data(), k}; }
    const std::string& label() const { return trace->events[k].activity; }
};

// One sample per k in [min_k, n-1]; empty when the trace is too short.
std::vector<PrefixSample> enumerate_prefixes(const Trace& trace, std::size_t min_k = 1);

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

enum class FoldRole : std::uint8_t { Test, Validation, TrainBaseline, TrainRl };

const char* fold_role_name(FoldRole role);

struct FoldAssignment {
    int num_folds = 3;
    // test_fold[t] = the single fold in which trace t is a test trace
    std::vector<int> test_fold;
    // roles[f][t] = role of trace t inside fold f
    std::vector<std::vector<FoldRole>> roles;

    std::vector<std::size_t> traces_with_role(int fold, FoldRole role) const;
};

// Trace-level split, deterministic given the seed. Test sets partition the
// log; the remaining traces are split 80/20 into train/validation (extra
// traces go to train) and the train part 50/50 into baseline and RL halves
// (extra trace goes to the RL half).
FoldAssignment split_folds(const EventLog& log, std::uint64_t seed, int num_folds = 3);

void write_fold_csv(const FoldAssignment& folds, const EventLog& log, const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic logs
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::size_t alphabet_size = 4;   // >= 2
    std::size_t num_traces = 10;     // >= 1
    std::size_t min_length = 3;
    std::size_t max_length = 6;
    double p_loop = 0.0;             // probability of revisiting an earlier activity
    double p_branch = 0.0;           // probability of a random (vs chained) fresh activity
};

// Deterministic generator. With p_loop = 0 a trace never repeats an activity
// (its length is clamped to the alphabet size). When a revisit happens, the
// activity that followed is the one that preceded the revisited activity's
// first occurrence, so loops carry a learnable long-range signal.
EventLog generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace flowcast
