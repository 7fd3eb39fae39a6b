#include "flowcast/event_log.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "flowcast/csv.hpp"
#include "flowcast/error.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

std::size_t EventLog::num_events() const {
    std::size_t n = 0;
    for (const auto& t : traces) n += t.events.size();
    return n;
}

LogStats compute_stats(const EventLog& log) {
    LogStats s;
    s.cases = log.traces.size();
    std::unordered_set<std::string> acts;
    std::size_t repeated_cases = 0;
    for (const auto& t : log.traces) {
        s.events += t.events.size();
        s.max_case_length = std::max(s.max_case_length, t.events.size());
        std::unordered_set<std::string> seen;
        bool has_repeat = false;
        for (const auto& e : t.events) {
            acts.insert(e.activity);
            if (!seen.insert(e.activity).second) has_repeat = true;
        }
        if (has_repeat) ++repeated_cases;
    }
    s.distinct_activities = acts.size();
    if (s.cases > 0) {
        s.avg_case_length = static_cast<double>(s.events) / static_cast<double>(s.cases);
        s.case_repetition_ratio = static_cast<double>(repeated_cases) / static_cast<double>(s.cases);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

bool read_digits(const std::string& s, std::size_t& pos, int max_digits, long long& out) {
    std::size_t start = pos;
    long long v = 0;
    while (pos < s.size() && pos - start < static_cast<std::size_t>(max_digits) &&
           s[pos] >= '0' && s[pos] <= '9') {
        v = v * 10 + (s[pos] - '0');
        ++pos;
    }
    if (pos == start) return false;
    out = v;
    return true;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text, const std::string& format) {
    long long year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            char tok = format[++f];
            bool ok = true;
            switch (tok) {
                case 'Y': ok = read_digits(text, pos, 4, year); break;
                case 'm': ok = read_digits(text, pos, 2, month); break;
                case 'd': ok = read_digits(text, pos, 2, day); break;
                case 'H': ok = read_digits(text, pos, 2, hour); break;
                case 'M': ok = read_digits(text, pos, 2, minute); break;
                case 'S': ok = read_digits(text, pos, 2, second); break;
                default:
                    throw ConfigError(std::string("unsupported timestamp format token: %") + tok);
            }
            if (!ok) throw DataError("cannot parse timestamp '" + text + "' with format '" + format + "'");
        } else {
            if (pos >= text.size() || text[pos] != format[f])
                throw DataError("cannot parse timestamp '" + text + "' with format '" + format + "'");
            ++pos;
        }
    }
    if (pos != text.size())
        throw DataError("trailing characters in timestamp '" + text + "'");
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
        throw DataError("timestamp field out of range in '" + text + "'");
    return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 +
           hour * 3600 + minute * 60 + second;
}

std::string format_timestamp(std::int64_t unix_seconds, const std::string& format) {
    std::int64_t days = unix_seconds / 86400;
    std::int64_t rem = unix_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    const int hh = static_cast<int>(rem / 3600), mm = static_cast<int>((rem % 3600) / 60),
              ss = static_cast<int>(rem % 60);
    std::string out;
    char buf[24];
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            char tok = format[++f];
            long long v = 0;
            int width = 2;
            switch (tok) {
                case 'Y': v = y; width = 4; break;
                case 'm': v = m; break;
                case 'd': v = d; break;
                case 'H': v = hh; break;
                case 'M': v = mm; break;
                case 'S': v = ss; break;
                default:
                    throw ConfigError(std::string("unsupported timestamp format token: %") + tok);
            }
            std::snprintf(buf, sizeof(buf), "%0*lld", width, v);
            out += buf;
        } else {
            out.push_back(format[f]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

EventLog parse_csv_log(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open event log file: " + path);

    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError("empty event log file: " + path);
    auto header = csv::split_row(header_line, schema.delimiter);

    auto find_col = [&](const std::string& name, bool required) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        if (required)
            throw ConfigError("event log schema: required column '" + name + "' not found in " + path);
        return -1;
    };

    const int case_idx = find_col(schema.case_column, true);
    const int act_idx = find_col(schema.activity_column, true);
    const int ts_idx = find_col(schema.timestamp_column, true);
    const int res_idx = schema.resource_column.empty() ? -1 : find_col(schema.resource_column, true);
    std::vector<int> extra_idx;
    for (const auto& name : schema.extra_columns) extra_idx.push_back(find_col(name, true));

    // case id -> position in `order`, so trace order follows first appearance
    std::unordered_map<std::string, std::size_t> case_pos;
    std::vector<Trace> traces;

    std::string line;
    std::size_t line_no = 1;
    std::size_t n_events = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = csv::split_row(line, schema.delimiter);
        auto field = [&](int idx) -> const std::string& {
            if (idx < 0 || static_cast<std::size_t>(idx) >= fields.size())
                throw DataError("line " + std::to_string(line_no) + ": too few columns");
            return fields[static_cast<std::size_t>(idx)];
        };
        Event ev;
        ev.case_id = field(case_idx);
        ev.activity = field(act_idx);
        if (ev.activity.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty activity name");
        try {
            ev.timestamp = parse_timestamp(field(ts_idx), schema.timestamp_format);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (res_idx >= 0) ev.resource = field(res_idx);
        for (std::size_t j = 0; j < extra_idx.size(); ++j)
            ev.extras.emplace_back(schema.extra_columns[j], field(extra_idx[j]));

        auto [it, inserted] = case_pos.try_emplace(ev.case_id, traces.size());
        if (inserted) {
            traces.push_back(Trace{ev.case_id, {}});
        }
        traces[it->second].events.push_back(std::move(ev));
        ++n_events;
    }
    if (n_events == 0) throw DataError("event log has no event rows: " + path);

    for (auto& t : traces)
        std::stable_sort(t.events.begin(), t.events.end(),
                         [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });

    EventLog log;
    log.traces = std::move(traces);
    log.source_name = path;
    return log;
}

void write_csv_log(const EventLog& log, const std::string& path, const CsvSchema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file: " + path);
    std::vector<std::string> header = {schema.case_column, schema.activity_column,
                                       schema.timestamp_column};
    if (!schema.resource_column.empty()) header.push_back(schema.resource_column);
    for (const auto& name : schema.extra_columns) header.push_back(name);
    csv::write_row(out, header, schema.delimiter);

    std::vector<std::string> row;
    for (const auto& t : log.traces) {
        for (const auto& e : t.events) {
            row.clear();
            row.push_back(e.case_id);
            row.push_back(e.activity);
            row.push_back(format_timestamp(e.timestamp, schema.timestamp_format));
            if (!schema.resource_column.empty()) row.push_back(e.resource);
            for (const auto& name : schema.extra_columns) {
                std::string value;
                for (const auto& [k, v] : e.extras)
                    if (k == name) { value = v; break; }
                row.push_back(value);
            }
            csv::write_row(out, row, schema.delimiter);
        }
    }
}

// ---------------------------------------------------------------------------
// Prefixes
// ---------------------------------------------------------------------------

std::vector<PrefixSample> enumerate_prefixes(const Trace& trace, std::size_t min_k) {
    if (min_k < 1) throw ConfigError("min_k must be >= 1");
    std::vector<PrefixSample> out;
    const std::size_t n = trace.events.size();
    if (n <= min_k) return out;
    out.reserve(n - min_k);
    for (std::size_t k = min_k; k < n; ++k) out.push_back(PrefixSample{&trace, k});
    return out;
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

const char* fold_role_name(FoldRole role) {
    switch (role) {
        case FoldRole::Test: return "test";
        case FoldRole::Validation: return "validation";
        case FoldRole::TrainBaseline: return "train_baseline";
        case FoldRole::TrainRl: return "train_rl";
    }
    return "?";
}

std::vector<std::size_t> FoldAssignment::traces_with_role(int fold, FoldRole role) const {
    std::vector<std::size_t> out;
    const auto& r = roles.at(static_cast<std::size_t>(fold));
    for (std::size_t t = 0; t < r.size(); ++t)
        if (r[t] == role) out.push_back(t);
    return out;
}

FoldAssignment split_folds(const EventLog& log, std::uint64_t seed, int num_folds) {
    const std::size_t n = log.traces.size();
    if (n < static_cast<std::size_t>(num_folds))
        throw DataError("cannot split " + std::to_string(n) + " traces into " +
                        std::to_string(num_folds) + " folds");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = seeded_rng(seed, "fold-split");
    shuffle(order, rng);

    FoldAssignment fa;
    fa.num_folds = num_folds;
    fa.test_fold.assign(n, -1);
    fa.roles.assign(static_cast<std::size_t>(num_folds), std::vector<FoldRole>(n, FoldRole::TrainBaseline));

    // balanced test partition: first (n % folds) folds get one extra trace
    const std::size_t base = n / static_cast<std::size_t>(num_folds);
    const std::size_t extra = n % static_cast<std::size_t>(num_folds);
    std::size_t cursor = 0;
    std::vector<std::vector<std::size_t>> test_sets(static_cast<std::size_t>(num_folds));
    for (int f = 0; f < num_folds; ++f) {
        std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) {
            std::size_t t = order[cursor++];
            fa.test_fold[t] = f;
            test_sets[static_cast<std::size_t>(f)].push_back(t);
        }
    }

    for (int f = 0; f < num_folds; ++f) {
        std::vector<std::size_t> rest;
        for (std::size_t t : order)
            if (fa.test_fold[t] != f) rest.push_back(t);
        Rng fold_rng = seeded_rng(seed, "fold-roles-" + std::to_string(f));
        shuffle(rest, fold_rng);

        // 80/20 train/validation, extra traces to the training side
        const std::size_t n_val = rest.size() / 5;
        const std::size_t n_train = rest.size() - n_val;
        // 50/50 baseline/RL halves, extra trace to the RL half
        const std::size_t n_baseline = n_train / 2;

        auto& roles = fa.roles[static_cast<std::size_t>(f)];
        for (std::size_t t : test_sets[static_cast<std::size_t>(f)]) roles[t] = FoldRole::Test;
        for (std::size_t i = 0; i < rest.size(); ++i) {
            if (i < n_baseline) roles[rest[i]] = FoldRole::TrainBaseline;
            else if (i < n_train) roles[rest[i]] = FoldRole::TrainRl;
            else roles[rest[i]] = FoldRole::Validation;
        }
    }
    return fa;
}

void write_fold_csv(const FoldAssignment& folds, const EventLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file: " + path);
    csv::write_row(out, {"case_id", "fold", "role"}, ',');
    for (int f = 0; f < folds.num_folds; ++f)
        for (std::size_t t = 0; t < log.traces.size(); ++t)
            csv::write_row(out,
                           {log.traces[t].case_id, std::to_string(f),
                            fold_role_name(folds.roles[static_cast<std::size_t>(f)][t])},
                           ',');
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

EventLog generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.alphabet_size < 2) throw ConfigError("synthetic log: alphabet_size must be >= 2");
    if (spec.num_traces < 1) throw ConfigError("synthetic log: num_traces must be >= 1");
    if (spec.min_length < 1 || spec.max_length < spec.min_length)
        throw ConfigError("synthetic log: invalid length range");
    if (spec.p_loop < 0.0 || spec.p_loop > 1.0 || spec.p_branch < 0.0 || spec.p_branch > 1.0)
        throw ConfigError("synthetic log: probabilities must lie in [0,1]");

    Rng rng = seeded_rng(seed, "synthetic-log");
    EventLog log;
    log.source_name = "synthetic";
    log.traces.reserve(spec.num_traces);

    const std::int64_t day = 86400;
    for (std::size_t ti = 0; ti < spec.num_traces; ++ti) {
        const std::size_t target_len =
            static_cast<std::size_t>(uniform_int(rng, static_cast<long long>(spec.min_length),
                                                 static_cast<long long>(spec.max_length)));
        std::vector<int> acts;
        std::vector<int> first_pos(spec.alphabet_size, -1);  // first occurrence, 0-based
        // pending[i] = forced activity for position i (0-based), -1 if free.
        std::vector<int> pending(target_len, -1);

        int current = static_cast<int>(uniform_index(rng, spec.alphabet_size));
        acts.push_back(current);
        first_pos[static_cast<std::size_t>(current)] = 0;

        while (acts.size() < target_len) {
            const std::size_t i = acts.size();
            int next = -1;
            bool is_revisit = false;

            std::vector<int> unused;
            for (std::size_t a = 0; a < spec.alphabet_size; ++a)
                if (first_pos[a] < 0) unused.push_back(static_cast<int>(a));

            if (pending[i] >= 0) {
                next = pending[i];
                is_revisit = first_pos[static_cast<std::size_t>(next)] >= 0;
            } else if ((uniform_real(rng) < spec.p_loop || unused.empty())) {
                if (unused.size() == spec.alphabet_size) break;  // nothing to revisit
                if (spec.p_loop == 0.0 && unused.empty()) break; // p_loop=0 forbids repeats
                std::vector<int> used;
                for (std::size_t a = 0; a < spec.alphabet_size; ++a)
                    if (first_pos[a] >= 0) used.push_back(static_cast<int>(a));
                next = used[uniform_index(rng, used.size())];
                is_revisit = true;
            } else {
                if (uniform_real(rng) < spec.p_branch) {
                    next = unused[uniform_index(rng, unused.size())];
                } else {
                    // cyclic chain step: first unused at or after current+1
                    next = unused[0];
                    for (int cand : unused)
                        if (cand > current) { next = cand; break; }
                }
            }

            // A revisit sends the process back: two steps later it re-executes
            // the activity that preceded the revisited activity's first
            // occurrence. This is the long-range dependency repeat edges expose.
            if (is_revisit) {
                const int fp = first_pos[static_cast<std::size_t>(next)];
                if (fp >= 1 && i + 2 < target_len && pending[i + 2] < 0)
                    pending[i + 2] = acts[static_cast<std::size_t>(fp - 1)];
            }

            acts.push_back(next);
            if (first_pos[static_cast<std::size_t>(next)] < 0)
                first_pos[static_cast<std::size_t>(next)] = static_cast<int>(i);
            current = next;
        }

        Trace trace;
        trace.case_id = "case" + std::to_string(ti + 1);
        std::int64_t ts = 1577836800 + static_cast<std::int64_t>(ti) * day;  // 2020-01-01
        for (std::size_t i = 0; i < acts.size(); ++i) {
            ts += uniform_int(rng, 5, 300);
            Event e;
            e.case_id = trace.case_id;
            e.activity = "A" + std::to_string(acts[i]);
            e.timestamp = ts;
            e.resource = "r" + std::to_string(uniform_index(rng, 3));
            trace.events.push_back(std::move(e));
        }
        log.traces.push_back(std::move(trace));
    }
    return log;
}

}  // namespace flowcast
