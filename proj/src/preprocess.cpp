#include "flowcast/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "flowcast/error.hpp"

namespace flowcast {

namespace {
const std::string kUnkName = "<UNK>";
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()) + 1);
    if (inserted) tokens_.push_back(token);
    return it->second;
}

int Vocabulary::encode(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocabulary::decode(int index) const {
    if (index <= 0 || static_cast<std::size_t>(index) > tokens_.size()) return kUnkName;
    return tokens_[static_cast<std::size_t>(index) - 1];
}

Vocabulary build_vocabulary(const std::vector<const Trace*>& training_traces,
                            const std::string& attribute_name, const AttributeSelector& select) {
    Vocabulary vocab(attribute_name);
    static const std::string missing = kMissingToken;
    for (const Trace* t : training_traces)
        for (const Event& e : t->events) {
            const std::string& raw = select(e);
            vocab.add(raw.empty() ? missing : raw);
        }
    return vocab;
}

BinEdges fit_quantile_bins(std::vector<double> values, int bins, const std::string& attribute_name) {
    if (values.empty()) throw DataError("quantile fit on empty sample (" + attribute_name + ")");
    if (bins < 2) throw ConfigError("bin count must be >= 2");
    std::sort(values.begin(), values.end());

    BinEdges be;
    be.attribute_name = attribute_name;
    const std::size_t n = values.size();
    for (int i = 0; i <= bins; ++i) {
        const double q = static_cast<double>(i) / static_cast<double>(bins);
        const double pos = q * static_cast<double>(n - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        double edge = values[lo];
        if (frac > 0.0 && lo + 1 < n) edge += frac * (values[lo + 1] - values[lo]);
        if (be.edges.empty() || edge > be.edges.back()) be.edges.push_back(edge);
    }
    return be;
}

int discretize(const BinEdges& bins, double x) {
    if (bins.edges.empty()) throw InternalError("discretize on unfitted bin edges");
    const int b = bins.bin_count();
    if (x <= bins.edges.front()) return 1;
    if (x > bins.edges.back()) return b;
    for (int i = 1; i < static_cast<int>(bins.edges.size()); ++i)
        if (x <= bins.edges[static_cast<std::size_t>(i)]) return i;
    return b;
}

TemporalFeatures extract_temporal_features(const Trace& trace) {
    if (trace.events.empty()) throw DataError("temporal features of an empty trace");
    TemporalFeatures tf;
    const std::size_t n = trace.events.size();
    tf.dt_prev.resize(n);
    tf.dt_start.resize(n);
    const std::int64_t start = trace.events.front().timestamp;
    tf.dt_prev[0] = 0.0;
    tf.dt_start[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        tf.dt_prev[i] = static_cast<double>(trace.events[i].timestamp - trace.events[i - 1].timestamp);
        tf.dt_start[i] = static_cast<double>(trace.events[i].timestamp - start);
    }
    return tf;
}

namespace {

const std::string& extra_value(const Event& e, const std::string& name) {
    static const std::string empty;
    for (const auto& [k, v] : e.extras)
        if (k == name) return v;
    return empty;
}

}  // namespace

Encoders fit_encoders(const std::vector<const Trace*>& training_traces, const EncoderOptions& opts) {
    if (training_traces.empty()) throw DataError("encoder fit needs at least one training trace");
    Encoders enc;
    enc.bin_count = opts.bin_count;
    enc.extra_specs = opts.extras;

    enc.activity = build_vocabulary(training_traces, "activity",
                                    [](const Event& e) -> const std::string& { return e.activity; });
    enc.resource = build_vocabulary(training_traces, "resource",
                                    [](const Event& e) -> const std::string& { return e.resource; });

    std::vector<double> all_dt_prev, all_dt_start;
    for (const Trace* t : training_traces) {
        auto tf = extract_temporal_features(*t);
        all_dt_prev.insert(all_dt_prev.end(), tf.dt_prev.begin(), tf.dt_prev.end());
        all_dt_start.insert(all_dt_start.end(), tf.dt_start.begin(), tf.dt_start.end());
    }
    enc.dt_prev_bins = fit_quantile_bins(std::move(all_dt_prev), opts.bin_count, "dt_prev");
    enc.dt_start_bins = fit_quantile_bins(std::move(all_dt_start), opts.bin_count, "dt_start");

    for (const auto& spec : opts.extras) {
        if (spec.categorical) {
            enc.extra_vocabs.push_back(build_vocabulary(
                training_traces, spec.name,
                [&spec](const Event& e) -> const std::string& { return extra_value(e, spec.name); }));
        } else {
            std::vector<double> values;
            for (const Trace* t : training_traces)
                for (const Event& e : t->events) {
                    const std::string& raw = extra_value(e, spec.name);
                    if (!raw.empty()) {
                        try {
                            values.push_back(std::stod(raw));
                        } catch (const std::exception&) {
                            throw DataError("attribute '" + spec.name + "' is not numeric: " + raw);
                        }
                    }
                }
            enc.extra_bins.push_back(fit_quantile_bins(std::move(values), opts.bin_count, spec.name));
        }
    }
    return enc;
}

EncodedTrace encode_trace(const Trace& trace, const Encoders& enc) {
    EncodedTrace out;
    out.case_id = trace.case_id;
    auto tf = extract_temporal_features(trace);
    out.dt_prev = tf.dt_prev;
    out.dt_start = tf.dt_start;
    out.events.reserve(trace.events.size());

    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const Event& e = trace.events[i];
        EncodedEvent ee;
        ee.activity_id = enc.activity.encode(e.activity);
        ee.resource_id = enc.resource.encode(e.resource.empty() ? kMissingToken : e.resource);
        ee.dt_prev_bin = discretize(enc.dt_prev_bins, tf.dt_prev[i]);
        ee.dt_start_bin = discretize(enc.dt_start_bins, tf.dt_start[i]);
        std::size_t vi = 0, bi = 0;
        for (const auto& spec : enc.extra_specs) {
            const std::string& raw = extra_value(e, spec.name);
            if (spec.categorical) {
                ee.extra_bins.push_back(enc.extra_vocabs[vi].encode(raw.empty() ? kMissingToken : raw));
                ++vi;
            } else {
                double x = 0.0;
                if (!raw.empty()) {
                    try {
                        x = std::stod(raw);
                    } catch (const std::exception&) {
                        throw DataError("attribute '" + spec.name + "' is not numeric: " + raw);
                    }
                }
                ee.extra_bins.push_back(discretize(enc.extra_bins[bi], x));
                ++bi;
            }
        }
        out.events.push_back(std::move(ee));
    }
    return out;
}

std::vector<EncodedTrace> encode_log(const EventLog& log, const Encoders& enc) {
    std::vector<EncodedTrace> out;
    out.reserve(log.traces.size());
    for (const auto& t : log.traces) out.push_back(encode_trace(t, enc));
    return out;
}

}  // namespace flowcast
