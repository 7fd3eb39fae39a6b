#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcast/event_log.hpp"

namespace flowcast {

inline constexpr int kUnkIndex = 0;
inline constexpr const char* kMissingToken = "<MISSING>";

// Integer encoding of one categorical attribute. Index 0 is reserved for
// values unseen during fitting; known tokens are indexed by first occurrence
// in the training data. Missing values are encoded via a distinguished
// MISSING token (missingness itself is informative in event logs).
class Vocabulary {
  public:
    Vocabulary() = default;
    explicit Vocabulary(std::string attribute_name) : attribute_(std::move(attribute_name)) {}

    int add(const std::string& token);               // returns existing or new index
    int encode(const std::string& token) const;      // unknown -> 0
    const std::string& decode(int index) const;      // index 0 -> "<UNK>"
    std::size_t size() const { return tokens_.size() + 1; }  // includes UNK
    const std::string& attribute() const { return attribute_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    std::string attribute_;
    std::vector<std::string> tokens_;  // index i+1 -> tokens_[i]
    std::unordered_map<std::string, int> index_;
};

using AttributeSelector = std::function<const std::string&(const Event&)>;

// First-occurrence-ordered vocabulary over the training traces only.
Vocabulary build_vocabulary(const std::vector<const Trace*>& training_traces,
                            const std::string& attribute_name, const AttributeSelector& select);

// Equal-frequency bin edges: the (i/B)-quantiles of the training sample for
// i = 0..B, computed by linear interpolation on the sorted values. Duplicate
// edges collapse, so highly discrete data yields fewer effective bins.
struct BinEdges {
    std::string attribute_name;
    std::vector<double> edges;  // strictly increasing, size >= 1

    int bin_count() const { return edges.size() > 1 ? static_cast<int>(edges.size()) - 1 : 1; }
};

BinEdges fit_quantile_bins(std::vector<double> values, int bins = 4,
                           const std::string& attribute_name = {});

// Bin index in {1..B}: the i with q_{i-1} < x <= q_i, clamped at both ends so
// the function is total at inference time.
int discretize(const BinEdges& bins, double x);

struct TemporalFeatures {
    std::vector<double> dt_prev;   // seconds since previous event, 0 for the first
    std::vector<double> dt_start;  // seconds since case start
};

TemporalFeatures extract_temporal_features(const Trace& trace);

// ---------------------------------------------------------------------------
// Encoded view of a log
// ---------------------------------------------------------------------------

struct EncodedEvent {
    int activity_id = 0;
    int resource_id = 0;
    int dt_prev_bin = 1;
    int dt_start_bin = 1;
    std::vector<int> extra_bins;
};

struct EncodedTrace {
    std::string case_id;
    std::vector<EncodedEvent> events;
    // raw temporal values kept alongside the bins; the structure-selection
    // state features need them
    std::vector<double> dt_prev;
    std::vector<double> dt_start;

    std::size_t length() const { return events.size(); }
};

// Which extra attributes feed the model, and how each is treated.
struct ExtraAttributeSpec {
    std::string name;
    bool categorical = true;  // false = numeric, quantile-binned
};

struct EncoderOptions {
    int bin_count = 4;
    std::vector<ExtraAttributeSpec> extras;
};

// Everything fitted on the training portion: vocabularies plus bin edges.
// The public pipeline only ever fits this from training traces, which is what
// keeps test data out of every downstream artifact.
struct Encoders {
    Vocabulary activity;
    Vocabulary resource;
    BinEdges dt_prev_bins;
    BinEdges dt_start_bins;
    std::vector<ExtraAttributeSpec> extra_specs;
    std::vector<Vocabulary> extra_vocabs;  // one per categorical extra
    std::vector<BinEdges> extra_bins;      // one per numeric extra
    int bin_count = 4;
};

Encoders fit_encoders(const std::vector<const Trace*>& training_traces, const EncoderOptions& opts);

EncodedTrace encode_trace(const Trace& trace, const Encoders& enc);
std::vector<EncodedTrace> encode_log(const EventLog& log, const Encoders& enc);

}  // namespace flowcast
