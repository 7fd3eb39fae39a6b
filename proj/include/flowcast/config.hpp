#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowcast/event_log.hpp"
#include "flowcast/policy.hpp"
#include "flowcast/predictor.hpp"
#include "flowcast/preprocess.hpp"

namespace flowcast {

// Plain-text configuration: one `key = value` per line, `#` comments, and an
// `include <path>` directive resolved relative to the including file.
// Unknown keys are rejected so typos fail loudly.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& include_dir = {});

struct RunConfig {
    CsvSchema schema;
    std::string data_path;

    int bin_count = 4;
    std::size_t min_k = 1;
    std::vector<ExtraAttributeSpec> extras;

    PredictorConfig predictor;
    AgentConfig agent;

    std::uint64_t seed = 42;
    int threads = 1;
    std::string out_dir = "out";
    std::string precision = "float32";  // or float64

    SyntheticSpec synth;
    int bench_repetitions = 20;

    static RunConfig defaults() { return RunConfig{}; }
    static RunConfig from_map(const std::map<std::string, std::string>& kv);
    static RunConfig from_file(const std::string& path);

    // Every effective value in deterministic order; stored inside artifact
    // bundles and replayable as a config file.
    std::string to_text() const;

    EncoderOptions encoder_options() const { return EncoderOptions{bin_count, extras}; }
    void validate() const;
};

}  // namespace flowcast
