#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/config.hpp"
#include "flowcast/event_log.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/policy.hpp"
#include "flowcast/predictor.hpp"
#include "flowcast/preprocess.hpp"

namespace flowcast {

inline constexpr std::uint32_t kBundleVersion = 1;

// Everything a deployment needs, serializable as one versioned bundle:
// fitted encoders, the four structure predictors, the selection policy with
// its standardization statistics, and the config snapshot they were built
// with.
template <typename T>
struct ModelArtifacts {
    std::uint32_t version = kBundleVersion;
    Encoders encoders;
    FeatureDims dims;
    PredictorConfig predictor_config;
    std::array<std::unique_ptr<Predictor<T>>, kNumActions> predictors;
    std::unique_ptr<QNetwork<T>> qnet;
    FeatureScaler scaler;
    std::string config_snapshot;
    std::size_t min_k = 1;
};

template <typename T>
void save_artifacts(const ModelArtifacts<T>& artifacts, const std::string& path);

template <typename T>
ModelArtifacts<T> load_artifacts(const std::string& path);

// ---------------------------------------------------------------------------
// Fold execution
// ---------------------------------------------------------------------------

std::uint64_t fold_seed(std::uint64_t master_seed, int fold);

template <typename T>
struct FoldOutput {
    ModelArtifacts<T> artifacts;
    Metrics metrics;  // adaptive policy on the fold's test prefixes
    std::array<TrainResult, kNumActions> stage1;
    std::vector<AgentLogRow> agent_log;
};

// Stage 1 (four predictors on the baseline half, early-stopped on the
// validation traces), stage 2 (policy on the RL half), then adaptive
// evaluation on the fold's test prefixes.
template <typename T>
FoldOutput<T> run_fold(const EventLog& log, const FoldAssignment& folds, int fold,
                       const RunConfig& cfg);

// Evaluation of an artifact bundle over test traces; `forced` pins the
// structure instead of querying the policy.
template <typename T>
Metrics evaluate_policy(const ModelArtifacts<T>& artifacts,
                        const std::vector<const EncodedTrace*>& test_traces, std::size_t min_k,
                        std::optional<StructureId> forced, int threads);

struct CvResult {
    std::vector<Metrics> per_fold;
    Metrics averaged;  // arithmetic mean of scalar metrics; counts summed
};

Metrics average_metrics(const std::vector<Metrics>& folds);

template <typename T>
struct CvOutput {
    CvResult result;
    std::vector<FoldOutput<T>> folds;
};

template <typename T>
CvOutput<T> run_cv(const EventLog& log, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Ablation: the four forced structures plus the adaptive policy, evaluated on
// identical folds and seeds.
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string policy;  // "G1".."G4" or "adaptive"
    Metrics metrics;
};

template <typename T>
std::array<Metrics, kNumActions + 1> evaluate_fold_policies(
    const FoldOutput<T>& fold_output, const std::vector<const EncodedTrace*>& test_traces,
    std::size_t min_k, int threads);

template <typename T>
std::vector<AblationRow> ablation_run(const EventLog& log, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

struct BenchRow {
    std::string policy;
    LatencyStats stats;
};

// Wall time of one prediction: state extraction, structure selection, graph
// construction and the forward pass. The first tenth of measurements warms
// caches and is discarded.
template <typename T>
std::vector<BenchRow> benchmark_latency(const ModelArtifacts<T>& artifacts,
                                        const std::vector<const EncodedTrace*>& prefixes,
                                        std::size_t min_k, int repetitions);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricsRow {
    std::string dataset;
    std::string fold;    // "0".."2" or "mean"
    std::string policy;  // "adaptive" or forced structure
    Metrics metrics;
};

// Deterministic CSV: no wall-clock content; latency goes into the separate
// bench report.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::string format_metrics_table(const std::vector<MetricsRow>& rows);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);
void write_agent_log_csv(const std::vector<AgentLogRow>& rows, const std::string& path);

}  // namespace flowcast
