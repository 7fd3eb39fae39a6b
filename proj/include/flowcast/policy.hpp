#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "flowcast/nn.hpp"
#include "flowcast/predictor.hpp"
#include "flowcast/preprocess.hpp"

namespace flowcast {

inline constexpr int kNumActions = 4;  // one per graph structure
inline constexpr std::size_t kStateDim = 8;

// Structural, temporal and pattern descriptors of a prefix; the policy's
// state vector before standardization.
struct StateFeatures {
    double prefix_length = 0;
    double unique_activities = 0;
    double activity_entropy = 0;  // natural log
    double dt_mean = 0;           // over gaps between events 2..k
    double dt_var = 0;            // population variance
    double rhythm_score = 1;      // 1 / (1 + coefficient of variation)
    double repeat_count = 0;      // sum of (occurrences - 1) over activities
    double loop_depth = 0;        // max occurrences - 1

    std::array<double, kStateDim> to_array() const {
        return {prefix_length, unique_activities, activity_entropy, dt_mean,
                dt_var,        rhythm_score,      repeat_count,     loop_depth};
    }
};

StateFeatures extract_state(const EncodedTrace& prefix, std::size_t k);

// Per-dimension standardization fitted on the RL training half only.
struct FeatureScaler {
    std::array<double, kStateDim> mean{};
    std::array<double, kStateDim> stddev{};

    static FeatureScaler fit(const std::vector<std::array<double, kStateDim>>& states);
    std::array<double, kStateDim> apply(const std::array<double, kStateDim>& s) const;
};

// ---------------------------------------------------------------------------
// Q-network: MLP 8 -> 256 -> 128 -> 128 -> 4, ReLU activations.
// ---------------------------------------------------------------------------

template <typename T>
class QNetwork {
  public:
    explicit QNetwork(std::uint64_t seed);

    std::array<double, kNumActions> forward(const std::array<double, kStateDim>& state) const;

    // Batched tape forward for training updates.
    typename nn::Tape<T>::Ref forward_batch(nn::Tape<T>& tape, const nn::Tensor<T>& states) const;

    void copy_from(const QNetwork& other) { store_.copy_values_from(other.store_); }
    nn::ParamStore<T>& params() { return store_; }
    const nn::ParamStore<T>& params() const { return store_; }

  private:
    mutable nn::ParamStore<T> store_;
};

// Greedy argmax with ties broken toward the lowest action index; with
// probability eps a uniformly random action.
template <typename T>
int select_action(const QNetwork<T>& qnet, const std::array<double, kStateDim>& state, double eps,
                  Rng& rng);

int greedy_action(const std::array<double, kNumActions>& q);

// Linear decay from start to end over decay_steps, then flat.
struct EpsSchedule {
    double start = 1.0;
    double end = 0.1;
    std::int64_t decay_steps = 1;

    double at(std::int64_t step) const {
        if (step >= decay_steps) return end;
        const double f = static_cast<double>(step) / static_cast<double>(decay_steps);
        return start + (end - start) * f;
    }
};

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

struct RewardConfig {
    double alpha = 1.0;      // accuracy weight
    double beta = 0.1;       // compute-cost weight
    double gamma_eff = 0.1;  // efficiency weight
    // relative extra-edge cost of G1..G4
    std::array<double, kNumActions> cost = {0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0};

    void validate() const;
};

double compute_reward(bool correct, int action, const RewardConfig& cfg);

// ---------------------------------------------------------------------------
// Replay buffer (ring, uniform sampling with replacement)
// ---------------------------------------------------------------------------

struct Transition {
    std::array<double, kStateDim> state{};
    int action = 0;
    double reward = 0;
    bool terminal = true;  // one-step episodes: always true in this pipeline
    std::optional<std::array<double, kStateDim>> next_state;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity = 50000);

    void push(Transition t);
    std::vector<Transition> sample(std::size_t batch, Rng& rng) const;
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_[i]; }

  private:
    std::size_t capacity_;
    std::size_t next_ = 0;  // overwrite cursor once full
    std::vector<Transition> items_;
};

// Hard-copy cadence for the target network: fires on update 2000, 4000, ...
// for the configured interval.
struct SyncCounter {
    std::int64_t interval = 2000;
    std::int64_t updates = 0;

    bool tick() { return ++updates % interval == 0; }
};

// One TD step: targets r (+ discounted target-net max for non-terminal
// transitions), squared error on the taken actions only, one Adam update.
// Returns the loss.
template <typename T>
double dqn_update(QNetwork<T>& online, const QNetwork<T>& target,
                  const std::vector<Transition>& batch, double discount,
                  const nn::OptimizerConfig& opt);

// ---------------------------------------------------------------------------
// Agent training over one-step episodes
// ---------------------------------------------------------------------------

struct AgentConfig {
    RewardConfig reward;
    double eps_start = 1.0;
    double eps_end = 0.1;
    std::int64_t eps_decay_steps = 0;  // 0 = one pass over the data
    std::size_t buffer_capacity = 50000;
    std::size_t warmup_transitions = 1000;
    int batch_size = 64;
    std::int64_t sync_interval = 2000;  // updates between target syncs
    double discount = 0.99;
    double learning_rate = 1e-4;  // Adam
    int passes = 5;               // sweeps over the RL half

    void validate() const;
};

struct AgentLogRow {
    std::int64_t step = 0;
    double eps = 0;
    double mean_reward = 0;  // over the last window
    double loss = 0;
    std::array<std::int64_t, kNumActions> action_counts{};
};

// The environment reduced to its essentials: standardized states plus the
// per-action correctness of the four (frozen) predictors.
template <typename T>
QNetwork<T> train_agent_core(const std::vector<std::array<double, kStateDim>>& states,
                             const std::vector<std::array<bool, kNumActions>>& correct,
                             const AgentConfig& cfg, std::uint64_t seed,
                             std::vector<AgentLogRow>* log = nullptr);

struct AgentArtifacts {
    FeatureScaler scaler;
    std::vector<AgentLogRow> log;
};

// Full stage-2 training: extracts and standardizes states from the RL half,
// precomputes each predictor's per-prefix correctness, then runs the episode
// loop. The four datasets must enumerate the same prefixes in the same order.
template <typename T>
QNetwork<T> train_agent(const std::array<PrefixDataset, kNumActions>& per_structure,
                        const std::array<const Predictor<T>*, kNumActions>& predictors,
                        const AgentConfig& cfg, std::uint64_t seed, AgentArtifacts* artifacts);

}  // namespace flowcast
