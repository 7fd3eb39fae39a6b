#include "flowcast/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "flowcast/error.hpp"

namespace flowcast {

StateFeatures extract_state(const EncodedTrace& prefix, std::size_t k) {
    if (k < 1 || k > prefix.events.size())
        throw InternalError("state extraction: prefix length out of range");

    StateFeatures f;
    f.prefix_length = static_cast<double>(k);

    std::unordered_map<int, int> counts;
    for (std::size_t i = 0; i < k; ++i) ++counts[prefix.events[i].activity_id];
    f.unique_activities = static_cast<double>(counts.size());

    double entropy = 0;
    int max_occ = 0;
    double repeats = 0;
    for (const auto& [act, c] : counts) {
        (void)act;
        const double p = static_cast<double>(c) / static_cast<double>(k);
        entropy -= p * std::log(p);
        max_occ = std::max(max_occ, c);
        repeats += static_cast<double>(c - 1);
    }
    f.activity_entropy = entropy;
    f.repeat_count = repeats;
    f.loop_depth = static_cast<double>(max_occ - 1);

    // gaps between events 2..k; none for k = 1
    if (k >= 2) {
        double mean = 0;
        for (std::size_t i = 1; i < k; ++i) mean += prefix.dt_prev[i];
        mean /= static_cast<double>(k - 1);
        double var = 0;
        for (std::size_t i = 1; i < k; ++i) {
            const double d = prefix.dt_prev[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(k - 1);
        f.dt_mean = mean;
        f.dt_var = var;
        f.rhythm_score = mean > 0 ? 1.0 / (1.0 + std::sqrt(var) / mean) : 1.0;
    }
    return f;
}

FeatureScaler FeatureScaler::fit(const std::vector<std::array<double, kStateDim>>& states) {
    if (states.empty()) throw DataError("feature scaler fit on an empty state set");
    FeatureScaler s;
    for (const auto& st : states)
        for (std::size_t j = 0; j < kStateDim; ++j) s.mean[j] += st[j];
    for (auto& m : s.mean) m /= static_cast<double>(states.size());
    for (const auto& st : states)
        for (std::size_t j = 0; j < kStateDim; ++j) {
            const double d = st[j] - s.mean[j];
            s.stddev[j] += d * d;
        }
    for (auto& v : s.stddev) {
        v = std::sqrt(v / static_cast<double>(states.size()));
        if (v == 0.0) v = 1.0;
    }
    return s;
}

std::array<double, kStateDim> FeatureScaler::apply(const std::array<double, kStateDim>& s) const {
    std::array<double, kStateDim> out;
    for (std::size_t j = 0; j < kStateDim; ++j) out[j] = (s[j] - mean[j]) / stddev[j];
    return out;
}

// ---------------------------------------------------------------------------
// Q-network
// ---------------------------------------------------------------------------

namespace {
constexpr std::array<int, 3> kQHidden = {256, 128, 128};
}

template <typename T>
QNetwork<T>::QNetwork(std::uint64_t seed) : store_(seed) {
    int in = static_cast<int>(kStateDim);
    for (std::size_t l = 0; l < kQHidden.size(); ++l) {
        store_.add("q.w" + std::to_string(l + 1), in, kQHidden[l], nn::Init::Glorot);
        store_.add("q.b" + std::to_string(l + 1), 1, kQHidden[l], nn::Init::Zero);
        in = kQHidden[l];
    }
    store_.add("q.w4", in, kNumActions, nn::Init::Glorot);
    store_.add("q.b4", 1, kNumActions, nn::Init::Zero);
}

template <typename T>
typename nn::Tape<T>::Ref QNetwork<T>::forward_batch(nn::Tape<T>& tape,
                                                     const nn::Tensor<T>& states) const {
    auto x = tape.constant(states);
    for (std::size_t l = 1; l <= kQHidden.size(); ++l) {
        x = tape.relu(tape.linear(x, tape.param(store_.get("q.w" + std::to_string(l))),
                                  tape.param(store_.get("q.b" + std::to_string(l)))));
    }
    return tape.linear(x, tape.param(store_.get("q.w4")), tape.param(store_.get("q.b4")));
}

template <typename T>
std::array<double, kNumActions> QNetwork<T>::forward(
    const std::array<double, kStateDim>& state) const {
    // plain forward without tape bookkeeping; this is the per-prediction path
    std::vector<double> cur(state.begin(), state.end());
    for (std::size_t l = 1; l <= kQHidden.size() + 1; ++l) {
        const auto& w = store_.get("q.w" + std::to_string(l)).value;
        const auto& b = store_.get("q.b" + std::to_string(l)).value;
        std::vector<double> next(static_cast<std::size_t>(w.m));
        for (std::int64_t j = 0; j < w.m; ++j) next[static_cast<std::size_t>(j)] = b.at(0, j);
        for (std::int64_t i = 0; i < w.n; ++i) {
            const double xi = cur[static_cast<std::size_t>(i)];
            if (xi == 0.0) continue;
            for (std::int64_t j = 0; j < w.m; ++j)
                next[static_cast<std::size_t>(j)] += xi * w.at(i, j);
        }
        if (l <= kQHidden.size())
            for (auto& v : next) v = v > 0 ? v : 0;
        cur = std::move(next);
    }
    std::array<double, kNumActions> q{};
    std::copy(cur.begin(), cur.end(), q.begin());
    return q;
}

int greedy_action(const std::array<double, kNumActions>& q) {
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

template <typename T>
int select_action(const QNetwork<T>& qnet, const std::array<double, kStateDim>& state, double eps,
                  Rng& rng) {
    if (eps < 0 || eps > 1) throw ConfigError("epsilon must lie in [0,1]");
    if (eps > 0 && uniform_real(rng) < eps) return static_cast<int>(uniform_index(rng, kNumActions));
    return greedy_action(qnet.forward(state));
}

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

void RewardConfig::validate() const {
    if (alpha <= 0) throw ConfigError("reward alpha must be > 0");
    if (beta < 0 || gamma_eff < 0) throw ConfigError("reward beta and gamma_eff must be >= 0");
}

double compute_reward(bool correct, int action, const RewardConfig& cfg) {
    if (action < 0 || action >= kNumActions) throw InternalError("action out of range");
    const double acc = correct ? 1.0 : 0.0;
    const double cost = cfg.cost[static_cast<std::size_t>(action)];
    const double efficiency = acc * (1.0 - cost);
    return cfg.alpha * acc - cfg.beta * cost + cfg.gamma_eff * efficiency;
}

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("replay capacity must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (items_.empty()) throw InternalError("sampling from an empty replay buffer");
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[uniform_index(rng, items_.size())]);
    return out;
}

// ---------------------------------------------------------------------------
// DQN update
// ---------------------------------------------------------------------------

template <typename T>
double dqn_update(QNetwork<T>& online, const QNetwork<T>& target,
                  const std::vector<Transition>& batch, double discount,
                  const nn::OptimizerConfig& opt) {
    if (batch.empty()) throw InternalError("DQN update on an empty batch");

    const std::size_t n = batch.size();
    nn::Tensor<T> states(static_cast<std::int64_t>(n), kStateDim);
    std::vector<int> actions(n);
    std::vector<T> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Transition& tr = batch[i];
        for (std::size_t j = 0; j < kStateDim; ++j)
            states.at(static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) =
                static_cast<T>(tr.state[j]);
        actions[i] = tr.action;
        double y = tr.reward;
        // retained for the non-terminal generalization; never triggers in the
        // one-step pipeline episodes
        if (!tr.terminal && tr.next_state) {
            const auto q_next = target.forward(*tr.next_state);
            y += discount * *std::max_element(q_next.begin(), q_next.end());
        }
        targets[i] = static_cast<T>(y);
    }

    nn::Tape<T> tape;
    auto q = online.forward_batch(tape, states);
    auto taken = tape.select_per_row(q, actions);
    auto loss = tape.mse_to(taken, targets);
    const double loss_value = static_cast<double>(tape.value(loss).at(0, 0));
    tape.backward(loss);
    nn::optimizer_step(online.params(), opt);
    return loss_value;
}

// ---------------------------------------------------------------------------
// Agent training
// ---------------------------------------------------------------------------

void AgentConfig::validate() const {
    reward.validate();
    if (eps_start < 0 || eps_start > 1 || eps_end < 0 || eps_end > 1)
        throw ConfigError("epsilon bounds must lie in [0,1]");
    if (buffer_capacity < 1) throw ConfigError("buffer capacity must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (sync_interval < 1) throw ConfigError("sync interval must be >= 1");
    if (discount < 0 || discount > 1) throw ConfigError("discount must lie in [0,1]");
    if (learning_rate <= 0) throw ConfigError("learning rate must be > 0");
    if (passes < 1) throw ConfigError("passes must be >= 1");
}

template <typename T>
QNetwork<T> train_agent_core(const std::vector<std::array<double, kStateDim>>& states,
                             const std::vector<std::array<bool, kNumActions>>& correct,
                             const AgentConfig& cfg, std::uint64_t seed,
                             std::vector<AgentLogRow>* log) {
    cfg.validate();
    if (states.empty() || states.size() != correct.size())
        throw DataError("agent training needs matching non-empty states and outcomes");

    QNetwork<T> online(seed);
    QNetwork<T> target(seed);
    target.copy_from(online);

    nn::OptimizerConfig opt;
    opt.kind = nn::OptKind::Adam;
    opt.lr = cfg.learning_rate;

    EpsSchedule eps{cfg.eps_start, cfg.eps_end,
                    cfg.eps_decay_steps > 0 ? cfg.eps_decay_steps
                                            : static_cast<std::int64_t>(states.size())};
    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng rng = seeded_rng(seed, "agent");

    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), 0);

    std::int64_t step = 0;
    SyncCounter sync{cfg.sync_interval};
    std::array<std::int64_t, kNumActions> action_counts{};
    double reward_window = 0, last_loss = 0;
    std::int64_t window_n = 0;
    constexpr std::int64_t kLogEvery = 200;

    for (int pass = 0; pass < cfg.passes; ++pass) {
        shuffle(order, rng);
        for (std::size_t idx : order) {
            const double e = eps.at(step);
            const int a = select_action(online, states[idx], e, rng);
            const double r = compute_reward(correct[idx][static_cast<std::size_t>(a)], a, cfg.reward);
            buffer.push({states[idx], a, r, true, std::nullopt});
            ++action_counts[static_cast<std::size_t>(a)];
            reward_window += r;
            ++window_n;

            if (buffer.size() >= cfg.warmup_transitions) {
                last_loss = dqn_update(online, target,
                                       buffer.sample(static_cast<std::size_t>(cfg.batch_size), rng),
                                       cfg.discount, opt);
                ++updates;
                if (updates % cfg.sync_interval == 0) target.copy_from(online);
            }
            ++step;
            if (log && step % kLogEvery == 0) {
                log->push_back({step, e, window_n > 0 ? reward_window / static_cast<double>(window_n) : 0.0,
                                last_loss, action_counts});
                reward_window = 0;
                window_n = 0;
            }
        }
    }
    if (log)
        log->push_back({step, eps.at(step),
                        window_n > 0 ? reward_window / static_cast<double>(window_n) : 0.0, last_loss,
                        action_counts});
    return online;
}

template <typename T>
QNetwork<T> train_agent(const std::array<PrefixDataset, kNumActions>& per_structure,
                        const std::array<const Predictor<T>*, kNumActions>& predictors,
                        const AgentConfig& cfg, std::uint64_t seed, AgentArtifacts* artifacts) {
    for (const auto* p : predictors)
        if (!p) throw InternalError("agent training requires all four trained predictors");
    const std::size_t n = per_structure[0].size();
    for (const auto& ds : per_structure)
        if (ds.size() != n) throw InternalError("per-structure datasets disagree on sample count");
    if (n == 0) throw DataError("agent training has no prefixes");

    std::vector<std::array<double, kStateDim>> raw_states(n);
    for (std::size_t i = 0; i < n; ++i)
        raw_states[i] =
            extract_state(*per_structure[0].traces[i], per_structure[0].ks[i]).to_array();
    FeatureScaler scaler = FeatureScaler::fit(raw_states);

    std::vector<std::array<double, kStateDim>> states(n);
    for (std::size_t i = 0; i < n; ++i) states[i] = scaler.apply(raw_states[i]);

    // Predictors are frozen in stage 2; each prefix's per-action correctness
    // is a constant and is computed once.
    std::vector<std::array<bool, kNumActions>> correct(n);
    for (std::size_t a = 0; a < kNumActions; ++a) {
        const PrefixDataset& ds = per_structure[a];
        for (std::size_t i = 0; i < n; ++i)
            correct[i][a] =
                predictors[a]->predict_argmax(ds.graphs[i], *ds.traces[i], ds.ks[i]) == ds.labels[i];
    }

    std::vector<AgentLogRow> log;
    auto qnet = train_agent_core<T>(states, correct, cfg, seed, &log);
    if (artifacts) {
        artifacts->scaler = scaler;
        artifacts->log = std::move(log);
    }
    return qnet;
}

template class QNetwork<float>;
template class QNetwork<double>;
template int select_action<float>(const QNetwork<float>&, const std::array<double, kStateDim>&,
                                  double, Rng&);
template int select_action<double>(const QNetwork<double>&, const std::array<double, kStateDim>&,
                                   double, Rng&);
template double dqn_update<float>(QNetwork<float>&, const QNetwork<float>&,
                                  const std::vector<Transition>&, double,
                                  const nn::OptimizerConfig&);
template double dqn_update<double>(QNetwork<double>&, const QNetwork<double>&,
                                   const std::vector<Transition>&, double,
                                   const nn::OptimizerConfig&);
template QNetwork<float> train_agent_core<float>(
    const std::vector<std::array<double, kStateDim>>&,
    const std::vector<std::array<bool, kNumActions>>&, const AgentConfig&, std::uint64_t,
    std::vector<AgentLogRow>*);
template QNetwork<double> train_agent_core<double>(
    const std::vector<std::array<double, kStateDim>>&,
    const std::vector<std::array<bool, kNumActions>>&, const AgentConfig&, std::uint64_t,
    std::vector<AgentLogRow>*);
template QNetwork<float> train_agent<float>(const std::array<PrefixDataset, kNumActions>&,
                                            const std::array<const Predictor<float>*, kNumActions>&,
                                            const AgentConfig&, std::uint64_t, AgentArtifacts*);
template QNetwork<double> train_agent<double>(
    const std::array<PrefixDataset, kNumActions>&,
    const std::array<const Predictor<double>*, kNumActions>&, const AgentConfig&, std::uint64_t,
    AgentArtifacts*);

}  // namespace flowcast
