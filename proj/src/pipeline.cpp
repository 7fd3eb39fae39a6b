#include "flowcast/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "flowcast/binio.hpp"
#include "flowcast/error.hpp"

namespace flowcast {

// ---------------------------------------------------------------------------
// Artifact bundle serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kBundleMagic[4] = {'F', 'C', 'A', 'B'};
constexpr std::uint32_t kBundleSentinel = 0xFCAB0001u;

void write_vocab(std::ostream& out, const Vocabulary& v) {
    io::write_string(out, v.attribute());
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(v.tokens().size()));
    for (const auto& t : v.tokens()) io::write_string(out, t);
}

Vocabulary read_vocab(std::istream& in) {
    Vocabulary v(io::read_string(in));
    const auto count = io::read_raw<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) v.add(io::read_string(in));
    return v;
}

void write_bins(std::ostream& out, const BinEdges& b) {
    io::write_string(out, b.attribute_name);
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(b.edges.size()));
    for (double e : b.edges) io::write_raw<double>(out, e);
}

BinEdges read_bins(std::istream& in) {
    BinEdges b;
    b.attribute_name = io::read_string(in);
    const auto count = io::read_raw<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) b.edges.push_back(io::read_raw<double>(in));
    return b;
}

void write_predictor_config(std::ostream& out, const PredictorConfig& c) {
    io::write_raw<std::int32_t>(out, c.hidden_dim);
    io::write_raw<std::int32_t>(out, c.layers);
    io::write_raw<double>(out, c.dropout);
    io::write_raw<std::int32_t>(out, c.activity_emb_cap);
    io::write_raw<std::int32_t>(out, c.aux_emb_cap);
    io::write_raw<std::int32_t>(out, c.mlp_hidden);
    io::write_raw<std::uint8_t>(out, static_cast<std::uint8_t>(c.forward_agg));
    io::write_raw<std::uint8_t>(out, static_cast<std::uint8_t>(c.backward_agg));
    io::write_raw<std::uint8_t>(out, static_cast<std::uint8_t>(c.repeat_agg));
    io::write_raw<std::uint8_t>(out, c.uniform_agg ? 1 : 0);
    io::write_raw<std::uint8_t>(out,
                                static_cast<std::uint8_t>(c.uniform_agg.value_or(Aggregator::Lstm)));
    io::write_raw<std::int32_t>(out, c.batch_size);
    io::write_raw<std::int32_t>(out, c.max_epochs);
    io::write_raw<std::int32_t>(out, c.early_stop_patience);
    io::write_raw<double>(out, c.learning_rate);
}

PredictorConfig read_predictor_config(std::istream& in) {
    PredictorConfig c;
    c.hidden_dim = io::read_raw<std::int32_t>(in);
    c.layers = io::read_raw<std::int32_t>(in);
    c.dropout = io::read_raw<double>(in);
    c.activity_emb_cap = io::read_raw<std::int32_t>(in);
    c.aux_emb_cap = io::read_raw<std::int32_t>(in);
    c.mlp_hidden = io::read_raw<std::int32_t>(in);
    c.forward_agg = static_cast<Aggregator>(io::read_raw<std::uint8_t>(in));
    c.backward_agg = static_cast<Aggregator>(io::read_raw<std::uint8_t>(in));
    c.repeat_agg = static_cast<Aggregator>(io::read_raw<std::uint8_t>(in));
    const bool has_uniform = io::read_raw<std::uint8_t>(in) != 0;
    const auto uniform = static_cast<Aggregator>(io::read_raw<std::uint8_t>(in));
    if (has_uniform) c.uniform_agg = uniform;
    c.batch_size = io::read_raw<std::int32_t>(in);
    c.max_epochs = io::read_raw<std::int32_t>(in);
    c.early_stop_patience = io::read_raw<std::int32_t>(in);
    c.learning_rate = io::read_raw<double>(in);
    return c;
}

}  // namespace

template <typename T>
void save_artifacts(const ModelArtifacts<T>& a, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open artifact file for writing: " + path);
    out.write(kBundleMagic, 4);
    io::write_raw<std::uint32_t>(out, a.version);
    io::write_string(out, a.config_snapshot);
    io::write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(a.min_k));

    write_vocab(out, a.encoders.activity);
    write_vocab(out, a.encoders.resource);
    io::write_raw<std::int32_t>(out, a.encoders.bin_count);
    write_bins(out, a.encoders.dt_prev_bins);
    write_bins(out, a.encoders.dt_start_bins);
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(a.encoders.extra_specs.size()));
    std::size_t vi = 0, bi = 0;
    for (const auto& spec : a.encoders.extra_specs) {
        io::write_raw<std::uint8_t>(out, spec.categorical ? 1 : 0);
        io::write_string(out, spec.name);
        if (spec.categorical) write_vocab(out, a.encoders.extra_vocabs[vi++]);
        else write_bins(out, a.encoders.extra_bins[bi++]);
    }

    write_predictor_config(out, a.predictor_config);
    for (double v : a.scaler.mean) io::write_raw<double>(out, v);
    for (double v : a.scaler.stddev) io::write_raw<double>(out, v);

    for (std::size_t s = 0; s < kNumActions; ++s) {
        if (!a.predictors[s]) throw InternalError("artifact bundle is missing a predictor");
        io::write_raw<std::uint8_t>(out, static_cast<std::uint8_t>(s));
        nn::save_store(a.predictors[s]->params(), out);
    }
    if (!a.qnet) throw InternalError("artifact bundle is missing the policy network");
    nn::save_store(a.qnet->params(), out);
    io::write_raw<std::uint32_t>(out, kBundleSentinel);
    if (!out) throw DataError("failed writing artifact file: " + path);
}

template <typename T>
ModelArtifacts<T> load_artifacts(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open artifact file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBundleMagic, 4) != 0)
        throw DataError("not an artifact bundle: " + path);
    ModelArtifacts<T> a;
    a.version = io::read_raw<std::uint32_t>(in);
    if (a.version != kBundleVersion)
        throw DataError("unsupported artifact version " + std::to_string(a.version));
    a.config_snapshot = io::read_string(in);
    a.min_k = static_cast<std::size_t>(io::read_raw<std::uint64_t>(in));

    a.encoders.activity = read_vocab(in);
    a.encoders.resource = read_vocab(in);
    a.encoders.bin_count = io::read_raw<std::int32_t>(in);
    a.encoders.dt_prev_bins = read_bins(in);
    a.encoders.dt_start_bins = read_bins(in);
    const auto n_extras = io::read_raw<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_extras; ++i) {
        ExtraAttributeSpec spec;
        spec.categorical = io::read_raw<std::uint8_t>(in) != 0;
        spec.name = io::read_string(in);
        a.encoders.extra_specs.push_back(spec);
        if (spec.categorical) a.encoders.extra_vocabs.push_back(read_vocab(in));
        else a.encoders.extra_bins.push_back(read_bins(in));
    }

    a.predictor_config = read_predictor_config(in);
    for (double& v : a.scaler.mean) v = io::read_raw<double>(in);
    for (double& v : a.scaler.stddev) v = io::read_raw<double>(in);

    a.dims = FeatureDims::from_encoders(a.encoders);
    for (std::size_t s = 0; s < kNumActions; ++s) {
        const auto sid = io::read_raw<std::uint8_t>(in);
        if (sid != s) throw DataError("artifact bundle: predictor sections out of order");
        a.predictors[s] = std::make_unique<Predictor<T>>(a.dims, a.predictor_config,
                                                         static_cast<StructureId>(s), 0);
        nn::load_store(a.predictors[s]->params(), in);
    }
    a.qnet = std::make_unique<QNetwork<T>>(0);
    nn::load_store(a.qnet->params(), in);
    if (io::read_raw<std::uint32_t>(in) != kBundleSentinel)
        throw DataError("artifact bundle corrupt (bad sentinel): " + path);
    return a;
}

// ---------------------------------------------------------------------------
// Fold execution
// ---------------------------------------------------------------------------

std::uint64_t fold_seed(std::uint64_t master_seed, int fold) {
    return master_seed + 1000003ull * static_cast<std::uint64_t>(fold + 1);
}

namespace {

template <typename F>
auto staged(const char* stage, int fold, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError("fold " + std::to_string(fold) + ", stage " + stage + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("fold " + std::to_string(fold) + ", stage " + stage + ": " + e.what());
    }
}

std::vector<const Trace*> collect(const EventLog& log, const std::vector<std::size_t>& idx) {
    std::vector<const Trace*> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&log.traces[i]);
    return out;
}

}  // namespace

template <typename T>
FoldOutput<T> run_fold(const EventLog& log, const FoldAssignment& folds, int fold,
                       const RunConfig& cfg) {
    const std::uint64_t fseed = fold_seed(cfg.seed, fold);

    const auto baseline_idx = folds.traces_with_role(fold, FoldRole::TrainBaseline);
    const auto rl_idx = folds.traces_with_role(fold, FoldRole::TrainRl);
    const auto val_idx = folds.traces_with_role(fold, FoldRole::Validation);
    const auto test_idx = folds.traces_with_role(fold, FoldRole::Test);

    // --- preprocessing, fitted on the fold's training portion only ---
    FoldOutput<T> output;
    output.artifacts.encoders = staged("preprocess", fold, [&] {
        std::vector<const Trace*> train_traces;
        for (const auto* set : {&baseline_idx, &rl_idx, &val_idx})
            for (std::size_t i : *set) train_traces.push_back(&log.traces[i]);
        return fit_encoders(train_traces, cfg.encoder_options());
    });
    const Encoders& encoders = output.artifacts.encoders;
    const FeatureDims dims = FeatureDims::from_encoders(encoders);

    std::vector<EncodedTrace> encoded(log.traces.size());
    auto encode_set = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx) encoded[i] = encode_trace(log.traces[i], encoders);
    };
    encode_set(baseline_idx);
    encode_set(rl_idx);
    encode_set(val_idx);

    auto encoded_ptrs = [&](const std::vector<std::size_t>& idx) {
        std::vector<const EncodedTrace*> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(&encoded[i]);
        return out;
    };

    // --- stage 1: one predictor per structure on the baseline half ---
    output.artifacts.dims = dims;
    output.artifacts.predictor_config = cfg.predictor;
    output.artifacts.config_snapshot = cfg.to_text();
    output.artifacts.min_k = cfg.min_k;

    staged("train-predictors", fold, [&] {
        auto train_one = [&](int s) {
            const auto sid = static_cast<StructureId>(s);
            auto model = std::make_unique<Predictor<T>>(dims, cfg.predictor, sid, fseed);
            PrefixDataset train_ds = build_dataset(encoded_ptrs(baseline_idx), sid, cfg.min_k);
            PrefixDataset val_ds = build_dataset(encoded_ptrs(val_idx), sid, cfg.min_k);
            TrainResult res = train_predictor(*model, train_ds, val_ds, fseed);
            return std::make_pair(std::move(model), std::move(res));
        };
        if (cfg.threads > 1) {
            std::array<std::future<std::pair<std::unique_ptr<Predictor<T>>, TrainResult>>,
                       kNumActions>
                futures;
            for (int s = 0; s < kNumActions; ++s)
                futures[static_cast<std::size_t>(s)] = std::async(std::launch::async, train_one, s);
            for (int s = 0; s < kNumActions; ++s) {
                auto [model, res] = futures[static_cast<std::size_t>(s)].get();
                output.artifacts.predictors[static_cast<std::size_t>(s)] = std::move(model);
                output.stage1[static_cast<std::size_t>(s)] = std::move(res);
            }
        } else {
            for (int s = 0; s < kNumActions; ++s) {
                auto [model, res] = train_one(s);
                output.artifacts.predictors[static_cast<std::size_t>(s)] = std::move(model);
                output.stage1[static_cast<std::size_t>(s)] = std::move(res);
            }
        }
        return 0;
    });

    // --- stage 2: selection policy on the RL half ---
    staged("train-agent", fold, [&] {
        std::array<PrefixDataset, kNumActions> rl_ds;
        for (int s = 0; s < kNumActions; ++s)
            rl_ds[static_cast<std::size_t>(s)] =
                build_dataset(encoded_ptrs(rl_idx), static_cast<StructureId>(s), cfg.min_k);
        std::array<const Predictor<T>*, kNumActions> preds{};
        for (int s = 0; s < kNumActions; ++s)
            preds[static_cast<std::size_t>(s)] = output.artifacts.predictors[static_cast<std::size_t>(s)].get();
        AgentArtifacts agent_art;
        auto qnet = train_agent<T>(rl_ds, preds, cfg.agent, fseed, &agent_art);
        output.artifacts.qnet = std::make_unique<QNetwork<T>>(std::move(qnet));
        output.artifacts.scaler = agent_art.scaler;
        output.agent_log = std::move(agent_art.log);
        return 0;
    });

    // --- evaluation on the fold's test prefixes ---
    output.metrics = staged("evaluate", fold, [&] {
        encode_set(test_idx);
        return evaluate_policy(output.artifacts, encoded_ptrs(test_idx), cfg.min_k, std::nullopt,
                               cfg.threads);
    });
    return output;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

struct EvalSample {
    const EncodedTrace* trace;
    std::size_t k;
    int label;
};

std::vector<EvalSample> eval_samples(const std::vector<const EncodedTrace*>& traces,
                                     std::size_t min_k) {
    std::vector<EvalSample> out;
    for (const EncodedTrace* t : traces) {
        const std::size_t n = t->events.size();
        if (n <= min_k) continue;
        for (std::size_t k = min_k; k < n; ++k)
            out.push_back({t, k, t->events[k].activity_id});
    }
    return out;
}

std::vector<int> prefix_activities(const EncodedTrace& t, std::size_t k) {
    std::vector<int> acts(k);
    for (std::size_t i = 0; i < k; ++i) acts[i] = t.events[i].activity_id;
    return acts;
}

std::vector<bool> metric_class_mask(const ConfusionMatrix& cm) {
    // every real activity counts; the reserved UNK class only when it occurs
    std::vector<bool> mask(static_cast<std::size_t>(cm.num_classes()), true);
    if (cm.num_classes() > 0 && cm.support(kUnkIndex) == 0 && cm.predicted(kUnkIndex) == 0)
        mask[kUnkIndex] = false;
    return mask;
}

}  // namespace

template <typename T>
Metrics evaluate_policy(const ModelArtifacts<T>& artifacts,
                        const std::vector<const EncodedTrace*>& test_traces, std::size_t min_k,
                        std::optional<StructureId> forced, int threads) {
    const auto samples = eval_samples(test_traces, min_k);
    const int classes = artifacts.dims.activity_vocab;

    auto eval_range = [&](std::size_t begin, std::size_t end) {
        std::pair<ConfusionMatrix, std::vector<std::int64_t>> acc{
            ConfusionMatrix(classes), std::vector<std::int64_t>(kNumActions, 0)};
        for (std::size_t i = begin; i < end; ++i) {
            const EvalSample& s = samples[i];
            int action;
            if (forced) {
                action = static_cast<int>(*forced);
            } else {
                const auto state = extract_state(*s.trace, s.k).to_array();
                action = greedy_action(artifacts.qnet->forward(artifacts.scaler.apply(state)));
            }
            const auto graph =
                assemble_structure(prefix_activities(*s.trace, s.k), static_cast<StructureId>(action));
            const int pred =
                artifacts.predictors[static_cast<std::size_t>(action)]->predict_argmax(graph,
                                                                                       *s.trace, s.k);
            acc.first.record(s.label, pred);
            ++acc.second[static_cast<std::size_t>(action)];
        }
        return acc;
    };

    ConfusionMatrix cm(classes);
    std::vector<std::int64_t> hist(kNumActions, 0);
    if (threads > 1 && samples.size() > 256) {
        const std::size_t nchunks = static_cast<std::size_t>(threads);
        std::vector<std::future<std::pair<ConfusionMatrix, std::vector<std::int64_t>>>> futures;
        const std::size_t chunk = (samples.size() + nchunks - 1) / nchunks;
        for (std::size_t c = 0; c < nchunks; ++c) {
            const std::size_t b = c * chunk;
            const std::size_t e = std::min(samples.size(), b + chunk);
            if (b >= e) break;
            futures.push_back(std::async(std::launch::async, eval_range, b, e));
        }
        for (auto& f : futures) {
            auto [part_cm, part_hist] = f.get();
            cm.merge(part_cm);
            for (std::size_t a = 0; a < kNumActions; ++a) hist[a] += part_hist[a];
        }
    } else {
        auto [part_cm, part_hist] = eval_range(0, samples.size());
        cm = std::move(part_cm);
        hist = std::move(part_hist);
    }

    Metrics m;
    const auto mask = metric_class_mask(cm);
    m.accuracy = accuracy(cm);
    m.macro_f1 = macro_f1(cm, mask);
    m.gmean = macro_gmean(cm, mask);
    m.per_class = per_class_report(cm);
    m.confusion = std::move(cm);
    m.action_histogram = std::move(hist);
    m.num_samples = samples.size();
    return m;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

Metrics average_metrics(const std::vector<Metrics>& folds) {
    if (folds.empty()) throw InternalError("averaging zero folds");
    Metrics avg;
    avg.action_histogram.assign(kNumActions, 0);
    avg.confusion = ConfusionMatrix(folds[0].confusion.num_classes());
    for (const auto& f : folds) {
        avg.accuracy += f.accuracy;
        avg.macro_f1 += f.macro_f1;
        avg.gmean += f.gmean;
        avg.num_samples += f.num_samples;
        avg.confusion.merge(f.confusion);
        for (std::size_t a = 0; a < kNumActions && a < f.action_histogram.size(); ++a)
            avg.action_histogram[a] += f.action_histogram[a];
    }
    const double n = static_cast<double>(folds.size());
    avg.accuracy /= n;
    avg.macro_f1 /= n;
    avg.gmean /= n;
    avg.per_class = per_class_report(avg.confusion);
    return avg;
}

template <typename T>
CvOutput<T> run_cv(const EventLog& log, const RunConfig& cfg) {
    const FoldAssignment folds = split_folds(log, cfg.seed);
    CvOutput<T> out;
    for (int f = 0; f < folds.num_folds; ++f)
        out.folds.push_back(run_fold<T>(log, folds, f, cfg));
    for (const auto& fo : out.folds) out.result.per_fold.push_back(fo.metrics);
    out.result.averaged = average_metrics(out.result.per_fold);
    return out;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

template <typename T>
std::array<Metrics, kNumActions + 1> evaluate_fold_policies(
    const FoldOutput<T>& fold_output, const std::vector<const EncodedTrace*>& test_traces,
    std::size_t min_k, int threads) {
    std::array<Metrics, kNumActions + 1> out;
    for (int s = 0; s < kNumActions; ++s)
        out[static_cast<std::size_t>(s)] = evaluate_policy(
            fold_output.artifacts, test_traces, min_k, static_cast<StructureId>(s), threads);
    out[kNumActions] =
        evaluate_policy(fold_output.artifacts, test_traces, min_k, std::nullopt, threads);
    return out;
}

template <typename T>
std::vector<AblationRow> ablation_run(const EventLog& log, const RunConfig& cfg) {
    const FoldAssignment folds = split_folds(log, cfg.seed);
    std::array<std::vector<Metrics>, kNumActions + 1> columns;

    for (int f = 0; f < folds.num_folds; ++f) {
        FoldOutput<T> fold_output = run_fold<T>(log, folds, f, cfg);
        const auto test_idx = folds.traces_with_role(f, FoldRole::Test);
        std::vector<EncodedTrace> test_encoded;
        test_encoded.reserve(test_idx.size());
        for (std::size_t i : test_idx)
            test_encoded.push_back(encode_trace(log.traces[i], fold_output.artifacts.encoders));
        std::vector<const EncodedTrace*> ptrs;
        for (const auto& t : test_encoded) ptrs.push_back(&t);
        auto policies = evaluate_fold_policies(fold_output, ptrs, cfg.min_k, cfg.threads);
        for (std::size_t p = 0; p <= kNumActions; ++p) columns[p].push_back(std::move(policies[p]));
    }

    std::vector<AblationRow> rows;
    for (int s = 0; s < kNumActions; ++s)
        rows.push_back({structure_name(static_cast<StructureId>(s)),
                        average_metrics(columns[static_cast<std::size_t>(s)])});
    rows.push_back({"adaptive", average_metrics(columns[kNumActions])});
    return rows;
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

template <typename T>
std::vector<BenchRow> benchmark_latency(const ModelArtifacts<T>& artifacts,
                                        const std::vector<const EncodedTrace*>& prefixes,
                                        std::size_t min_k, int repetitions) {
    const auto samples = eval_samples(prefixes, min_k);
    if (samples.empty()) throw DataError("latency benchmark has no prefixes");

    auto run_policy = [&](std::optional<StructureId> forced) {
        std::vector<double> millis;
        millis.reserve(samples.size() * static_cast<std::size_t>(repetitions));
        for (int rep = 0; rep < repetitions; ++rep) {
            for (const EvalSample& s : samples) {
                const auto t0 = std::chrono::steady_clock::now();
                int action;
                if (forced) {
                    action = static_cast<int>(*forced);
                } else {
                    const auto state = extract_state(*s.trace, s.k).to_array();
                    action = greedy_action(artifacts.qnet->forward(artifacts.scaler.apply(state)));
                }
                const auto graph = assemble_structure(prefix_activities(*s.trace, s.k),
                                                      static_cast<StructureId>(action));
                volatile int sink = artifacts.predictors[static_cast<std::size_t>(action)]
                                        ->predict_argmax(graph, *s.trace, s.k);
                (void)sink;
                const auto t1 = std::chrono::steady_clock::now();
                millis.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
        }
        return summarize_latency(std::move(millis));
    };

    std::vector<BenchRow> rows;
    rows.push_back({"adaptive", run_policy(std::nullopt)});
    for (int s = 0; s < kNumActions; ++s)
        rows.push_back({structure_name(static_cast<StructureId>(s)),
                        run_policy(static_cast<StructureId>(s))});
    return rows;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open metrics file for writing: " + path);
    out << "dataset,fold,policy,samples,accuracy,macro_f1,gmean,act_G1,act_G2,act_G3,act_G4,"
           "undefined_classes\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.fold << ',' << r.policy << ',' << r.metrics.num_samples << ','
            << fmt(r.metrics.accuracy) << ',' << fmt(r.metrics.macro_f1) << ','
            << fmt(r.metrics.gmean);
        for (std::size_t a = 0; a < kNumActions; ++a)
            out << ',' << (a < r.metrics.action_histogram.size() ? r.metrics.action_histogram[a] : 0);
        std::string undef;
        for (std::size_t c = 0; c < r.metrics.per_class.size(); ++c)
            if (r.metrics.per_class[c].undefined) {
                if (!undef.empty()) undef += ';';
                undef += std::to_string(c);
            }
        out << ',' << undef << '\n';
    }
}

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %-5s %-9s %8s %9s %9s %9s  %s\n", "dataset", "fold",
                  "policy", "samples", "accuracy", "macro_f1", "gmean", "structure histogram");
    os << line;
    for (const auto& r : rows) {
        std::string hist;
        for (std::size_t a = 0; a < r.metrics.action_histogram.size(); ++a) {
            if (a) hist += "/";
            hist += std::to_string(r.metrics.action_histogram[a]);
        }
        std::snprintf(line, sizeof(line), "%-12s %-5s %-9s %8zu %9.4f %9.4f %9.4f  %s\n",
                      r.dataset.c_str(), r.fold.c_str(), r.policy.c_str(), r.metrics.num_samples,
                      r.metrics.accuracy, r.metrics.macro_f1, r.metrics.gmean, hist.c_str());
        os << line;
    }
    return os.str();
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open bench file for writing: " + path);
    out << "policy,samples,mean_ms,p95_ms\n";
    for (const auto& r : rows)
        out << r.policy << ',' << r.stats.samples << ',' << fmt(r.stats.mean_ms) << ','
            << fmt(r.stats.p95_ms) << '\n';
}

void write_agent_log_csv(const std::vector<AgentLogRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open agent log for writing: " + path);
    out << "step,eps,mean_reward,loss,act_G1,act_G2,act_G3,act_G4\n";
    for (const auto& r : rows) {
        out << r.step << ',' << fmt(r.eps) << ',' << fmt(r.mean_reward) << ',' << fmt(r.loss);
        for (std::size_t a = 0; a < kNumActions; ++a) out << ',' << r.action_counts[a];
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

template void save_artifacts<float>(const ModelArtifacts<float>&, const std::string&);
template void save_artifacts<double>(const ModelArtifacts<double>&, const std::string&);
template ModelArtifacts<float> load_artifacts<float>(const std::string&);
template ModelArtifacts<double> load_artifacts<double>(const std::string&);
template FoldOutput<float> run_fold<float>(const EventLog&, const FoldAssignment&, int,
                                           const RunConfig&);
template FoldOutput<double> run_fold<double>(const EventLog&, const FoldAssignment&, int,
                                             const RunConfig&);
template Metrics evaluate_policy<float>(const ModelArtifacts<float>&,
                                        const std::vector<const EncodedTrace*>&, std::size_t,
                                        std::optional<StructureId>, int);
template Metrics evaluate_policy<double>(const ModelArtifacts<double>&,
                                         const std::vector<const EncodedTrace*>&, std::size_t,
                                         std::optional<StructureId>, int);
template CvOutput<float> run_cv<float>(const EventLog&, const RunConfig&);
template CvOutput<double> run_cv<double>(const EventLog&, const RunConfig&);
template std::array<Metrics, kNumActions + 1> evaluate_fold_policies<float>(
    const FoldOutput<float>&, const std::vector<const EncodedTrace*>&, std::size_t, int);
template std::array<Metrics, kNumActions + 1> evaluate_fold_policies<double>(
    const FoldOutput<double>&, const std::vector<const EncodedTrace*>&, std::size_t, int);
template std::vector<AblationRow> ablation_run<float>(const EventLog&, const RunConfig&);
template std::vector<AblationRow> ablation_run<double>(const EventLog&, const RunConfig&);
template std::vector<BenchRow> benchmark_latency<float>(const ModelArtifacts<float>&,
                                                        const std::vector<const EncodedTrace*>&,
                                                        std::size_t, int);
template std::vector<BenchRow> benchmark_latency<double>(const ModelArtifacts<double>&,
                                                         const std::vector<const EncodedTrace*>&,
                                                         std::size_t, int);

}  // namespace flowcast
