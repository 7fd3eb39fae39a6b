#include "flowcast/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowcast/error.hpp"

namespace flowcast {

const char* aggregator_name(Aggregator a) {
    switch (a) {
        case Aggregator::Lstm: return "lstm";
        case Aggregator::Mean: return "mean";
        case Aggregator::Pool: return "pool";
        case Aggregator::Gcn: return "gcn";
    }
    return "?";
}

Aggregator aggregator_from_name(const std::string& name) {
    for (Aggregator a : {Aggregator::Lstm, Aggregator::Mean, Aggregator::Pool, Aggregator::Gcn})
        if (name == aggregator_name(a)) return a;
    throw ConfigError("unknown aggregator '" + name + "' (expected lstm|mean|pool|gcn)");
}

Aggregator PredictorConfig::effective_agg(EdgeType t) const {
    if (uniform_agg) return *uniform_agg;
    switch (t) {
        case EdgeType::Forward: return forward_agg;
        case EdgeType::Backward: return backward_agg;
        case EdgeType::Repeat: return repeat_agg;
    }
    return Aggregator::Mean;
}

void PredictorConfig::validate() const {
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
    if (activity_emb_cap < 1 || aux_emb_cap < 1) throw ConfigError("embedding caps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
}

FeatureDims FeatureDims::from_encoders(const Encoders& enc) {
    FeatureDims d;
    d.activity_vocab = static_cast<int>(enc.activity.size());
    d.resource_vocab = static_cast<int>(enc.resource.size());
    // bin indices live in {1..B}; row 0 stays unused
    int max_bins = std::max(enc.dt_prev_bins.bin_count(), enc.dt_start_bins.bin_count());
    for (const auto& b : enc.extra_bins) max_bins = std::max(max_bins, b.bin_count());
    d.dt_bins = max_bins + 1;
    std::size_t vi = 0;
    for (const auto& spec : enc.extra_specs) {
        if (spec.categorical)
            d.extra_vocabs.push_back(static_cast<int>(enc.extra_vocabs[vi++].size()));
        else
            d.extra_vocabs.push_back(d.dt_bins);
    }
    return d;
}

namespace {

std::string layer_prefix(int layer, EdgeType t) {
    return "layer" + std::to_string(layer) + "." + edge_type_name(t);
}

// in_nbrs[v] = sources of edges (u -> v), ascending; 1-based nodes.
std::vector<std::vector<int>> in_neighbors(const ProcessGraph& graph, EdgeType t) {
    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(graph.num_nodes()) + 1);
    for (const auto& [src, dst] : graph.edges(t)) nbrs[static_cast<std::size_t>(dst)].push_back(src);
    // edge lists are sorted by (src, dst) so each list is already ascending
    return nbrs;
}

}  // namespace

template <typename T>
Predictor<T>::Predictor(const FeatureDims& dims, const PredictorConfig& cfg, StructureId sid,
                        std::uint64_t seed)
    : dims_(dims), cfg_(cfg), sid_(sid), store_(seed) {
    cfg_.validate();
    if (dims.activity_vocab < 2) throw DataError("activity vocabulary is empty");

    const int da = std::min(dims.activity_vocab, cfg_.activity_emb_cap);
    const int dr = std::min(dims.resource_vocab, cfg_.aux_emb_cap);
    const int db = std::min(dims.dt_bins, cfg_.aux_emb_cap);
    store_.add("emb.activity", dims.activity_vocab, da, nn::Init::Glorot);
    store_.add("emb.resource", dims.resource_vocab, dr, nn::Init::Glorot);
    store_.add("emb.dt_prev", dims.dt_bins, db, nn::Init::Glorot);
    store_.add("emb.dt_start", dims.dt_bins, db, nn::Init::Glorot);
    emb_total_ = da + dr + 2 * db;
    for (std::size_t i = 0; i < dims.extra_vocabs.size(); ++i) {
        const int dv = std::min(dims.extra_vocabs[i], cfg_.aux_emb_cap);
        store_.add("emb.extra" + std::to_string(i), dims.extra_vocabs[i], dv, nn::Init::Glorot);
        emb_total_ += dv;
    }

    const int h = cfg_.hidden_dim;
    store_.add("proj.w", emb_total_, h, nn::Init::Glorot);
    store_.add("proj.b", 1, h, nn::Init::Zero);

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string lp = "layer" + std::to_string(l);
        store_.add(lp + ".self.w", h, h, nn::Init::Glorot);
        for (EdgeType t : kEdgeTypes) {
            if (!structure_has_edge_type(sid, t)) continue;
            const std::string rp = layer_prefix(l, t);
            store_.add(rp + ".w", h, h, nn::Init::Glorot);
            if (cfg_.effective_agg(t) == Aggregator::Lstm) {
                store_.add(rp + ".lstm.w_ih", h, 4 * h, nn::Init::Glorot);
                store_.add(rp + ".lstm.w_hh", h, 4 * h, nn::Init::Glorot);
                store_.add(rp + ".lstm.b", 1, 4 * h, nn::Init::LstmBias);
            }
        }
        store_.add(lp + ".norm.gain", 1, h, nn::Init::One);
        store_.add(lp + ".norm.bias", 1, h, nn::Init::Zero);
    }

    const int mh = cfg_.effective_mlp_hidden();
    store_.add("mlp.w1", h, mh, nn::Init::Glorot);
    store_.add("mlp.b1", 1, mh, nn::Init::Zero);
    store_.add("mlp.w2", mh, h, nn::Init::Glorot);
    store_.add("mlp.b2", 1, h, nn::Init::Zero);
    store_.add("cls.w", h, dims.activity_vocab, nn::Init::Glorot);
    store_.add("cls.b", 1, dims.activity_vocab, nn::Init::Zero);
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::embed_nodes(Tape& tape, const EncodedTrace& prefix,
                                                     std::size_t k) const {
    if (k < 1 || k > prefix.events.size())
        throw InternalError("prefix length " + std::to_string(k) + " out of range");

    std::vector<int> act(k), res(k), dtp(k), dts(k);
    for (std::size_t i = 0; i < k; ++i) {
        const EncodedEvent& e = prefix.events[i];
        act[i] = e.activity_id;
        res[i] = e.resource_id;
        dtp[i] = e.dt_prev_bin;
        dts[i] = e.dt_start_bin;
    }
    std::vector<Ref> parts;
    parts.push_back(tape.embedding(tape.param(store_.get("emb.activity")), act));
    parts.push_back(tape.embedding(tape.param(store_.get("emb.resource")), res));
    parts.push_back(tape.embedding(tape.param(store_.get("emb.dt_prev")), dtp));
    parts.push_back(tape.embedding(tape.param(store_.get("emb.dt_start")), dts));
    for (std::size_t x = 0; x < dims_.extra_vocabs.size(); ++x) {
        std::vector<int> ids(k);
        for (std::size_t i = 0; i < k; ++i) ids[i] = prefix.events[i].extra_bins[x];
        parts.push_back(tape.embedding(tape.param(store_.get("emb.extra" + std::to_string(x))), ids));
    }
    Ref cat = tape.concat_cols(parts);
    return tape.linear(cat, tape.param(store_.get("proj.w")), tape.param(store_.get("proj.b")));
}

template <typename T>
typename nn::Tape<T>::LstmRefs Predictor<T>::lstm_refs(Tape& tape, EdgeType t, int layer) const {
    const std::string rp = layer_prefix(layer, t);
    typename Tape::LstmRefs refs;
    refs.w_ih = tape.param(store_.get(rp + ".lstm.w_ih"));
    refs.w_hh = tape.param(store_.get(rp + ".lstm.w_hh"));
    refs.b = tape.param(store_.get(rp + ".lstm.b"));
    refs.hidden = cfg_.hidden_dim;
    return refs;
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::aggregate_relation(Tape& tape, const ProcessGraph& graph,
                                                            Ref feats, EdgeType type,
                                                            int layer) const {
    if (!graph.has(type))
        throw InternalError(std::string("relation ") + edge_type_name(type) +
                            " absent from structure " + structure_name(graph.structure()));
    const int k = graph.num_nodes();
    const Aggregator agg = cfg_.effective_agg(type);
    const auto nbrs = in_neighbors(graph, type);

    if (agg == Aggregator::Mean || agg == Aggregator::Gcn) {
        // Neighbor averaging as a dense adjacency product; rows of nodes with
        // no in-neighbors stay zero. GCN uses symmetric degree normalization.
        nn::Tensor<T> a(k, k);
        if (agg == Aggregator::Mean) {
            for (int v = 1; v <= k; ++v) {
                const auto& in = nbrs[static_cast<std::size_t>(v)];
                if (in.empty()) continue;
                const T w = T(1) / static_cast<T>(in.size());
                for (int u : in) a.at(v - 1, u - 1) += w;
            }
        } else {
            std::vector<int> out_deg(static_cast<std::size_t>(k) + 1, 0);
            for (const auto& [src, dst] : graph.edges(type)) {
                (void)dst;
                ++out_deg[static_cast<std::size_t>(src)];
            }
            for (int v = 1; v <= k; ++v)
                for (int u : nbrs[static_cast<std::size_t>(v)]) {
                    const double dv = 1.0 + static_cast<double>(nbrs[static_cast<std::size_t>(v)].size());
                    const double du = 1.0 + static_cast<double>(out_deg[static_cast<std::size_t>(u)]);
                    a.at(v - 1, u - 1) += static_cast<T>(1.0 / std::sqrt(dv * du));
                }
        }
        return tape.matmul(tape.constant(std::move(a)), feats);
    }

    if (agg == Aggregator::Lstm) {
        bool chain = true;
        for (int v = 1; v <= k; ++v)
            if (nbrs[static_cast<std::size_t>(v)].size() > 1) {
                chain = false;
                break;
            }
        const auto refs = lstm_refs(tape, type, layer);
        if (chain) {
            // Every neighborhood has at most one node: a single batched LSTM
            // step from the zero state covers all of them.
            std::vector<int> srcs, dsts;
            for (int v = 1; v <= k; ++v)
                if (!nbrs[static_cast<std::size_t>(v)].empty()) {
                    srcs.push_back(nbrs[static_cast<std::size_t>(v)][0] - 1);
                    dsts.push_back(v - 1);
                }
            if (srcs.empty()) return tape.constant(nn::Tensor<T>::zeros(k, cfg_.hidden_dim));
            Ref gathered = tape.gather_rows(feats, srcs);
            Ref stepped = tape.lstm_single_step(gathered, refs);
            return tape.scatter_rows(stepped, dsts, k);
        }
        std::vector<Ref> stepped_rows;
        std::vector<int> dsts;
        for (int v = 1; v <= k; ++v) {
            const auto& in = nbrs[static_cast<std::size_t>(v)];
            if (in.empty()) continue;
            std::vector<int> ids(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) ids[i] = in[i] - 1;
            stepped_rows.push_back(tape.lstm_sequence(tape.gather_rows(feats, ids), refs));
            dsts.push_back(v - 1);
        }
        if (stepped_rows.empty()) return tape.constant(nn::Tensor<T>::zeros(k, cfg_.hidden_dim));
        return tape.scatter_rows(tape.stack_rows(stepped_rows), dsts, k);
    }

    // Pool: elementwise max over the neighborhood.
    std::vector<Ref> rows;
    std::vector<int> dsts;
    for (int v = 1; v <= k; ++v) {
        const auto& in = nbrs[static_cast<std::size_t>(v)];
        if (in.empty()) continue;
        std::vector<int> ids(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) ids[i] = in[i] - 1;
        rows.push_back(tape.max_rows(tape.gather_rows(feats, ids)));
        dsts.push_back(v - 1);
    }
    if (rows.empty()) return tape.constant(nn::Tensor<T>::zeros(k, cfg_.hidden_dim));
    return tape.scatter_rows(tape.stack_rows(rows), dsts, k);
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::hetero_layer(Tape& tape, const ProcessGraph& graph,
                                                      Ref feats, int layer, bool training,
                                                      Rng* rng) const {
    const std::string lp = "layer" + std::to_string(layer);
    Ref combined = tape.matmul(feats, tape.param(store_.get(lp + ".self.w")));
    for (EdgeType t : kEdgeTypes) {
        if (!graph.has(t)) continue;
        Ref agg = aggregate_relation(tape, graph, feats, t, layer);
        Ref rel = tape.matmul(agg, tape.param(store_.get(layer_prefix(layer, t) + ".w")));
        combined = tape.add(combined, rel);
    }
    Ref activated = tape.relu(combined);
    Ref residual = tape.add(activated, feats);
    Ref normed = tape.layer_norm(residual, tape.param(store_.get(lp + ".norm.gain")),
                                 tape.param(store_.get(lp + ".norm.bias")));
    if (training && cfg_.dropout > 0) {
        if (!rng) throw InternalError("training-mode forward needs an RNG");
        normed = tape.dropout(normed, cfg_.dropout, true, *rng);
    }
    return normed;
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::node_features(Tape& tape, const ProcessGraph& graph,
                                                       const EncodedTrace& prefix, std::size_t k,
                                                       bool training, Rng* rng) const {
    if (static_cast<std::size_t>(graph.num_nodes()) != k)
        throw InternalError("graph has " + std::to_string(graph.num_nodes()) +
                            " nodes but the prefix length is " + std::to_string(k));
    Ref feats = embed_nodes(tape, prefix, k);
    for (int l = 0; l < cfg_.layers; ++l) feats = hetero_layer(tape, graph, feats, l, training, rng);
    return feats;
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::readout(Tape& tape, Ref feats, bool training,
                                                 Rng* rng) const {
    (void)training;
    (void)rng;
    const auto& t = tape.value(feats);
    Ref current = tape.gather_rows(feats, {static_cast<int>(t.n - 1)});
    Ref h1 = tape.relu(
        tape.linear(current, tape.param(store_.get("mlp.w1")), tape.param(store_.get("mlp.b1"))));
    return tape.linear(h1, tape.param(store_.get("mlp.w2")), tape.param(store_.get("mlp.b2")));
}

template <typename T>
typename Predictor<T>::Ref Predictor<T>::classify(Tape& tape, Ref pooled) const {
    return tape.linear(pooled, tape.param(store_.get("cls.w")), tape.param(store_.get("cls.b")));
}

template <typename T>
std::vector<double> Predictor<T>::predict(const ProcessGraph& graph, const EncodedTrace& prefix,
                                          std::size_t k) const {
    Tape tape;
    Ref feats = node_features(tape, graph, prefix, k, false, nullptr);
    Ref logits = classify(tape, readout(tape, feats, false, nullptr));
    const auto& lv = tape.value(logits);

    // stabilized softmax over the single row
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < lv.m; ++j) mx = std::max(mx, static_cast<double>(lv.at(0, j)));
    std::vector<double> probs(static_cast<std::size_t>(lv.m));
    double z = 0;
    for (std::int64_t j = 0; j < lv.m; ++j) {
        probs[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(lv.at(0, j)) - mx);
        z += probs[static_cast<std::size_t>(j)];
    }
    for (auto& p : probs) p /= z;
    return probs;
}

template <typename T>
int Predictor<T>::predict_argmax(const ProcessGraph& graph, const EncodedTrace& prefix,
                                 std::size_t k) const {
    const auto probs = predict(graph, prefix, k);
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---------------------------------------------------------------------------
// Datasets and training
// ---------------------------------------------------------------------------

PrefixDataset build_dataset(const std::vector<const EncodedTrace*>& traces, StructureId sid,
                            std::size_t min_k) {
    PrefixDataset ds;
    for (const EncodedTrace* t : traces) {
        const std::size_t n = t->events.size();
        if (n <= min_k) continue;
        std::vector<int> acts(n);
        for (std::size_t i = 0; i < n; ++i) acts[i] = t->events[i].activity_id;
        for (std::size_t k = min_k; k < n; ++k) {
            ds.traces.push_back(t);
            ds.ks.push_back(k);
            ds.labels.push_back(t->events[k].activity_id);
            ds.graphs.push_back(
                assemble_structure(std::vector<int>(acts.begin(), acts.begin() + static_cast<std::ptrdiff_t>(k)), sid));
        }
    }
    return ds;
}

template <typename T>
double dataset_accuracy(const Predictor<T>& model, const PrefixDataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (model.predict_argmax(data.graphs[i], *data.traces[i], data.ks[i]) == data.labels[i])
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
TrainResult train_predictor(Predictor<T>& model, const PrefixDataset& train,
                            const PrefixDataset& val, std::uint64_t seed) {
    if (train.size() == 0 || val.size() == 0)
        throw DataError("predictor training needs non-empty training and validation sets");

    const PredictorConfig& cfg = model.config();
    nn::OptimizerConfig opt;
    opt.kind = nn::OptKind::NAdam;
    opt.lr = cfg.learning_rate;

    Rng rng = seeded_rng(seed, std::string("train-") + structure_name(model.structure()));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::vector<nn::Tensor<T>> best_snapshot = model.params().snapshot_values();
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            nn::Tape<T> tape;
            std::vector<typename nn::Tape<T>::Ref> rows;
            std::vector<int> labels;
            rows.reserve(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                auto feats =
                    model.node_features(tape, train.graphs[i], *train.traces[i], train.ks[i],
                                        true, &rng);
                rows.push_back(model.readout(tape, feats, true, &rng));
                labels.push_back(train.labels[i]);
            }
            auto stacked = tape.stack_rows(rows);
            auto logits = model.classify(tape, stacked);
            auto [loss, probs] = tape.softmax_cross_entropy(logits, labels);
            (void)probs;
            tape.backward(loss);
            loss_sum += static_cast<double>(tape.value(loss).at(0, 0));
            ++batches;
            nn::optimizer_step(model.params(), opt);
        }

        const double val_acc = dataset_accuracy(model, val);
        result.curve.push_back(
            {epoch, batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0, val_acc});

        if (val_acc > result.best_val_accuracy || result.best_epoch < 0) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            best_snapshot = model.params().snapshot_values();
            epochs_since_best = 0;
        } else if (++epochs_since_best >= cfg.early_stop_patience) {
            break;
        }
    }

    model.params().restore_values(best_snapshot);
    return result;
}

template class Predictor<float>;
template class Predictor<double>;
template TrainResult train_predictor<float>(Predictor<float>&, const PrefixDataset&,
                                            const PrefixDataset&, std::uint64_t);
template TrainResult train_predictor<double>(Predictor<double>&, const PrefixDataset&,
                                             const PrefixDataset&, std::uint64_t);
template double dataset_accuracy<float>(const Predictor<float>&, const PrefixDataset&);
template double dataset_accuracy<double>(const Predictor<double>&, const PrefixDataset&);

}  // namespace flowcast
