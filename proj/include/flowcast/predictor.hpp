#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/nn.hpp"
#include "flowcast/preprocess.hpp"
#include "flowcast/procgraph.hpp"

namespace flowcast {

enum class Aggregator { Lstm, Mean, Pool, Gcn };
const char* aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

struct PredictorConfig {
    int hidden_dim = 128;
    int layers = 2;
    double dropout = 0.1;
    // embedding dim = min(table size, cap); the activity cap keeps degenerate
    // vocabularies bounded
    int activity_emb_cap = 128;
    int aux_emb_cap = 32;
    int mlp_hidden = 0;  // 0 -> hidden_dim
    Aggregator forward_agg = Aggregator::Lstm;
    Aggregator backward_agg = Aggregator::Lstm;
    Aggregator repeat_agg = Aggregator::Mean;
    // ablation switch: one aggregation strategy for every edge type
    std::optional<Aggregator> uniform_agg;

    int batch_size = 64;
    int max_epochs = 100;
    int early_stop_patience = 10;
    double learning_rate = 1e-3;  // NAdam

    Aggregator effective_agg(EdgeType t) const;
    int effective_mlp_hidden() const { return mlp_hidden > 0 ? mlp_hidden : hidden_dim; }
    void validate() const;
};

// Table sizes the model is built against; derived from fitted encoders.
struct FeatureDims {
    int activity_vocab = 0;
    int resource_vocab = 0;
    int dt_bins = 0;                // rows of the two temporal tables (B + 1)
    std::vector<int> extra_vocabs;  // rows per extra attribute table

    static FeatureDims from_encoders(const Encoders& enc);
    bool operator==(const FeatureDims&) const = default;
};

// One next-activity model bound to a single graph structure. Parameter names
// are deterministic functions of (layer, relation), so two models with the
// same seed share identical initial weights for the relations they share.
template <typename T>
class Predictor {
  public:
    using Tape = nn::Tape<T>;
    using Ref = typename nn::Tape<T>::Ref;

    Predictor(const FeatureDims& dims, const PredictorConfig& cfg, StructureId sid,
              std::uint64_t seed);

    StructureId structure() const { return sid_; }
    const PredictorConfig& config() const { return cfg_; }
    const FeatureDims& dims() const { return dims_; }
    nn::ParamStore<T>& params() { return store_; }
    const nn::ParamStore<T>& params() const { return store_; }

    // Per-event attribute embeddings concatenated and projected to the hidden
    // width; uses the first k events of the prefix.
    Ref embed_nodes(Tape& tape, const EncodedTrace& prefix, std::size_t k) const;

    // One relation's neighbor aggregate for every node: LSTM over in-neighbors
    // in ascending source order for sequential relations, mean for repeats.
    // Nodes without in-neighbors under the relation receive the zero vector.
    Ref aggregate_relation(Tape& tape, const ProcessGraph& graph, Ref feats, EdgeType type,
                           int layer) const;

    // Relation combine + ReLU, residual add and layer norm; dropout in
    // training mode.
    Ref hetero_layer(Tape& tape, const ProcessGraph& graph, Ref feats, int layer, bool training,
                     Rng* rng) const;

    // Node features after all layers, [k, hidden].
    Ref node_features(Tape& tape, const ProcessGraph& graph, const EncodedTrace& prefix,
                      std::size_t k, bool training, Rng* rng) const;

    // Readout at the current node through the MLP head, [1, hidden].
    Ref readout(Tape& tape, Ref feats, bool training, Rng* rng) const;

    Ref classify(Tape& tape, Ref pooled) const;  // [n, hidden] -> [n, classes]

    // Full forward in evaluation mode; probabilities over the activity
    // vocabulary, summing to 1.
    std::vector<double> predict(const ProcessGraph& graph, const EncodedTrace& prefix,
                                std::size_t k) const;

    int predict_argmax(const ProcessGraph& graph, const EncodedTrace& prefix, std::size_t k) const;

  private:
    FeatureDims dims_;
    PredictorConfig cfg_;
    StructureId sid_;
    mutable nn::ParamStore<T> store_;  // reads are thread-safe; training is single-writer
    int emb_total_ = 0;

    typename Tape::LstmRefs lstm_refs(Tape& tape, EdgeType t, int layer) const;
};

struct PrefixDataset {
    // parallel arrays; graphs are built once per structure and reused
    std::vector<const EncodedTrace*> traces;
    std::vector<std::size_t> ks;
    std::vector<int> labels;  // encoded next activity
    std::vector<ProcessGraph> graphs;

    std::size_t size() const { return ks.size(); }
};

// Builds the per-structure dataset for a set of encoded traces: one sample
// per prefix length in [min_k, n-1].
PrefixDataset build_dataset(const std::vector<const EncodedTrace*>& traces, StructureId sid,
                            std::size_t min_k);

struct TrainLogRow {
    int epoch = 0;
    double train_loss = 0;
    double val_accuracy = 0;
};

struct TrainResult {
    std::vector<TrainLogRow> curve;
    int best_epoch = -1;  // 0-based epoch of the kept snapshot
    double best_val_accuracy = 0;
};

// Mini-batch cross-entropy training with NAdam, epoch cap, early stopping on
// validation accuracy, and restoration of the best-validation snapshot.
template <typename T>
TrainResult train_predictor(Predictor<T>& model, const PrefixDataset& train,
                            const PrefixDataset& val, std::uint64_t seed);

template <typename T>
double dataset_accuracy(const Predictor<T>& model, const PrefixDataset& data);

}  // namespace flowcast
