#pragma once

// Graph propagation over the user-item training graph, inner-product
// scoring and BPR training of the layer-0 embeddings.
//
//   e_u^(l+1) = sum_{i in N_u} e_i^(l) / sqrt(|N_u| |N_i|)   (items likewise)
//   e_u       = mean_{l=0..L} e_u^(l)
//   y_ui      = <e_u, e_i>
//
// Propagation is linear and the normalized adjacency is symmetric, so the
// gradient w.r.t. layer 0 is the same propagation applied to the gradient
// w.r.t. the final embeddings.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/graph.hpp"
#include "revgraph/numerics.hpp"

namespace revgraph {

enum class InitMode {
  kPrintf,   // items: concat(image, text) codes; users: review attention
  kNoImage,  // items: text codes only; users: review attention
  kNoTitle,  // items: image codes only; users: review attention
  kNoRaum,   // items: concat codes; users: random
  kNone,     // both random (LightGCN)
  kBprmf,    // both random, zero layers
};

std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& s);
const std::vector<InitMode>& all_init_modes();

inline constexpr std::size_t kMaxLayers = 9;
inline constexpr std::size_t kDefaultLayers = 7;

struct ModelState {
  DenseMatrix user0;
  DenseMatrix item0;
  std::size_t num_layers = kDefaultLayers;
  double lambda_bpr = 1e-4;
  // Regularize layer-0 rows of (u, i, j) instead of final e_u, e_i.
  bool reg_layer0 = false;
  bool freeze_items = false;
  InitMode mode = InitMode::kPrintf;
  std::uint64_t seed = 0;
  AdamWState optimizer;

  std::size_t dim() const { return item0.cols(); }
  void validate() const;
  void reset_optimizer(const AdamWConfig& cfg);
};

struct PropagatedEmbeddings {
  DenseMatrix users;
  DenseMatrix items;
  // Filled only when requested: layers 0..L.
  std::vector<DenseMatrix> user_layers;
  std::vector<DenseMatrix> item_layers;
};

PropagatedEmbeddings propagate(const DenseMatrix& user0, const DenseMatrix& item0,
                               const BipartiteGraph& graph, std::size_t num_layers,
                               bool keep_layers = false);
PropagatedEmbeddings propagate(const ModelState& state, const BipartiteGraph& graph,
                               bool keep_layers = false);

double score(const PropagatedEmbeddings& embs, Index user, Index item);
// users x items score matrix.
DenseMatrix score_all(const PropagatedEmbeddings& embs);

struct Triple {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
};

// sum over triples of softplus(-(y_ui - y_uj)) + lambda (|e_u|^2 + |e_i|^2),
// on final embeddings. Optional gradients are w.r.t. the final embeddings.
double bpr_loss(const PropagatedEmbeddings& embs, std::span<const Triple> triples, double lambda,
                DenseMatrix* grad_users = nullptr, DenseMatrix* grad_items = nullptr);

struct LayerZeroGradients {
  DenseMatrix users;
  DenseMatrix items;
};

// Full objective as a function of the layer-0 embeddings, honoring
// state.reg_layer0.
double bpr_objective(const ModelState& state, const BipartiteGraph& graph,
                     std::span<const Triple> triples, LayerZeroGradients* grads = nullptr);

// ---------------------------------------------------------------------------

struct ContentInputs {
  const DenseMatrix* image_codes = nullptr;   // |I| x d'
  const DenseMatrix* text_codes = nullptr;    // |I| x d'
  const DenseMatrix* review_codes = nullptr;  // rows indexed by Interaction::review_row
  const std::vector<Interaction>* train = nullptr;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  // Width of randomly initialized embeddings; 0 means 2 * code dim.
  std::size_t random_dim = 0;
  // Applied to every code table before use: column centering, then row
  // L2 normalization.
  bool center_codes = true;
  bool normalize_codes = false;
};

// Fills user0/item0 according to mode. kBprmf also sets num_layers to 0.
void init_mode(ModelState& state, InitMode mode, const ContentInputs& inputs);

// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 4096;
  std::size_t patience = 20;
  std::size_t eval_every = 1;
  std::size_t val_k = 10;
  AdamWConfig adamw{};
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-triple objective over the epoch
  std::optional<double> val_ndcg;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  std::size_t best_epoch = 0;
  double best_val_ndcg = 0.0;
  bool early_stopped = false;
  bool aborted = false;
  std::string abort_reason;
};

// Trains in place; on return the state holds the best checkpoint by
// validation NDCG@val_k (or the last epoch when there is no validation data).
TrainResult train(ModelState& state, const BipartiteGraph& graph, const SplitDataset& split,
                  const TrainConfig& config);

void write_train_trace(const std::filesystem::path& path, const TrainResult& result,
                       const std::string& fingerprint);

// ---------------------------------------------------------------------------

struct CheckpointMeta {
  std::string fingerprint;
  std::string data_fingerprint;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const CheckpointMeta& meta);
ModelState load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace revgraph
