#pragma once

// In-memory pipeline runs shared by the CLI's ablate / sweep-layers commands
// and by the experiment tests: compress every table, split, then train and
// evaluate one model per (mode, depth).

#include <filesystem>
#include <string>
#include <vector>

#include "revgraph/compressor.hpp"
#include "revgraph/epim.hpp"
#include "revgraph/eval.hpp"
#include "revgraph/graph.hpp"

namespace revgraph {

struct CompressionConfig {
  std::size_t code_dim = kDefaultCodeDim;
  double l2 = 1e-4;
  AeTrainConfig train{};
};

// Trains an auto-encoder on table and returns the compressed table.
EmbeddingTable fit_and_compress(const EmbeddingTable& table, const CompressionConfig& config,
                                AutoEncoder* trained = nullptr);

struct PreparedData {
  SplitDataset split;
  // An empty matrix means that table is unavailable.
  BipartiteGraph graph;  // train interactions only
  DenseMatrix image_codes;
  DenseMatrix text_codes;
  DenseMatrix review_codes;
};

PreparedData prepare_data(const std::vector<Interaction>& interactions, std::size_t num_users,
                          std::size_t num_items, const EmbeddingTable& image,
                          const EmbeddingTable& text, const EmbeddingTable& reviews,
                          const CompressionConfig& compression, SplitRatios ratios,
                          std::uint64_t split_seed);

struct ModelConfig {
  std::size_t num_layers = kDefaultLayers;
  double lambda_bpr = 1e-4;
  bool reg_layer0 = false;
  bool freeze_items = false;
  bool center_codes = true;
  bool normalize_codes = false;
  std::size_t random_dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> eval_ks{5, 10};
};

// Empty code matrices are passed on as absent.

ContentInputs content_inputs(const PreparedData& data, const ModelConfig& model);

struct RunResult {
  InitMode mode = InitMode::kPrintf;
  std::size_t num_layers = 0;
  TrainResult train;
  EvalReport test;
};

RunResult run_mode(const PreparedData& data, InitMode mode, const ModelConfig& model,
                   const TrainConfig& train);
std::vector<RunResult> run_ablation(const PreparedData& data, const std::vector<InitMode>& modes,
                                    const ModelConfig& model, const TrainConfig& train);
std::vector<RunResult> sweep_layers(const PreparedData& data, InitMode mode,
                                    const std::vector<std::size_t>& layers,
                                    const ModelConfig& model, const TrainConfig& train);

// One row per run: mode, layers, R@K/N@K for the report's Ks, best epoch and
// the paired t-test p-value of NDCG at the first K against the first row.
void write_results_tsv(const std::filesystem::path& path, const std::vector<RunResult>& results,
                       const std::string& fingerprint);

}  // namespace revgraph
