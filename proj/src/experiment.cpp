#include "revgraph/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <optional>

namespace revgraph {

EmbeddingTable fit_and_compress(const EmbeddingTable& table, const CompressionConfig& config,
                                AutoEncoder* trained) {
  AutoEncoder ae = make_autoencoder(table.dim(), config.code_dim, config.l2, config.train.seed);
  train_ae(ae, table, config.train);
  EmbeddingTable out = compress(ae, table);
  if (trained != nullptr) *trained = std::move(ae);
  return out;
}

PreparedData prepare_data(const std::vector<Interaction>& interactions, std::size_t num_users,
                          std::size_t num_items, const EmbeddingTable& image,
                          const EmbeddingTable& text, const EmbeddingTable& reviews,
                          const CompressionConfig& compression, SplitRatios ratios,
                          std::uint64_t split_seed) {
  PreparedData d;
  d.split = split_per_user(interactions, num_users, num_items, ratios, split_seed);
  d.graph = BipartiteGraph(num_users, num_items, d.split.train);
  d.image_codes = fit_and_compress(image, compression).matrix;
  d.text_codes = fit_and_compress(text, compression).matrix;
  d.review_codes = fit_and_compress(reviews, compression).matrix;
  return d;
}

ContentInputs content_inputs(const PreparedData& data, const ModelConfig& model) {
  ContentInputs in;
  auto present = [](const DenseMatrix& m) { return m.empty() ? nullptr : &m; };
  in.image_codes = present(data.image_codes);
  in.text_codes = present(data.text_codes);
  in.review_codes = present(data.review_codes);
  in.train = &data.split.train;
  in.num_users = data.split.num_users;
  in.num_items = data.split.num_items;
  in.random_dim = model.random_dim;
  in.center_codes = model.center_codes;
  in.normalize_codes = model.normalize_codes;
  return in;
}

RunResult run_mode(const PreparedData& data, InitMode mode, const ModelConfig& model,
                   const TrainConfig& train_cfg) {
  ModelState state;
  state.num_layers = model.num_layers;
  state.lambda_bpr = model.lambda_bpr;
  state.reg_layer0 = model.reg_layer0;
  state.freeze_items = model.freeze_items;
  state.seed = model.seed;
  state.optimizer.config = train_cfg.adamw;
  init_mode(state, mode, content_inputs(data, model));

  RunResult r;
  r.mode = mode;
  r.num_layers = state.num_layers;
  r.train = train(state, data.graph, data.split, train_cfg);
  r.test = evaluate(propagate(state, data.graph), data.split, EvalTarget::kTest, model.eval_ks);
  return r;
}

std::vector<RunResult> run_ablation(const PreparedData& data, const std::vector<InitMode>& modes,
                                    const ModelConfig& model, const TrainConfig& train_cfg) {
  if (modes.empty()) throw std::invalid_argument("run_ablation: no modes given");
  std::vector<RunResult> out;
  for (InitMode m : modes) out.push_back(run_mode(data, m, model, train_cfg));
  return out;
}

std::vector<RunResult> sweep_layers(const PreparedData& data, InitMode mode,
                                    const std::vector<std::size_t>& layers,
                                    const ModelConfig& model, const TrainConfig& train_cfg) {
  if (layers.empty()) throw std::invalid_argument("sweep_layers: no layer counts given");
  std::vector<RunResult> out;
  for (std::size_t l : layers) {
    if (l > kMaxLayers) {
      throw std::invalid_argument("sweep_layers: " + std::to_string(l) + " layers exceeds " +
                                  std::to_string(kMaxLayers));
    }
    ModelConfig m = model;
    m.num_layers = l;
    out.push_back(run_mode(data, mode, m, train_cfg));
  }
  return out;
}

void write_results_tsv(const std::filesystem::path& path, const std::vector<RunResult>& results,
                       const std::string& fingerprint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
  out << "mode\tlayers";
  if (!results.empty()) {
    for (std::size_t k : results.front().test.ks) out << "\tR@" << k << "\tN@" << k;
  }
  const std::size_t k0 = results.empty() ? 5 : results.front().test.ks.front();
  out << "\tbest_epoch\tp_N@" << k0 << "_vs_first\n" << std::fixed << std::setprecision(6);
  for (std::size_t r = 0; r < results.size(); ++r) {
    const RunResult& res = results[r];
    out << to_string(res.mode) << '\t' << res.num_layers;
    for (std::size_t j = 0; j < res.test.ks.size(); ++j) {
      out << '\t' << res.test.mean_recall[j] << '\t' << res.test.mean_ndcg[j];
    }
    out << '\t' << res.train.best_epoch << '\t';
    std::optional<TTestResult> t;
    if (r > 0 && res.test.per_user.size() >= 2) {
      t = paired_t_test(res.test, results.front().test, {MetricKind::kNdcg, k0});
    }
    if (t) {
      out << std::scientific << std::setprecision(4) << t->p_value << std::fixed
          << std::setprecision(6);
    } else {
      out << '-';
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace revgraph
