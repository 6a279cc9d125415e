#include "revgraph/epim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "revgraph/compressor.hpp"
#include "revgraph/eval.hpp"
#include "revgraph/raum.hpp"

namespace revgraph {

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kPrintf: return "printf";
    case InitMode::kNoImage: return "no_image";
    case InitMode::kNoTitle: return "no_title";
    case InitMode::kNoRaum: return "no_raum";
    case InitMode::kNone: return "none";
    case InitMode::kBprmf: return "bprmf";
  }
  return "unknown";
}

InitMode parse_init_mode(const std::string& s) {
  for (InitMode m : all_init_modes()) {
    if (to_string(m) == s) return m;
  }
  if (s == "lightgcn") return InitMode::kNone;
  throw std::invalid_argument("unknown mode '" + s +
                              "' (expected printf|no_image|no_title|no_raum|none|bprmf)");
}

const std::vector<InitMode>& all_init_modes() {
  static const std::vector<InitMode> modes{InitMode::kPrintf, InitMode::kNoImage,
                                           InitMode::kNoTitle, InitMode::kNoRaum,
                                           InitMode::kNone,    InitMode::kBprmf};
  return modes;
}

void ModelState::validate() const {
  if (user0.cols() != item0.cols()) {
    throw ShapeError("model: user dim " + std::to_string(user0.cols()) + " != item dim " +
                     std::to_string(item0.cols()));
  }
  if (num_layers > kMaxLayers) {
    throw std::invalid_argument("model: num_layers " + std::to_string(num_layers) +
                                " exceeds " + std::to_string(kMaxLayers));
  }
  if (!user0.all_finite() || !item0.all_finite()) {
    throw std::domain_error("model: non-finite layer-0 embeddings");
  }
}

void ModelState::reset_optimizer(const AdamWConfig& cfg) {
  optimizer = AdamWState(cfg, {user0.size(), item0.size()});
}

// ---------------------------------------------------------------------------

namespace {

// One propagation step: next_u = sum_i w_ui x_i, next_i = sum_u w_ui x_u.
void propagate_step(const BipartiteGraph& g, const DenseMatrix& users, const DenseMatrix& items,
                    DenseMatrix& next_users, DenseMatrix& next_items) {
  const std::size_t d = users.cols();
  next_users.fill(0.0);
  next_items.fill(0.0);
  auto uw = g.user_side_weights();
  std::size_t e = 0;
  for (Index u = 0; u < g.num_users(); ++u) {
    double* dst = next_users.row(u).data();
    for (Index i : g.items_of(u)) {
      const double w = uw[e++];
      const double* src = items.row(i).data();
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }
  auto iw = g.item_side_weights();
  e = 0;
  for (Index i = 0; i < g.num_items(); ++i) {
    double* dst = next_items.row(i).data();
    for (Index u : g.users_of(i)) {
      const double w = iw[e++];
      const double* src = users.row(u).data();
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
    }
  }
}

void axpy(DenseMatrix& y, const DenseMatrix& x, double a) {
  auto yv = y.values();
  auto xv = x.values();
  for (std::size_t k = 0; k < yv.size(); ++k) yv[k] += a * xv[k];
}

}  // namespace

PropagatedEmbeddings propagate(const DenseMatrix& user0, const DenseMatrix& item0,
                               const BipartiteGraph& graph, std::size_t num_layers,
                               bool keep_layers) {
  if (user0.cols() != item0.cols()) throw ShapeError("propagate: user/item dims differ");
  if (num_layers > 0) {
    if (graph.num_users() != user0.rows() || graph.num_items() != item0.rows()) {
      throw ShapeError("propagate: graph is " + std::to_string(graph.num_users()) + "x" +
                       std::to_string(graph.num_items()) + " but embeddings are " +
                       std::to_string(user0.rows()) + "x" + std::to_string(item0.rows()));
    }
  }
  PropagatedEmbeddings out;
  out.users = user0;
  out.items = item0;
  if (keep_layers) {
    out.user_layers.push_back(user0);
    out.item_layers.push_back(item0);
  }
  DenseMatrix cur_u = user0, cur_i = item0;
  DenseMatrix next_u(user0.rows(), user0.cols()), next_i(item0.rows(), item0.cols());
  for (std::size_t l = 0; l < num_layers; ++l) {
    propagate_step(graph, cur_u, cur_i, next_u, next_i);
    std::swap(cur_u, next_u);
    std::swap(cur_i, next_i);
    axpy(out.users, cur_u, 1.0);
    axpy(out.items, cur_i, 1.0);
    if (keep_layers) {
      out.user_layers.push_back(cur_u);
      out.item_layers.push_back(cur_i);
    }
  }
  const double inv = 1.0 / static_cast<double>(num_layers + 1);
  for (double& v : out.users.values()) v *= inv;
  for (double& v : out.items.values()) v *= inv;
  return out;
}

PropagatedEmbeddings propagate(const ModelState& state, const BipartiteGraph& graph,
                               bool keep_layers) {
  return propagate(state.user0, state.item0, graph, state.num_layers, keep_layers);
}

double score(const PropagatedEmbeddings& embs, Index user, Index item) {
  if (user >= embs.users.rows()) throw std::out_of_range("score: user index out of range");
  if (item >= embs.items.rows()) throw std::out_of_range("score: item index out of range");
  return dot(embs.users.row(user), embs.items.row(item));
}

DenseMatrix score_all(const PropagatedEmbeddings& embs) { return matmul_nt(embs.users, embs.items); }

double bpr_loss(const PropagatedEmbeddings& embs, std::span<const Triple> triples, double lambda,
                DenseMatrix* grad_users, DenseMatrix* grad_items) {
  const std::size_t d = embs.users.cols();
  if (grad_users != nullptr) *grad_users = DenseMatrix(embs.users.rows(), d);
  if (grad_items != nullptr) *grad_items = DenseMatrix(embs.items.rows(), d);
  double total = 0.0;
  for (const Triple& t : triples) {
    if (t.user >= embs.users.rows() || t.pos >= embs.items.rows() || t.neg >= embs.items.rows()) {
      throw std::out_of_range("bpr_loss: triple index out of range");
    }
    auto eu = embs.users.row(t.user);
    auto ei = embs.items.row(t.pos);
    auto ej = embs.items.row(t.neg);
    const double x = dot(eu, ei) - dot(eu, ej);
    total += softplus(-x) + lambda * (squared_norm(eu) + squared_norm(ei));
    if (grad_users == nullptr && grad_items == nullptr) continue;
    // d softplus(-x) / dx = -sigmoid(-x)
    const double g = -sigmoid(-x);
    if (grad_users != nullptr) {
      auto gu = grad_users->row(t.user);
      for (std::size_t k = 0; k < d; ++k) gu[k] += g * (ei[k] - ej[k]) + 2.0 * lambda * eu[k];
    }
    if (grad_items != nullptr) {
      auto gi = grad_items->row(t.pos);
      auto gj = grad_items->row(t.neg);
      for (std::size_t k = 0; k < d; ++k) {
        gi[k] += g * eu[k] + 2.0 * lambda * ei[k];
        gj[k] -= g * eu[k];
      }
    }
  }
  return total;
}

double bpr_objective(const ModelState& state, const BipartiteGraph& graph,
                     std::span<const Triple> triples, LayerZeroGradients* grads) {
  const PropagatedEmbeddings embs = propagate(state, graph);
  const double final_lambda = state.reg_layer0 ? 0.0 : state.lambda_bpr;
  DenseMatrix gu, gi;
  double loss = bpr_loss(embs, triples, final_lambda, grads ? &gu : nullptr, grads ? &gi : nullptr);
  if (grads != nullptr) {
    // The layer-mean of powers of the symmetric normalized adjacency is
    // self-adjoint, so the backward pass is the forward pass on the gradient.
    PropagatedEmbeddings back = propagate(gu, gi, graph, state.num_layers);
    grads->users = std::move(back.users);
    grads->items = std::move(back.items);
  }
  if (state.reg_layer0) {
    const double lam = state.lambda_bpr;
    for (const Triple& t : triples) {
      auto u = state.user0.row(t.user);
      auto i = state.item0.row(t.pos);
      auto j = state.item0.row(t.neg);
      loss += lam * (squared_norm(u) + squared_norm(i) + squared_norm(j));
      if (grads == nullptr) continue;
      auto gu0 = grads->users.row(t.user);
      auto gi0 = grads->items.row(t.pos);
      auto gj0 = grads->items.row(t.neg);
      for (std::size_t k = 0; k < u.size(); ++k) {
        gu0[k] += 2.0 * lam * u[k];
        gi0[k] += 2.0 * lam * i[k];
        gj0[k] += 2.0 * lam * j[k];
      }
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------

void init_mode(ModelState& state, InitMode mode, const ContentInputs& in) {
  const bool needs_image = mode == InitMode::kPrintf || mode == InitMode::kNoTitle ||
                           mode == InitMode::kNoRaum;
  const bool needs_text = mode == InitMode::kPrintf || mode == InitMode::kNoImage ||
                          mode == InitMode::kNoRaum;
  const bool needs_reviews = mode == InitMode::kPrintf || mode == InitMode::kNoImage ||
                             mode == InitMode::kNoTitle;
  if (needs_image && in.image_codes == nullptr) {
    throw std::invalid_argument("mode " + to_string(mode) + " needs compressed image codes");
  }
  if (needs_text && in.text_codes == nullptr) {
    throw std::invalid_argument("mode " + to_string(mode) + " needs compressed text codes");
  }
  if (needs_reviews && (in.review_codes == nullptr || in.train == nullptr)) {
    throw std::invalid_argument("mode " + to_string(mode) +
                                " needs compressed review codes and train interactions");
  }

  auto prepared = [&](const DenseMatrix* m) {
    require_shape(*m, in.num_items, m->cols(), "item codes");
    return prepare_codes(*m, in.center_codes, in.normalize_codes);
  };

  std::size_t random_dim = in.random_dim;
  if (random_dim == 0) {
    if (in.image_codes != nullptr && in.text_codes != nullptr) {
      random_dim = in.image_codes->cols() + in.text_codes->cols();
    } else if (in.image_codes != nullptr || in.text_codes != nullptr) {
      random_dim = 2 * (in.image_codes ? in.image_codes->cols() : in.text_codes->cols());
    } else {
      throw std::invalid_argument("init_mode: random_dim is 0 and no codes to derive it from");
    }
  }

  Rng rng(state.seed);
  state.mode = mode;
  switch (mode) {
    case InitMode::kPrintf:
    case InitMode::kNoRaum:
      state.item0 = build_item_init(prepared(in.image_codes), prepared(in.text_codes));
      break;
    case InitMode::kNoImage:
      state.item0 = prepared(in.text_codes);
      break;
    case InitMode::kNoTitle:
      state.item0 = prepared(in.image_codes);
      break;
    case InitMode::kNone:
    case InitMode::kBprmf:
      break;
  }

  if (needs_reviews) {
    const DenseMatrix reviews =
        prepare_codes(*in.review_codes, in.center_codes, in.normalize_codes);
    const ItemReviewMeans means = item_review_means(*in.train, reviews, in.num_items);
    const CrossRelationMatrix d = build_cross_relation(means, state.item0);
    state.user0 = init_users(d, state.item0, *in.train, reviews, in.num_users).matrix;
  } else if (mode == InitMode::kNoRaum) {
    const std::size_t dim = state.item0.cols();
    state.user0 = fan_in_uniform(in.num_users, dim, dim, rng);
  } else {
    state.user0 = fan_in_uniform(in.num_users, random_dim, random_dim, rng);
    state.item0 = fan_in_uniform(in.num_items, random_dim, random_dim, rng);
  }
  if (mode == InitMode::kBprmf) state.num_layers = 0;
  state.reset_optimizer(state.optimizer.config);
  state.validate();
}

// ---------------------------------------------------------------------------

namespace {

struct Snapshot {
  DenseMatrix user0, item0;
  AdamWState optimizer;

  static Snapshot of(const ModelState& s) { return {s.user0, s.item0, s.optimizer}; }
  void restore(ModelState& s) const {
    s.user0 = user0;
    s.item0 = item0;
    s.optimizer = optimizer;
  }
};

}  // namespace

TrainResult train(ModelState& state, const BipartiteGraph& graph, const SplitDataset& split,
                  const TrainConfig& cfg) {
  state.validate();
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (cfg.eval_every == 0) throw std::invalid_argument("train: eval_every must be positive");
  if (graph.num_users() != state.user0.rows() || graph.num_items() != state.item0.rows()) {
    throw ShapeError("train: graph does not match model shapes");
  }
  const bool opt_matches = state.optimizer.m.size() == 2 &&
                           state.optimizer.m[0].size() == state.user0.size() &&
                           state.optimizer.m[1].size() == state.item0.size();
  if (!opt_matches) {
    state.reset_optimizer(cfg.adamw);
  } else {
    state.optimizer.config = cfg.adamw;
  }

  TrainResult result;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  const bool has_val = !split.val.empty();

  Snapshot best = Snapshot::of(state);
  double best_ndcg = -1.0;
  std::size_t since_best = 0;
  std::vector<Triple> batch;
  batch.reserve(cfg.batch_size);
  LayerZeroGradients grads;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    bool bad = false;
    for (std::size_t start = 0; start < order.size() && !bad; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const Interaction& it = split.train[order[k]];
        batch.push_back({it.user, it.item, sample_negative(it.user, graph, rng)});
      }
      const double loss = bpr_objective(state, graph, batch, &grads);
      if (!std::isfinite(loss) || !grads.users.all_finite() || !grads.items.all_finite()) {
        bad = true;
        break;
      }
      loss_sum += loss;
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (double& v : grads.users.values()) v *= scale;
      for (double& v : grads.items.values()) v *= scale;
      const std::span<double> params[] = {state.user0.values(), state.item0.values()};
      const std::span<const double> g[] = {
          grads.users.values(),
          state.freeze_items ? std::span<const double>{} : grads.items.values()};
      adamw_step(state.optimizer, params, g);
      if (!state.user0.all_finite() || !state.item0.all_finite()) bad = true;
    }
    if (bad) {
      result.aborted = true;
      result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    if (has_val && epoch % cfg.eval_every == 0) {
      const EvalReport r =
          evaluate(propagate(state, graph), split, EvalTarget::kValidation, {cfg.val_k});
      rec.val_ndcg = r.ndcg(cfg.val_k);
      if (*rec.val_ndcg > best_ndcg) {
        best_ndcg = *rec.val_ndcg;
        result.best_epoch = epoch;
        best = Snapshot::of(state);
        since_best = 0;
      } else {
        since_best += cfg.eval_every;
      }
    }
    result.trace.push_back(rec);
    if (has_val && cfg.patience > 0 && since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }

  if (has_val) {
    if (best_ndcg >= 0.0) result.best_val_ndcg = best_ndcg;
    best.restore(state);
  } else if (result.aborted) {
    best.restore(state);
  } else {
    result.best_epoch = result.trace.empty() ? 0 : result.trace.back().epoch;
  }
  return result;
}

void write_train_trace(const std::filesystem::path& path, const TrainResult& result,
                       const std::string& fingerprint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
  out << "# best_epoch=" << result.best_epoch << " early_stopped=" << result.early_stopped
      << " aborted=" << result.aborted << '\n';
  if (result.aborted) out << "# abort_reason=" << result.abort_reason << '\n';
  out << "epoch\tloss\tval_ndcg\n" << std::setprecision(10);
  for (const EpochRecord& r : result.trace) {
    out << r.epoch << '\t' << r.loss << '\t';
    if (r.val_ndcg) {
      out << *r.val_ndcg;
    } else {
      out << '-';
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "revgraph-checkpoint";

void write_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::span<double> v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw ParseError(path.string(), 0, "truncated checkpoint");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const CheckpointMeta& meta) {
  state.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const AdamWConfig& c = state.optimizer.config;
  std::ostringstream h;
  h << std::setprecision(17) << kCheckpointMagic << " version=1"
    << " users=" << state.user0.rows() << " items=" << state.item0.rows()
    << " dim=" << state.dim() << " layers=" << state.num_layers
    << " mode=" << to_string(state.mode) << " seed=" << state.seed
    << " lambda=" << state.lambda_bpr << " reg_layer0=" << state.reg_layer0
    << " freeze_items=" << state.freeze_items << " step=" << state.optimizer.step
    << " opt_blocks=" << state.optimizer.m.size() << " lr=" << c.lr << " beta1=" << c.beta1
    << " beta2=" << c.beta2 << " eps=" << c.eps << " wd=" << c.weight_decay
    << " fingerprint=" << (meta.fingerprint.empty() ? "-" : meta.fingerprint)
    << " data_fingerprint=" << (meta.data_fingerprint.empty() ? "-" : meta.data_fingerprint);
  out << h.str() << '\n';
  write_doubles(out, state.user0.values());
  write_doubles(out, state.item0.values());
  for (std::size_t b = 0; b < state.optimizer.m.size(); ++b) {
    write_doubles(out, state.optimizer.m[b]);
    write_doubles(out, state.optimizer.v[b]);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  hs >> magic;
  if (magic != kCheckpointMagic) throw ParseError(path.string(), 1, "not a checkpoint file");
  std::map<std::string, std::string> kv;
  for (std::string tok; hs >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), 1, "bad token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(path.string(), 1, std::string("missing '") + key + "'");
    return it->second;
  };
  auto get_size = [&](const char* key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  auto get_real = [&](const char* key) { return std::stod(get(key)); };

  ModelState s;
  const std::size_t users = get_size("users"), items = get_size("items"), dim = get_size("dim");
  s.num_layers = get_size("layers");
  s.mode = parse_init_mode(get("mode"));
  s.seed = std::stoull(get("seed"));
  s.lambda_bpr = get_real("lambda");
  s.reg_layer0 = get("reg_layer0") == "1";
  s.freeze_items = get("freeze_items") == "1";
  s.user0 = DenseMatrix(users, dim);
  s.item0 = DenseMatrix(items, dim);
  read_doubles(in, s.user0.values(), path);
  read_doubles(in, s.item0.values(), path);
  AdamWConfig c;
  c.lr = get_real("lr");
  c.beta1 = get_real("beta1");
  c.beta2 = get_real("beta2");
  c.eps = get_real("eps");
  c.weight_decay = get_real("wd");
  s.reset_optimizer(c);
  if (get_size("opt_blocks") != s.optimizer.m.size()) {
    throw ParseError(path.string(), 1, "unexpected optimizer block count");
  }
  s.optimizer.step = std::stoull(get("step"));
  for (std::size_t b = 0; b < s.optimizer.m.size(); ++b) {
    read_doubles(in, s.optimizer.m[b], path);
    read_doubles(in, s.optimizer.v[b], path);
  }
  if (meta != nullptr) {
    meta->fingerprint = get("fingerprint") == "-" ? "" : get("fingerprint");
    meta->data_fingerprint = get("data_fingerprint") == "-" ? "" : get("data_fingerprint");
  }
  s.validate();
  return s;
}

}  // namespace revgraph
