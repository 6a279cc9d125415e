// Acceptance checks. Each criterion prints one line
//   criterion N: PASS|FAIL <measurements>
// and the process exits non-zero if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "revgraph/alignment.hpp"
#include "revgraph/cli.hpp"
#include "revgraph/compressor.hpp"
#include "revgraph/config.hpp"
#include "revgraph/epim.hpp"
#include "revgraph/eval.hpp"
#include "revgraph/experiment.hpp"
#include "revgraph/raum.hpp"
#include "revgraph/synthgen.hpp"
#include "support.hpp"

using namespace revgraph;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradients of the AE, ITC head and full BPR objective vs central
// differences.

double worst_over(const std::vector<std::pair<std::span<double>, std::span<const double>>>& blocks,
                  const std::function<double()>& f) {
  double worst = 0.0;
  for (auto [params, analytic] : blocks) {
    worst = std::max(worst, max_relative_error(analytic, numeric_gradient(params, f, 1e-5)));
  }
  return worst;
}

Verdict gradients() {
  const int instances = 100;
  std::mt19937_64 rng(101);
  double ae_worst = 0.0, itc_worst = 0.0, bpr_worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    {
      const std::size_t in = 3 + rng() % 8, code = 1 + rng() % 3;
      AutoEncoder ae = make_autoencoder(in, code, 1e-3 * (rng() % 10), rng());
      const DenseMatrix x = random_matrix(2 + rng() % 6, in, rng);
      AeGradients g;
      ae_objective(ae, x, &g);
      ae_worst = std::max(
          ae_worst, worst_over({{ae.encoder.w1.values(), g.encoder.w1.values()},
                                {ae.encoder.b1.values(), g.encoder.b1.values()},
                                {ae.encoder.w2.values(), g.encoder.w2.values()},
                                {ae.encoder.b2.values(), g.encoder.b2.values()},
                                {ae.decoder.w1.values(), g.decoder.w1.values()},
                                {ae.decoder.b1.values(), g.decoder.b1.values()},
                                {ae.decoder.w2.values(), g.decoder.w2.values()},
                                {ae.decoder.b2.values(), g.decoder.b2.values()}},
                               [&] { return ae_objective(ae, x); }));
    }
    {
      const std::size_t di = 2 + rng() % 5, dt = 2 + rng() % 5, b = 2 + rng() % 6;
      ItcHead head = make_itc_head(di, dt, 2 + rng() % 4, rng(), 0.05 + 0.5 * (rng() % 100) / 100.0);
      const DenseMatrix img = random_matrix(b, di, rng), txt = random_matrix(b, dt, rng);
      ItcGradients g;
      itc_loss(head, img, txt, &g);
      std::span<double> lt(&head.log_temperature, 1);
      std::span<const double> glt(&g.log_temperature, 1);
      itc_worst = std::max(itc_worst, worst_over({{head.w_img.values(), g.w_img.values()},
                                                  {head.w_txt.values(), g.w_txt.values()},
                                                  {lt, glt}},
                                                 [&] { return itc_loss(head, img, txt); }));
    }
    {
      const std::size_t nu = 2 + rng() % 9, ni = 2 + rng() % 9;
      const auto edges = random_edges(nu, ni, 0.3, rng);
      const BipartiteGraph graph(nu, ni, edges);
      ModelState s;
      s.user0 = random_matrix(nu, 1 + rng() % 4, rng, 0.5);
      s.item0 = random_matrix(ni, s.user0.cols(), rng, 0.5);
      s.num_layers = rng() % 4;
      s.lambda_bpr = 0.01;
      s.reg_layer0 = n % 2 == 1;
      std::vector<Triple> triples;
      for (const auto& e : edges) {
        Index neg = static_cast<Index>(rng() % ni);
        if (graph.has_edge(e.user, neg)) continue;
        triples.push_back({e.user, e.item, neg});
      }
      if (triples.empty()) continue;
      LayerZeroGradients g;
      bpr_objective(s, graph, triples, &g);
      bpr_worst = std::max(bpr_worst, worst_over({{s.user0.values(), g.users.values()},
                                                  {s.item0.values(), g.items.values()}},
                                                 [&] { return bpr_objective(s, graph, triples); }));
    }
  }
  const double worst = std::max({ae_worst, itc_worst, bpr_worst});
  return {worst < 1e-4, fmt("instances=%d max_rel_err ae=%.2e itc=%.2e bpr=%.2e (tol 1e-4)", instances,
                            ae_worst, itc_worst, bpr_worst)};
}

// ---------------------------------------------------------------------------
// 2. Sparse propagation vs dense adjacency powers.

Verdict propagation() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  const int graphs = 50;
  for (int n = 0; n < graphs; ++n) {
    const std::size_t nu = 2 + rng() % 20, ni = 2 + rng() % 20, d = 1 + rng() % 6;
    const auto edges = random_edges(nu, ni, 0.05 + 0.4 * (rng() % 100) / 100.0, rng);
    const BipartiteGraph graph(nu, ni, edges);
    const DenseMatrix adj = dense_normalized_adjacency(nu, ni, edges);
    const DenseMatrix u = random_matrix(nu, d, rng), it = random_matrix(ni, d, rng);
    for (std::size_t layers : {1u, 2u, 3u}) {
      const DenseMatrix want = dense_propagation(u, it, adj, layers);
      const PropagatedEmbeddings got = propagate(u, it, graph, layers);
      for (std::size_t r = 0; r < nu; ++r)
        for (std::size_t c = 0; c < d; ++c) worst = std::max(worst, std::abs(got.users(r, c) - want(r, c)));
      for (std::size_t r = 0; r < ni; ++r)
        for (std::size_t c = 0; c < d; ++c)
          worst = std::max(worst, std::abs(got.items(r, c) - want(nu + r, c)));
    }
  }
  return {worst < 1e-9, fmt("graphs=%d layers=1,2,3 max_abs_diff=%.2e (tol 1e-9)", graphs, worst)};
}

// ---------------------------------------------------------------------------
// 3. Attention columns sum to one; user coordinates inside the per-dimension
// hull of their items.

Verdict raum_convexity() {
  std::mt19937_64 rng(303);
  const std::size_t nu = 1000, ni = 80, di = 12, dr = 8;
  const auto train = random_edges(nu, ni, 0.06, rng);
  const DenseMatrix items = random_matrix(ni, di, rng, 2.0);
  const DenseMatrix reviews = random_matrix(train.size(), dr, rng, 2.0);
  const CrossRelationMatrix d = build_cross_relation(item_review_means(train, reviews, ni), items);
  const UserInitEmbeddings users = init_users(d, items, train, reviews, nu);

  std::vector<std::vector<const Interaction*>> mine(nu);
  for (const auto& e : train) mine[e.user].push_back(&e);
  double worst_sum = 0.0, worst_hull = 0.0;
  for (std::size_t u = 0; u < nu; ++u) {
    DenseMatrix r(mine[u].size(), dr);
    for (std::size_t k = 0; k < mine[u].size(); ++k)
      for (std::size_t c = 0; c < dr; ++c) r(k, c) = reviews(*mine[u][k]->review_row, c);
    const DenseMatrix w = dimension_attention(d, r);
    for (std::size_t c = 0; c < di; ++c) {
      double s = 0.0, lo = INFINITY, hi = -INFINITY;
      for (std::size_t k = 0; k < w.rows(); ++k) {
        s += w(k, c);
        lo = std::min(lo, items(mine[u][k]->item, c));
        hi = std::max(hi, items(mine[u][k]->item, c));
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      const double x = users.matrix(u, c);
      worst_hull = std::max({worst_hull, lo - x, x - hi});
    }
  }
  return {worst_sum <= 1e-9 && worst_hull <= 1e-12,
          fmt("users=%zu max|colsum-1|=%.2e max_hull_violation=%.2e", nu, worst_sum,
              std::max(0.0, worst_hull))};
}

// ---------------------------------------------------------------------------
// 4. Metrics vs brute-force set/DCG definitions.

Verdict metrics() {
  std::mt19937_64 rng(404);
  std::size_t mismatches = 0;
  const int rankings = 1000;
  for (int n = 0; n < rankings; ++n) {
    const std::size_t items = 3 + rng() % 60;
    std::vector<Index> ranked(items);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    std::vector<Index> relevant;
    for (Index i = 0; i < items; ++i)
      if (rng() % 6 == 0) relevant.push_back(i);
    if (relevant.empty()) relevant.push_back(static_cast<Index>(rng() % items));
    for (std::size_t k : {1u, 5u, 10u, 20u}) {
      if (*recall_at_k(ranked, relevant, k) != brute_recall(ranked, relevant, k)) ++mismatches;
      if (*ndcg_at_k(ranked, relevant, k) != brute_ndcg(ranked, relevant, k)) ++mismatches;
    }
  }
  const std::vector<Index> ranked{0, 5, 6, 7, 8, 9}, ab{0, 1};
  const double hand = *ndcg_at_k(ranked, ab, 5);
  return {mismatches == 0 && std::abs(hand - 0.6131) < 1e-4,
          fmt("rankings=%d mismatches=%zu hand_case_ndcg@5=%.6f (want 0.6131)", rankings, mismatches,
              hand)};
}

// ---------------------------------------------------------------------------
// 5-7. Planted-world experiments through the ablation pipeline with default
// settings.

struct World {
  PlantedWorld world;
  PreparedData data;
  ModelConfig model;
  TrainConfig train;
};

World prepare_world(std::uint64_t seed, double sigma_review) {
  RunConfig cfg;
  cfg.world.seed = seed;
  cfg.world.sigma_review = sigma_review;
  cfg.ae_seed = cfg.split_seed = cfg.seed = seed;
  World w{generate(cfg.world), {}, {}, cfg.train_config()};
  CompressionConfig cc;
  cc.code_dim = cfg.code_dim;
  cc.l2 = cfg.ae_l2;
  cc.train = cfg.ae_train_config();
  w.data = prepare_data(w.world.interactions, w.world.num_users(), w.world.num_items(), w.world.image,
                        w.world.text, w.world.reviews, cc, cfg.ratios, cfg.split_seed);
  w.model.num_layers = cfg.layers;
  w.model.lambda_bpr = cfg.lambda_bpr;
  w.model.center_codes = cfg.center_codes;
  w.model.normalize_codes = cfg.normalize_codes;
  w.model.seed = cfg.seed;
  w.model.eval_ks = cfg.ks;
  return w;
}

// Seed-averaged NDCG@5 per mode.
std::map<InitMode, double> mean_ndcg5(double sigma_review, const std::vector<InitMode>& modes,
                                      std::string& per_seed) {
  std::map<InitMode, double> mean;
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  for (std::uint64_t s : seeds) {
    const World w = prepare_world(s, sigma_review);
    per_seed += fmt(" seed%llu[", static_cast<unsigned long long>(s));
    for (const RunResult& r : run_ablation(w.data, modes, w.model, w.train)) {
      mean[r.mode] += r.test.ndcg(5) / seeds.size();
      per_seed += fmt("%s=%.4f ", to_string(r.mode).c_str(), r.test.ndcg(5));
    }
    per_seed.back() = ']';
  }
  return mean;
}

Verdict planted_ordering() {
  std::string seeds;
  auto m = mean_ndcg5(0.1, {InitMode::kPrintf, InitMode::kNoRaum, InitMode::kNone}, seeds);
  const double p = m[InitMode::kPrintf], nr = m[InitMode::kNoRaum], none = m[InitMode::kNone];
  const bool lift = p >= 1.10 * none;
  const bool between = none < nr && nr < p;
  return {lift && between,
          fmt("mean N@5 printf=%.4f no_raum=%.4f none=%.4f printf/none=%.3f (want >=1.10) "
              "no_raum_between=%s;",
              p, nr, none, p / none, between ? "yes" : "no") +
              seeds};
}

Verdict review_noise_control() {
  std::string seeds;
  auto m = mean_ndcg5(10.0, {InitMode::kPrintf, InitMode::kNoRaum}, seeds);
  const double p = m[InitMode::kPrintf], nr = m[InitMode::kNoRaum];
  const double gap = std::abs(p - nr) / nr;
  return {gap < 0.02, fmt("sigma_review=10 mean N@5 printf=%.4f no_raum=%.4f rel_gap=%.4f (want <0.02);",
                          p, nr, gap) +
                          seeds};
}

Verdict layer_sweep() {
  const World w = prepare_world(0, 0.1);
  const auto runs = sweep_layers(w.data, InitMode::kPrintf, {1, 3}, w.model, w.train);
  const double l1 = runs[0].test.ndcg(10), l3 = runs[1].test.ndcg(10);
  return {l3 > l1, fmt("printf N@10 L1=%.4f L3=%.4f", l1, l3)};
}

// ---------------------------------------------------------------------------
// 8. Two identical CLI runs produce byte-identical reports.

int cli(std::vector<std::string> args, const fs::path& out) {
  args.insert(args.begin(), "revgraph");
  args.push_back("--out");
  args.push_back(out.string());
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (code != 0) std::cerr << e.str();
  return code;
}

bool run_cli_pipeline(const fs::path& out) {
  const std::vector<std::vector<std::string>> stages{
      {"synth", "--users", "300", "--items", "200", "--rate", "0.05"},
      {"compress", "--kind", "all", "--epochs", "5"},
      {"init-users"},
      {"train", "--mode", "printf", "--layers", "3", "--epochs", "30"},
      {"eval", "--mode", "printf", "--layers", "3"},
      {"ablate", "--modes", "printf,no_raum,none,bprmf", "--layers", "3", "--epochs", "30"},
      {"sweep-layers", "--mode", "none", "--layers", "1,2", "--epochs", "30"},
  };
  for (const auto& s : stages) {
    if (cli(s, out) != 0) return false;
  }
  return true;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "revgraph_acceptance_determinism";
  fs::remove_all(root);
  const fs::path a = root / "a", b = root / "b";
  if (!run_cli_pipeline(a) || !run_cli_pipeline(b)) return {false, "pipeline failed"};
  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ++files;
    if (read_file(entry.path()) != read_file(b / rel)) {
      first_diff += (differing++ ? "," : "") + rel.string();
    }
  }
  return {files > 0 && differing == 0,
          fmt("files_compared=%zu differing=%zu%s%s", files, differing, differing ? " differ=" : "",
              first_diff.c_str())};
}

// ---------------------------------------------------------------------------
// 9. ITC on a planted rotation with noise 0.1, batch 32.

Verdict itc_sanity() {
  std::mt19937_64 rng(909);
  const std::size_t n = 20000, d = 32;
  const DenseMatrix img = random_matrix(n, d, rng);
  // Random orthogonal map from Gram-Schmidt on a Gaussian matrix.
  DenseMatrix q = random_matrix(d, d, rng);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dp = 0.0;
      for (std::size_t r = 0; r < d; ++r) dp += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < d; ++r) q(r, c) -= dp * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += q(r, c) * q(r, c);
    for (std::size_t r = 0; r < d; ++r) q(r, c) /= std::sqrt(norm);
  }
  DenseMatrix txt = naive_matmul(img, q);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (double& v : txt.values()) v += noise(rng);

  ItcTrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 30;
  cfg.seed = 1;
  ItcHead head = make_itc_head(d, d, 32, 2);
  const ItcTrainResult r = train_itc(head, img, txt, cfg);
  const double top1 = retrieval_top1(head, img, txt, r.heldout_rows);

  // Control: same rows with the pairing destroyed.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const DenseMatrix shuffled = gather_rows(txt, perm);
  ItcHead control = make_itc_head(d, d, 32, 2);
  const ItcTrainResult rc = train_itc(control, img, shuffled, cfg);
  const double ln_b = std::log(32.0);
  const double control_dev = std::abs(rc.heldout_loss_final - ln_b) / ln_b;
  return {top1 > 0.9 && control_dev < 0.05,
          fmt("heldout_top1=%.4f (want >0.9) control_heldout_loss=%.4f lnB=%.4f rel_dev=%.4f (want <0.05)",
              top1, rc.heldout_loss_final, ln_b, control_dev)};
}

struct Criterion {
  Verdict (*run)();
  double budget_seconds;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number(s) 1-9; default all")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::map<int, Criterion> criteria{
      {1, {gradients, 120}},       {2, {propagation, 30}},         {3, {raum_convexity, 10}},
      {4, {metrics, 60}},          {5, {planted_ordering, 900}},   {6, {review_noise_control, 600}},
      {7, {layer_sweep, 1200}},    {8, {determinism, 600}},        {9, {itc_sanity, 300}},
  };
  bool all_pass = true;
  for (int id : selected) {
    const Criterion& c = criteria.at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && secs <= c.budget_seconds;
    all_pass = all_pass && pass;
    std::printf("criterion %d: %s %s runtime=%.1fs (limit %.0fs)\n", id, pass ? "PASS" : "FAIL",
                v.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
