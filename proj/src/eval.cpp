#include "revgraph/eval.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace revgraph {

namespace {

struct ByScore {
  std::span<const double> scores;
  bool operator()(Index a, Index b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

std::vector<Index> candidates(std::size_t n, std::span<const Index> exclude) {
  std::vector<Index> out;
  out.reserve(n);
  auto ex = exclude.begin();
  for (Index i = 0; i < n; ++i) {
    while (ex != exclude.end() && *ex < i) ++ex;
    if (ex != exclude.end() && *ex == i) continue;
    out.push_back(i);
  }
  return out;
}

bool contains(std::span<const Index> sorted, Index x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace

std::vector<Index> rank_items(std::span<const double> scores, std::span<const Index> exclude) {
  std::vector<Index> out = candidates(scores.size(), exclude);
  std::sort(out.begin(), out.end(), ByScore{scores});
  return out;
}

std::vector<Index> top_k_items(std::span<const double> scores, std::span<const Index> exclude,
                               std::size_t k) {
  std::vector<Index> out = candidates(scores.size(), exclude);
  k = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(),
                    ByScore{scores});
  out.resize(k);
  return out;
}

std::optional<double> recall_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                  std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be >= 1");
  if (relevant.empty()) return std::nullopt;
  std::vector<Index> rel(relevant.begin(), relevant.end());
  std::sort(rel.begin(), rel.end());
  rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (contains(rel, ranked[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

std::optional<double> ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  if (relevant.empty()) return std::nullopt;
  std::vector<Index> rel(relevant.begin(), relevant.end());
  std::sort(rel.begin(), rel.end());
  rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (contains(rel, ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, rel.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

double EvalReport::recall(std::size_t k) const {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw std::out_of_range("report has no K=" + std::to_string(k));
  return mean_recall[static_cast<std::size_t>(it - ks.begin())];
}

double EvalReport::ndcg(std::size_t k) const {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw std::out_of_range("report has no K=" + std::to_string(k));
  return mean_ndcg[static_cast<std::size_t>(it - ks.begin())];
}

EvalReport evaluate(const PropagatedEmbeddings& embs, const SplitDataset& split, EvalTarget target,
                    std::vector<std::size_t> ks) {
  if (ks.empty()) throw std::invalid_argument("evaluate: no K values");
  const std::size_t nu = split.num_users;
  const std::size_t ni = split.num_items;
  require_shape(embs.users, nu, embs.users.cols(), "evaluate users");
  require_shape(embs.items, ni, embs.users.cols(), "evaluate items");

  std::vector<std::vector<Index>> exclude(nu), relevant(nu);
  for (const Interaction& it : split.train) exclude[it.user].push_back(it.item);
  const auto& rel_list = target == EvalTarget::kTest ? split.test : split.val;
  if (target == EvalTarget::kTest) {
    for (const Interaction& it : split.val) exclude[it.user].push_back(it.item);
  }
  for (const Interaction& it : rel_list) relevant[it.user].push_back(it.item);
  for (auto& e : exclude) {
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
  }

  EvalReport report;
  report.ks = ks;
  report.mean_recall.assign(ks.size(), 0.0);
  report.mean_ndcg.assign(ks.size(), 0.0);
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < nu; start += kChunk) {
    const std::size_t n = std::min(kChunk, nu - start);
    DenseMatrix chunk(n, embs.users.cols(),
                      std::vector<double>(embs.users.row(start).begin(),
                                          embs.users.row(start).begin() + n * embs.users.cols()));
    const DenseMatrix scores = matmul_nt(chunk, embs.items);
    for (std::size_t r = 0; r < n; ++r) {
      const auto u = static_cast<Index>(start + r);
      if (relevant[u].empty()) {
        ++report.skipped_users;
        continue;
      }
      const std::vector<Index> top = top_k_items(scores.row(r), exclude[u], kmax);
      UserMetrics m;
      for (std::size_t k : ks) {
        m.recall.push_back(*recall_at_k(top, relevant[u], k));
        m.ndcg.push_back(*ndcg_at_k(top, relevant[u], k));
      }
      report.per_user.emplace(u, std::move(m));
    }
  }
  // Ordered reduction over users for reproducible sums.
  for (const auto& [u, m] : report.per_user) {
    for (std::size_t j = 0; j < ks.size(); ++j) {
      report.mean_recall[j] += m.recall[j];
      report.mean_ndcg[j] += m.ndcg[j];
    }
  }
  if (!report.per_user.empty()) {
    const double n = static_cast<double>(report.per_user.size());
    for (std::size_t j = 0; j < ks.size(); ++j) {
      report.mean_recall[j] /= n;
      report.mean_ndcg[j] /= n;
    }
  }
  return report;
}

void write_report_tsv(const std::filesystem::path& path, const EvalReport& report,
                      const Catalog* catalog) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!report.fingerprint.empty()) out << "# fingerprint=" << report.fingerprint << '\n';
  out << "user";
  for (std::size_t k : report.ks) out << "\tR@" << k << "\tN@" << k;
  out << '\n' << std::fixed << std::setprecision(6);
  for (const auto& [u, m] : report.per_user) {
    if (catalog != nullptr) {
      out << catalog->users.id(u);
    } else {
      out << u;
    }
    for (std::size_t j = 0; j < report.ks.size(); ++j) out << '\t' << m.recall[j] << '\t' << m.ndcg[j];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       const std::string& config_json) {
  nlohmann::ordered_json j;
  j["fingerprint"] = report.fingerprint;
  j["data_fingerprint"] = report.data_fingerprint;
  j["users_evaluated"] = report.per_user.size();
  j["users_skipped"] = report.skipped_users;
  nlohmann::ordered_json metrics;
  for (std::size_t idx = 0; idx < report.ks.size(); ++idx) {
    metrics["R@" + std::to_string(report.ks[idx])] = report.mean_recall[idx];
    metrics["N@" + std::to_string(report.ks[idx])] = report.mean_ndcg[idx];
  }
  j["metrics"] = metrics;
  if (!config_json.empty()) j["config"] = nlohmann::ordered_json::parse(config_json);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TTestResult paired_t_test(const EvalReport& a, const EvalReport& b, MetricSelector metric) {
  auto col = [&](const EvalReport& r) {
    auto it = std::find(r.ks.begin(), r.ks.end(), metric.k);
    if (it == r.ks.end()) throw std::out_of_range("paired_t_test: K not in report");
    return static_cast<std::size_t>(it - r.ks.begin());
  };
  const std::size_t ca = col(a), cb = col(b);
  std::vector<double> diffs;
  for (const auto& [u, ma] : a.per_user) {
    auto it = b.per_user.find(u);
    if (it == b.per_user.end()) continue;
    const auto& mb = it->second;
    const double va = metric.kind == MetricKind::kRecall ? ma.recall[ca] : ma.ndcg[ca];
    const double vb = metric.kind == MetricKind::kRecall ? mb.recall[cb] : mb.ndcg[cb];
    diffs.push_back(va - vb);
  }
  if (diffs.size() < 2) throw std::invalid_argument("paired_t_test: fewer than 2 common users");
  TTestResult res;
  res.n = diffs.size();
  const double n = static_cast<double>(diffs.size());
  res.mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - res.mean_diff) * (d - res.mean_diff);
  const double var = ss / (n - 1.0);
  // Differences equal to rounding noise count as constant.
  const double scale = std::max(1.0, std::abs(res.mean_diff));
  if (var <= 1e-24 * scale * scale) {
    res.zero_variance = true;
    res.t = res.mean_diff == 0.0 ? 0.0 : std::copysign(INFINITY, res.mean_diff);
    res.p_value = res.mean_diff == 0.0 ? 1.0 : 0.0;
    return res;
  }
  res.t = res.mean_diff / std::sqrt(var / n);
  res.p_value = t_two_sided_p(res.t, n - 1.0);
  return res;
}

}  // namespace revgraph
