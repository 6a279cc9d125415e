#pragma once

// Full-ranking top-N evaluation. Candidates are all items minus the user's
// train items (and val items when scoring the test partition); ties are
// broken by ascending item index.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/epim.hpp"

namespace revgraph {

// exclude must be sorted ascending.
std::vector<Index> rank_items(std::span<const double> scores, std::span<const Index> exclude);
// The first k entries of rank_items, computed with a partial sort.
std::vector<Index> top_k_items(std::span<const double> scores, std::span<const Index> exclude,
                               std::size_t k);

// nullopt when relevant is empty (the user is skipped).
std::optional<double> recall_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                  std::size_t k);
// DCG over hits in the top k with gain 1/log2(rank+1), divided by the ideal
// DCG over min(k, |relevant|) ranks.
std::optional<double> ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                std::size_t k);

enum class EvalTarget { kValidation, kTest };

struct UserMetrics {
  std::vector<double> recall;  // aligned with EvalReport::ks
  std::vector<double> ndcg;
};

struct EvalReport {
  std::vector<std::size_t> ks{5, 10};
  std::map<Index, UserMetrics> per_user;
  std::vector<double> mean_recall;
  std::vector<double> mean_ndcg;
  std::size_t skipped_users = 0;
  std::string fingerprint;
  std::string data_fingerprint;

  double recall(std::size_t k) const;
  double ndcg(std::size_t k) const;
};

EvalReport evaluate(const PropagatedEmbeddings& embs, const SplitDataset& split, EvalTarget target,
                    std::vector<std::size_t> ks = {5, 10});

// Header "user<TAB>R@5<TAB>N@5<TAB>R@10<TAB>N@10" (one pair per K), preceded
// by a "# fingerprint=" comment line when the report carries one.
void write_report_tsv(const std::filesystem::path& path, const EvalReport& report,
                      const Catalog* catalog = nullptr);
void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       const std::string& config_json = {});

enum class MetricKind { kRecall, kNdcg };

struct MetricSelector {
  MetricKind kind = MetricKind::kNdcg;
  std::size_t k = 5;
};

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;
  bool zero_variance = false;
};

// Two-sided paired t-test over users present in both reports.
TTestResult paired_t_test(const EvalReport& a, const EvalReport& b, MetricSelector metric);
// Two-sided p-value of Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df);

}  // namespace revgraph
