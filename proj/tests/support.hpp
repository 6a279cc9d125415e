#pragma once

// Test-only oracles. Nothing here calls into the code under test except for
// the plain DenseMatrix container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/numerics.hpp"

namespace testing_support {

using revgraph::DenseMatrix;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                 double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  DenseMatrix m(r, c);
  for (double& v : m.values()) v = g(rng);
  return m;
}

inline DenseMatrix naive_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

// Relative error used by every gradient check: |a - n| / max(1e-6, |a| + |n|)
// per coordinate, maximised.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double denom = std::max(1e-6, std::abs(analytic[k]) + std::abs(numeric[k]));
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

// Central differences of f with respect to every entry of params.
inline std::vector<double> numeric_gradient(std::span<double> params,
                                            const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = f();
    params[k] = saved - h;
    const double down = f();
    params[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// Dense symmetric-normalized adjacency of the (|U|+|I|) bipartite graph.
inline DenseMatrix dense_normalized_adjacency(std::size_t nu, std::size_t ni,
                                              const std::vector<revgraph::Interaction>& edges) {
  const std::size_t n = nu + ni;
  DenseMatrix a(n, n);
  for (const auto& e : edges) {
    a(e.user, nu + e.item) = 1.0;
    a(nu + e.item, e.user) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) a(i, j) /= std::sqrt(deg[i] * deg[j]);
    }
  return a;
}

// mean_{l=0..L} A^l E, with E the stacked [users; items].
inline DenseMatrix dense_propagation(const DenseMatrix& users, const DenseMatrix& items,
                                     const DenseMatrix& adj, std::size_t layers) {
  const std::size_t nu = users.rows(), d = users.cols();
  DenseMatrix e(nu + items.rows(), d);
  for (std::size_t r = 0; r < nu; ++r)
    for (std::size_t c = 0; c < d; ++c) e(r, c) = users(r, c);
  for (std::size_t r = 0; r < items.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) e(nu + r, c) = items(r, c);
  DenseMatrix sum = e, cur = e;
  for (std::size_t l = 1; l <= layers; ++l) {
    cur = naive_matmul(adj, cur);
    for (std::size_t k = 0; k < sum.size(); ++k) sum.data()[k] += cur.data()[k];
  }
  for (double& v : sum.values()) v /= static_cast<double>(layers + 1);
  return sum;
}

// Random bipartite edge list, every user with at least one item.
inline std::vector<revgraph::Interaction> random_edges(std::size_t nu, std::size_t ni, double p,
                                                       std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::uniform_int_distribution<std::size_t> pick(0, ni - 1);
  std::vector<revgraph::Interaction> edges;
  for (std::size_t u = 0; u < nu; ++u) {
    bool any = false;
    for (std::size_t i = 0; i < ni; ++i) {
      if (coin(rng)) {
        edges.push_back({static_cast<revgraph::Index>(u), static_cast<revgraph::Index>(i),
                         static_cast<revgraph::Index>(edges.size())});
        any = true;
      }
    }
    if (!any) {
      edges.push_back({static_cast<revgraph::Index>(u), static_cast<revgraph::Index>(pick(rng)),
                       static_cast<revgraph::Index>(edges.size())});
    }
  }
  return edges;
}

// Brute-force metrics straight from the set/DCG definitions.
inline double brute_recall(const std::vector<revgraph::Index>& ranked,
                           const std::vector<revgraph::Index>& relevant, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (std::find(relevant.begin(), relevant.end(), ranked[r]) != relevant.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

inline double brute_ndcg(const std::vector<revgraph::Index>& ranked,
                         const std::vector<revgraph::Index>& relevant, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (std::find(relevant.begin(), relevant.end(), ranked[r]) != relevant.end()) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("revgraph_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (f == nullptr) return {};
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testing_support
