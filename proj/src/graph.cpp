#include "revgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace revgraph {

BipartiteGraph::BipartiteGraph(std::size_t num_users, std::size_t num_items,
                               const std::vector<Interaction>& edges) {
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(edges.size());
  for (const Interaction& e : edges) {
    if (e.user >= num_users || e.item >= num_items) {
      throw std::out_of_range("BipartiteGraph: edge index out of range");
    }
    pairs.emplace_back(e.user, e.item);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  user_offsets_.assign(num_users + 1, 0);
  item_offsets_.assign(num_items + 1, 0);
  for (auto [u, i] : pairs) {
    ++user_offsets_[u + 1];
    ++item_offsets_[i + 1];
  }
  for (std::size_t u = 0; u < num_users; ++u) user_offsets_[u + 1] += user_offsets_[u];
  for (std::size_t i = 0; i < num_items; ++i) item_offsets_[i + 1] += item_offsets_[i];

  user_nbrs_.resize(pairs.size());
  item_nbrs_.resize(pairs.size());
  std::vector<std::size_t> ucur(user_offsets_.begin(), user_offsets_.end() - 1);
  std::vector<std::size_t> icur(item_offsets_.begin(), item_offsets_.end() - 1);
  // pairs are sorted by (user, item), so both CSR views come out sorted.
  for (auto [u, i] : pairs) {
    user_nbrs_[ucur[u]++] = i;
    item_nbrs_[icur[i]++] = u;
  }

  user_w_.resize(pairs.size());
  item_w_.resize(pairs.size());
  for (Index u = 0; u < num_users; ++u) {
    for (std::size_t e = user_offsets_[u]; e < user_offsets_[u + 1]; ++e) {
      const Index i = user_nbrs_[e];
      user_w_[e] = 1.0 / std::sqrt(static_cast<double>(user_degree(u) * item_degree(i)));
    }
  }
  for (Index i = 0; i < num_items; ++i) {
    for (std::size_t e = item_offsets_[i]; e < item_offsets_[i + 1]; ++e) {
      const Index u = item_nbrs_[e];
      item_w_[e] = 1.0 / std::sqrt(static_cast<double>(user_degree(u) * item_degree(i)));
    }
  }
}

bool BipartiteGraph::has_edge(Index u, Index i) const {
  auto items = items_of(u);
  return std::binary_search(items.begin(), items.end(), i);
}

}  // namespace revgraph
