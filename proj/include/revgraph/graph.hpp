#pragma once

#include <span>
#include <vector>

#include "revgraph/dataset.hpp"

namespace revgraph {

// CSR adjacency of the user-item training graph, held in both directions.
// Neighbor lists are sorted ascending.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  BipartiteGraph(std::size_t num_users, std::size_t num_items,
                 const std::vector<Interaction>& edges);

  std::size_t num_users() const { return user_offsets_.empty() ? 0 : user_offsets_.size() - 1; }
  std::size_t num_items() const { return item_offsets_.empty() ? 0 : item_offsets_.size() - 1; }
  std::size_t num_edges() const { return user_nbrs_.size(); }

  std::span<const Index> items_of(Index u) const {
    return {user_nbrs_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const Index> users_of(Index i) const {
    return {item_nbrs_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }
  std::size_t user_degree(Index u) const { return user_offsets_[u + 1] - user_offsets_[u]; }
  std::size_t item_degree(Index i) const { return item_offsets_[i + 1] - item_offsets_[i]; }

  bool has_edge(Index u, Index i) const;

  // 1 / sqrt(|N_u| |N_i|) for every edge, aligned with the user-side CSR.
  std::span<const double> user_side_weights() const { return user_w_; }
  std::span<const double> item_side_weights() const { return item_w_; }

 private:
  std::vector<std::size_t> user_offsets_;
  std::vector<Index> user_nbrs_;
  std::vector<double> user_w_;
  std::vector<std::size_t> item_offsets_;
  std::vector<Index> item_nbrs_;
  std::vector<double> item_w_;
};

}  // namespace revgraph
