#pragma once

// Review-aware user initialization.
//
// For every item, the mean compressed review over train interactions gives
// R_bar (|I| x d_r). The cross-relation matrix D = R_bar^T E0 (d_r x d_i)
// maps the review space onto item-embedding dimensions. A user's layer-0
// embedding is then, per item-embedding dimension k, a softmax over the
// user's reviewed items of (review_code * D)[k] applied to the items' k-th
// coordinates.

#include <filesystem>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/numerics.hpp"

namespace revgraph {

struct ItemReviewMeans {
  DenseMatrix matrix;              // |I| x d_r
  std::vector<std::size_t> counts; // reviews per item; 0 means a zero row
};

struct CrossRelationMatrix {
  DenseMatrix matrix;  // d_r x d_i
};

enum class UserInitSource : std::uint8_t {
  kAttention,     // weighted by reviewed train interactions
  kMeanFallback,  // no reviewed train interactions: plain mean of items
  kEmpty,         // no train interactions: zero vector
};

struct UserInitEmbeddings {
  DenseMatrix matrix;  // |U| x d_i
  std::vector<UserInitSource> source;
};

// Uses train interactions only; interactions without a review are skipped.
ItemReviewMeans item_review_means(const std::vector<Interaction>& train,
                                  const DenseMatrix& review_codes, std::size_t num_items);

CrossRelationMatrix build_cross_relation(const ItemReviewMeans& means, const DenseMatrix& items);

// Attention weights for one user: row n is the weight vector of the user's
// n-th reviewed item; each column sums to one. reviews is n x d_r.
DenseMatrix dimension_attention(const CrossRelationMatrix& d, const DenseMatrix& reviews);

UserInitEmbeddings init_users(const CrossRelationMatrix& d, const DenseMatrix& items,
                              const std::vector<Interaction>& train,
                              const DenseMatrix& review_codes, std::size_t num_users);

struct CoclusterResult {
  std::vector<std::size_t> row_labels;
  std::vector<std::size_t> col_labels;
  std::size_t clusters = 1;
  bool degenerate = false;  // zero or rank-deficient input: everything in cluster 0
};

// Spectral co-clustering of |m| (Dhillon's bipartite normalization, SVD,
// k-means on the stacked scaled singular vectors).
CoclusterResult spectral_cocluster(const DenseMatrix& m, std::size_t k, std::uint64_t seed);

// Lloyd's k-means with k-means++ seeding and restarts; returns labels.
std::vector<std::size_t> kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                                std::size_t restarts = 10, std::size_t max_iter = 300);

// Writes the matrix as TSV to path and the co-cluster assignment to
// <path>.clusters.tsv (axis<TAB>index<TAB>cluster). Returns the clustering.
CoclusterResult export_cross_relation(const CrossRelationMatrix& d,
                                      const std::filesystem::path& path, std::size_t k,
                                      std::uint64_t seed, const std::string& fingerprint = {});

}  // namespace revgraph
