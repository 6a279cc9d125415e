#include "revgraph/raum.hpp"

#include <algorithm>
#include <cmath>

namespace revgraph {

ItemReviewMeans item_review_means(const std::vector<Interaction>& train,
                                  const DenseMatrix& review_codes, std::size_t num_items) {
  ItemReviewMeans out;
  out.matrix = DenseMatrix(num_items, review_codes.cols());
  out.counts.assign(num_items, 0);
  for (const Interaction& it : train) {
    if (!it.review_row) continue;
    if (it.item >= num_items) throw std::out_of_range("item_review_means: item out of range");
    if (*it.review_row >= review_codes.rows()) {
      throw std::out_of_range("item_review_means: review row out of range");
    }
    auto dst = out.matrix.row(it.item);
    auto src = review_codes.row(*it.review_row);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    ++out.counts[it.item];
  }
  for (std::size_t i = 0; i < num_items; ++i) {
    if (out.counts[i] == 0) continue;
    const double inv = 1.0 / static_cast<double>(out.counts[i]);
    for (double& v : out.matrix.row(i)) v *= inv;
  }
  return out;
}

CrossRelationMatrix build_cross_relation(const ItemReviewMeans& means, const DenseMatrix& items) {
  if (means.matrix.rows() != items.rows()) {
    throw ShapeError("build_cross_relation: " + std::to_string(means.matrix.rows()) +
                     " review-mean rows vs " + std::to_string(items.rows()) + " item rows");
  }
  return {matmul_tn(means.matrix, items)};
}

DenseMatrix dimension_attention(const CrossRelationMatrix& d, const DenseMatrix& reviews) {
  if (reviews.cols() != d.matrix.rows()) {
    throw ShapeError("dimension_attention: review dim " + std::to_string(reviews.cols()) +
                     " != D rows " + std::to_string(d.matrix.rows()));
  }
  DenseMatrix logits = matmul(reviews, d.matrix);  // n x d_i
  const std::size_t n = logits.rows();
  for (std::size_t k = 0; k < logits.cols(); ++k) {
    double mx = -INFINITY;
    for (std::size_t r = 0; r < n; ++r) mx = std::max(mx, logits(r, k));
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      logits(r, k) = std::exp(logits(r, k) - mx);
      sum += logits(r, k);
    }
    for (std::size_t r = 0; r < n; ++r) logits(r, k) /= sum;
  }
  return logits;
}

UserInitEmbeddings init_users(const CrossRelationMatrix& d, const DenseMatrix& items,
                              const std::vector<Interaction>& train,
                              const DenseMatrix& review_codes, std::size_t num_users) {
  if (d.matrix.cols() != items.cols()) {
    throw ShapeError("init_users: D has " + std::to_string(d.matrix.cols()) +
                     " columns but item embeddings have " + std::to_string(items.cols()));
  }
  if (d.matrix.rows() != review_codes.cols()) {
    throw ShapeError("init_users: D rows do not match review code dim");
  }
  std::vector<std::vector<const Interaction*>> per_user(num_users);
  for (const Interaction& it : train) {
    if (it.user >= num_users || it.item >= items.rows()) {
      throw std::out_of_range("init_users: interaction out of range");
    }
    per_user[it.user].push_back(&it);
  }

  const std::size_t dim = items.cols();
  UserInitEmbeddings out;
  out.matrix = DenseMatrix(num_users, dim);
  out.source.assign(num_users, UserInitSource::kEmpty);
  for (std::size_t u = 0; u < num_users; ++u) {
    const auto& list = per_user[u];
    if (list.empty()) continue;
    std::vector<const Interaction*> reviewed;
    for (const Interaction* it : list) {
      if (it->review_row) reviewed.push_back(it);
    }
    auto dst = out.matrix.row(u);
    if (reviewed.empty()) {
      for (const Interaction* it : list) {
        auto src = items.row(it->item);
        for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
      }
      for (double& v : dst) v /= static_cast<double>(list.size());
      out.source[u] = UserInitSource::kMeanFallback;
      continue;
    }
    DenseMatrix reviews(reviewed.size(), review_codes.cols());
    for (std::size_t r = 0; r < reviewed.size(); ++r) {
      if (*reviewed[r]->review_row >= review_codes.rows()) {
        throw std::out_of_range("init_users: review row out of range");
      }
      auto src = review_codes.row(*reviewed[r]->review_row);
      std::copy(src.begin(), src.end(), reviews.row(r).begin());
    }
    const DenseMatrix w = dimension_attention(d, reviews);
    for (std::size_t r = 0; r < reviewed.size(); ++r) {
      auto item = items.row(reviewed[r]->item);
      auto wr = w.row(r);
      for (std::size_t k = 0; k < dim; ++k) dst[k] += wr[k] * item[k];
    }
    out.source[u] = UserInitSource::kAttention;
  }
  return out;
}

}  // namespace revgraph
