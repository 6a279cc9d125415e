#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "revgraph/raum.hpp"
#include "support.hpp"

using namespace revgraph;
using namespace testing_support;

TEST(ReviewMeans, AveragesReviewedTrainRowsPerItem) {
  const DenseMatrix reviews{{1, 0}, {3, 2}, {5, 5}, {7, 7}};
  const std::vector<Interaction> train{{0, 0, 0}, {1, 0, 1}, {1, 1, std::nullopt}, {2, 2, 2}};
  const ItemReviewMeans m = item_review_means(train, reviews, 4);
  EXPECT_EQ(m.matrix, (DenseMatrix{{2, 1}, {0, 0}, {5, 5}, {0, 0}}));
  EXPECT_EQ(m.counts, (std::vector<std::size_t>{2, 0, 1, 0}));
  EXPECT_THROW(item_review_means({{0, 0, 9}}, reviews, 4), std::out_of_range);
}

TEST(CrossRelation, IsMeansTransposeTimesItems) {
  std::mt19937_64 rng(3);
  ItemReviewMeans m;
  m.matrix = random_matrix(6, 3, rng);
  const DenseMatrix items = random_matrix(6, 4, rng);
  const CrossRelationMatrix d = build_cross_relation(m, items);
  EXPECT_LT(max_abs_diff(d.matrix, naive_matmul(m.matrix.transposed(), items)), 1e-12);
  EXPECT_THROW(build_cross_relation(m, DenseMatrix(5, 4)), ShapeError);
}

TEST(DimensionAttention, MatchesPerDimensionSoftmaxOracle) {
  std::mt19937_64 rng(4);
  CrossRelationMatrix d{random_matrix(3, 5, rng)};
  const DenseMatrix reviews = random_matrix(4, 3, rng);
  const DenseMatrix w = dimension_attention(d, reviews);
  const DenseMatrix logits = naive_matmul(reviews, d.matrix);
  for (std::size_t k = 0; k < 5; ++k) {
    double z = 0.0;
    for (std::size_t r = 0; r < 4; ++r) z += std::exp(logits(r, k));
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(w(r, k), std::exp(logits(r, k)) / z, 1e-12);
  }
}

TEST(DimensionAttention, ExtremeLogitsStayFinite) {
  CrossRelationMatrix d{DenseMatrix{{1000.0, -1000.0}}};
  const DenseMatrix w = dimension_attention(d, DenseMatrix{{1.0}, {2.0}});
  EXPECT_TRUE(w.all_finite());
  EXPECT_NEAR(w(1, 0), 1.0, 1e-12);
  EXPECT_NEAR(w(0, 1), 1.0, 1e-12);
}

TEST(InitUsers, WeightedSumOfInteractedItemsPerDimension) {
  std::mt19937_64 rng(5);
  const std::size_t nu = 3, ni = 5;
  const DenseMatrix items = random_matrix(ni, 4, rng);
  const DenseMatrix reviews = random_matrix(6, 2, rng);
  // User 0: three reviewed items. User 1: no reviews. User 2: nothing.
  const std::vector<Interaction> train{{0, 1, 0}, {0, 3, 1}, {0, 4, 2},
                                       {1, 0, std::nullopt}, {1, 2, std::nullopt}};
  CrossRelationMatrix d{random_matrix(2, 4, rng)};
  const UserInitEmbeddings u = init_users(d, items, train, reviews, nu);
  EXPECT_EQ(u.source[0], UserInitSource::kAttention);
  EXPECT_EQ(u.source[1], UserInitSource::kMeanFallback);
  EXPECT_EQ(u.source[2], UserInitSource::kEmpty);

  const std::vector<std::pair<std::size_t, std::size_t>> mine{{1, 0}, {3, 1}, {4, 2}};
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> logit;
    for (auto [item, row] : mine) {
      double s = 0.0;
      for (std::size_t c = 0; c < 2; ++c) s += reviews(row, c) * d.matrix(c, k);
      logit.push_back(s);
    }
    double z = 0.0;
    for (double l : logit) z += std::exp(l);
    double expect = 0.0;
    for (std::size_t r = 0; r < 3; ++r) expect += std::exp(logit[r]) / z * items(mine[r].first, k);
    EXPECT_NEAR(u.matrix(0, k), expect, 1e-12);
    EXPECT_NEAR(u.matrix(1, k), 0.5 * (items(0, k) + items(2, k)), 1e-12);
    EXPECT_EQ(u.matrix(2, k), 0.0);
  }
}

TEST(InitUsers, CoordinatesLieInPerDimensionHull) {
  std::mt19937_64 rng(6);
  const std::size_t nu = 60, ni = 25;
  const auto edges = random_edges(nu, ni, 0.2, rng);
  const DenseMatrix items = random_matrix(ni, 6, rng, 2.0);
  const DenseMatrix reviews = random_matrix(edges.size(), 4, rng, 3.0);
  const ItemReviewMeans means = item_review_means(edges, reviews, ni);
  const CrossRelationMatrix d = build_cross_relation(means, items);
  const UserInitEmbeddings u = init_users(d, items, edges, reviews, nu);
  std::map<Index, std::vector<Index>> mine;
  for (const auto& e : edges) mine[e.user].push_back(e.item);
  for (auto& [user, list] : mine) {
    for (std::size_t k = 0; k < 6; ++k) {
      double lo = INFINITY, hi = -INFINITY;
      for (Index i : list) {
        lo = std::min(lo, items(i, k));
        hi = std::max(hi, items(i, k));
      }
      EXPECT_GE(u.matrix(user, k), lo - 1e-12);
      EXPECT_LE(u.matrix(user, k), hi + 1e-12);
    }
  }
}

TEST(InitUsers, ShapeChecks) {
  CrossRelationMatrix d{DenseMatrix(2, 3)};
  EXPECT_THROW(init_users(d, DenseMatrix(4, 2), {}, DenseMatrix(1, 2), 1), ShapeError);
  EXPECT_THROW(init_users(d, DenseMatrix(4, 3), {}, DenseMatrix(1, 5), 1), ShapeError);
}

TEST(KMeans, SeparatesWellSeparatedBlobs) {
  std::mt19937_64 rng(7);
  DenseMatrix pts(60, 2);
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t r = 0; r < 60; ++r) {
    pts(r, 0) = (r / 20) * 10.0 + g(rng);
    pts(r, 1) = g(rng);
  }
  const auto labels = kmeans(pts, 3, 1);
  for (std::size_t r = 0; r < 60; ++r) EXPECT_EQ(labels[r], labels[(r / 20) * 20]);
  std::set<std::size_t> distinct(labels.begin(), labels.end());
  EXPECT_EQ(distinct.size(), 3u);
  EXPECT_EQ(labels, kmeans(pts, 3, 1));
}

TEST(Cocluster, RecoversBlockDiagonalStructure) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> small(0.0, 0.01);
  DenseMatrix m(12, 9);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 9; ++j) m(i, j) = (i / 4 == j / 3) ? 1.0 + small(rng) : small(rng);
  const CoclusterResult cc = spectral_cocluster(m, 3, 0);
  EXPECT_FALSE(cc.degenerate);
  EXPECT_EQ(cc.clusters, 3u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(cc.row_labels[i], cc.row_labels[(i / 4) * 4]);
  for (std::size_t j = 0; j < 9; ++j) {
    EXPECT_EQ(cc.col_labels[j], cc.col_labels[(j / 3) * 3]);
    // Column block b pairs with row block b.
    EXPECT_EQ(cc.col_labels[j], cc.row_labels[(j / 3) * 4]);
  }
}

TEST(Cocluster, ZeroMatrixIsDegenerate) {
  const CoclusterResult cc = spectral_cocluster(DenseMatrix(3, 3), 2, 0);
  EXPECT_TRUE(cc.degenerate);
  EXPECT_EQ(cc.row_labels, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Cocluster, ExportWritesMatrixAndAssignments) {
  const auto dir = scratch_dir("cocluster");
  CrossRelationMatrix d{DenseMatrix{{1, 0}, {0, 1}, {1, 0}}};
  export_cross_relation(d, dir / "d.tsv", 2, 0, "fp1");
  const std::string mat = read_file(dir / "d.tsv");
  EXPECT_EQ(mat, "# fingerprint=fp1\n1\t0\n0\t1\n1\t0\n");
  const std::string cl = read_file(dir / "d.tsv.clusters.tsv");
  EXPECT_EQ(cl.rfind("# fingerprint=fp1\naxis\tindex\tcluster\nrow\t0\t", 0), 0u);
  EXPECT_NE(cl.find("col\t1\t"), std::string::npos);
}
