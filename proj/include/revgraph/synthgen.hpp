#pragma once

// Planted-topic synthetic worlds. Users and items carry unit-norm topic
// vectors; interactions are sampled without replacement with probability
// proportional to exp(<u, i> / temperature). Raw image and text embeddings
// are two independent noisy linear lifts of the item topic, and the review
// embedding of (u, i) is a noisy lift of u (elementwise) i.

#include <filesystem>
#include <string>
#include <vector>

#include "revgraph/dataset.hpp"
#include "revgraph/epim.hpp"

namespace revgraph {

struct PlantedWorldConfig {
  std::size_t num_users = 1000;
  std::size_t num_items = 600;
  std::size_t num_topics = 8;
  std::size_t raw_dim = 768;
  // Expected fraction of the user x item matrix that is observed.
  double interaction_rate = 0.025;
  // Every user draws at least this many items (capped by the expected count).
  std::size_t min_user_interactions = 5;
  // Softmax temperature of the interaction distribution.
  double temperature = 0.1;
  // Std of the isotropic perturbation added to the one-hot topic before
  // normalization; 0 gives pure block structure.
  double topic_spread = 0.5;
  double sigma_content = 0.1;
  double sigma_review = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
};

struct PlantedWorld {
  PlantedWorldConfig config;
  // Users and items are numbered in order of first appearance in interactions.
  DenseMatrix user_topics;  // |U| x topics, unit rows
  DenseMatrix item_topics;  // |I| x topics, unit rows
  std::vector<std::size_t> user_block;  // primary topic per user
  std::vector<std::size_t> item_block;
  Catalog catalog;
  std::vector<Interaction> interactions;  // review_row == position in reviews
  EmbeddingTable image;
  EmbeddingTable text;
  EmbeddingTable reviews;

  // Entities that received at least one interaction; the rest are dropped
  // and may make these smaller than the configured counts.
  std::size_t num_users() const { return user_topics.rows(); }
  std::size_t num_items() const { return item_topics.rows(); }
  double density() const;
  double affinity(Index u, Index i) const;
};

PlantedWorld generate(const PlantedWorldConfig& config);

// Items sorted by true affinity, descending; ties by ascending index.
std::vector<Index> oracle_rank(const PlantedWorld& world, Index user);
// Embeddings whose inner products are the true affinities, for scoring the
// oracle through the regular evaluation harness.
PropagatedEmbeddings oracle_embeddings(const PlantedWorld& world);

struct WorldFiles {
  std::filesystem::path interactions;
  std::filesystem::path image;
  std::filesystem::path text;
  std::filesystem::path reviews;
  std::filesystem::path ground_truth;
  std::filesystem::path summary;
};

WorldFiles world_files(const std::filesystem::path& dir);
// Writes interactions.tsv, image.emb, text.emb, review.emb,
// ground_truth.tsv (user, item, affinity) and world.json.
WorldFiles write_world(const PlantedWorld& world, const std::filesystem::path& dir,
                       const std::string& fingerprint = {});

}  // namespace revgraph
