#include "revgraph/synthgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace revgraph {

void PlantedWorldConfig::validate() const {
  if (num_users == 0 || num_items == 0 || num_topics == 0 || raw_dim == 0) {
    throw std::invalid_argument("synth: users, items, topics and raw_dim must be positive");
  }
  if (!(interaction_rate > 0.0 && interaction_rate <= 1.0)) {
    throw std::invalid_argument("synth: interaction_rate must be in (0, 1]");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("synth: temperature must be positive");
  if (!(topic_spread >= 0.0) || !(sigma_content >= 0.0) || !(sigma_review >= 0.0)) {
    throw std::invalid_argument("synth: spread and noise levels must be >= 0");
  }
}

std::string PlantedWorldConfig::to_json() const {
  nlohmann::ordered_json j;
  j["num_users"] = num_users;
  j["num_items"] = num_items;
  j["num_topics"] = num_topics;
  j["raw_dim"] = raw_dim;
  j["interaction_rate"] = interaction_rate;
  j["min_user_interactions"] = min_user_interactions;
  j["temperature"] = temperature;
  j["topic_spread"] = topic_spread;
  j["sigma_content"] = sigma_content;
  j["sigma_review"] = sigma_review;
  j["seed"] = seed;
  return j.dump();
}

double PlantedWorld::density() const {
  return static_cast<double>(interactions.size()) /
         (static_cast<double>(num_users()) * static_cast<double>(num_items()));
}

double PlantedWorld::affinity(Index u, Index i) const {
  return dot(user_topics.row(u), item_topics.row(i));
}

namespace {

DenseMatrix topic_vectors(std::size_t n, std::size_t topics, double spread,
                          std::vector<std::size_t>& block, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  DenseMatrix out(n, topics);
  block.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    // Contiguous, balanced blocks.
    block[r] = r * topics / n;
    auto row = out.row(r);
    for (double& v : row) v = spread * gauss(rng);
    row[block[r]] += 1.0;
    const double norm = std::sqrt(squared_norm(row));
    if (norm == 0.0) {
      row[block[r]] = 1.0;
    } else {
      for (double& v : row) v /= norm;
    }
  }
  return out;
}

DenseMatrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = stddev * gauss(rng);
  return m;
}

// rows of latent (n x topics) lifted to n x raw_dim, plus N(0, sigma^2) noise.
DenseMatrix lift(const DenseMatrix& latent, const DenseMatrix& basis, double sigma, Rng& rng) {
  DenseMatrix out = matmul_nt(latent, basis);
  if (sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, sigma);
    for (double& v : out.values()) v += gauss(rng);
  }
  return out;
}

// Renumbers users and items in order of first appearance in the interaction
// list, dropping entities that were never sampled. Loading the written
// interactions file then reproduces the same dense indices, which keeps the
// embedding table rows aligned.
void relabel_by_first_appearance(PlantedWorld& w) {
  constexpr Index kUnset = static_cast<Index>(-1);
  std::vector<Index> user_map(w.user_topics.rows(), kUnset), item_map(w.item_topics.rows(), kUnset);
  std::vector<std::size_t> user_order, item_order;
  for (Interaction& it : w.interactions) {
    if (user_map[it.user] == kUnset) {
      user_map[it.user] = static_cast<Index>(user_order.size());
      user_order.push_back(it.user);
    }
    if (item_map[it.item] == kUnset) {
      item_map[it.item] = static_cast<Index>(item_order.size());
      item_order.push_back(it.item);
    }
    it.user = user_map[it.user];
    it.item = item_map[it.item];
  }
  auto take = [](const DenseMatrix& m, const std::vector<std::size_t>& rows) {
    DenseMatrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) std::ranges::copy(m.row(rows[r]), out.row(r).begin());
    return out;
  };
  auto take_blocks = [](const std::vector<std::size_t>& b, const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    for (std::size_t r : rows) out.push_back(b[r]);
    return out;
  };
  w.user_topics = take(w.user_topics, user_order);
  w.item_topics = take(w.item_topics, item_order);
  w.user_block = take_blocks(w.user_block, user_order);
  w.item_block = take_blocks(w.item_block, item_order);
}

}  // namespace

PlantedWorld generate(const PlantedWorldConfig& cfg) {
  cfg.validate();
  PlantedWorld w;
  w.config = cfg;
  // Independent streams so changing one noise level leaves the rest intact.
  Rng topic_rng(cfg.seed * 4 + 0);
  Rng interact_rng(cfg.seed * 4 + 1);
  Rng content_rng(cfg.seed * 4 + 2);
  Rng review_rng(cfg.seed * 4 + 3);

  w.user_topics = topic_vectors(cfg.num_users, cfg.num_topics, cfg.topic_spread, w.user_block,
                                topic_rng);
  w.item_topics = topic_vectors(cfg.num_items, cfg.num_topics, cfg.topic_spread, w.item_block,
                                topic_rng);

  // Per-user counts: a floor of min_user_interactions plus a geometric tail,
  // so the expected density equals the rate and activity is long-tailed.
  const double expected = cfg.interaction_rate * static_cast<double>(cfg.num_items);
  const auto floor_n = std::min<std::size_t>(cfg.min_user_interactions,
                                             static_cast<std::size_t>(std::floor(expected)));
  const double tail_mean = expected - static_cast<double>(floor_n);
  std::geometric_distribution<std::size_t> tail(1.0 / (1.0 + tail_mean));
  std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
  std::vector<std::pair<double, Index>> keys(cfg.num_items);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const std::size_t n = std::min(cfg.num_items, floor_n + tail(interact_rng));
    // Gumbel top-k: an exact draw without replacement from softmax(aff / T).
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      const double g = -std::log(-std::log(unif(interact_rng)));
      keys[i] = {w.affinity(static_cast<Index>(u), static_cast<Index>(i)) / cfg.temperature + g,
                 static_cast<Index>(i)};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Index> chosen;
    for (std::size_t k = 0; k < n; ++k) chosen.push_back(keys[k].second);
    std::sort(chosen.begin(), chosen.end());
    for (Index i : chosen) {
      w.interactions.push_back({static_cast<Index>(u), i, static_cast<Index>(w.interactions.size())});
    }
  }
  if (w.interactions.empty()) {
    throw std::runtime_error("synth: generated 0 interactions (users=" +
                             std::to_string(cfg.num_users) + " items=" +
                             std::to_string(cfg.num_items) + " rate=" +
                             std::to_string(cfg.interaction_rate) + ")");
  }
  relabel_by_first_appearance(w);

  char buf[32];
  for (std::size_t u = 0; u < w.num_users(); ++u) {
    std::snprintf(buf, sizeof buf, "u%05zu", u);
    w.catalog.users.intern(buf);
  }
  for (std::size_t i = 0; i < w.num_items(); ++i) {
    std::snprintf(buf, sizeof buf, "i%05zu", i);
    w.catalog.items.intern(buf);
  }

  const DenseMatrix image_basis = gaussian(cfg.raw_dim, cfg.num_topics, 1.0, content_rng);
  const DenseMatrix text_basis = gaussian(cfg.raw_dim, cfg.num_topics, 1.0, content_rng);
  w.image = make_table(EmbeddingKind::kRawImage,
                       lift(w.item_topics, image_basis, cfg.sigma_content, content_rng));
  w.text = make_table(EmbeddingKind::kRawText,
                      lift(w.item_topics, text_basis, cfg.sigma_content, content_rng));

  const DenseMatrix review_basis = gaussian(cfg.raw_dim, cfg.num_topics, 1.0, review_rng);
  DenseMatrix joint(w.interactions.size(), cfg.num_topics);
  for (std::size_t r = 0; r < w.interactions.size(); ++r) {
    auto u = w.user_topics.row(w.interactions[r].user);
    auto i = w.item_topics.row(w.interactions[r].item);
    auto dst = joint.row(r);
    for (std::size_t k = 0; k < cfg.num_topics; ++k) dst[k] = u[k] * i[k];
  }
  w.reviews = make_table(EmbeddingKind::kRawReview,
                         lift(joint, review_basis, cfg.sigma_review, review_rng));
  return w;
}

std::vector<Index> oracle_rank(const PlantedWorld& world, Index user) {
  if (user >= world.num_users()) throw std::out_of_range("oracle_rank: user out of range");
  std::vector<double> aff(world.num_items());
  for (std::size_t i = 0; i < aff.size(); ++i) aff[i] = world.affinity(user, static_cast<Index>(i));
  std::vector<Index> order(aff.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return aff[a] > aff[b]; });
  return order;
}

PropagatedEmbeddings oracle_embeddings(const PlantedWorld& world) {
  PropagatedEmbeddings e;
  e.users = world.user_topics;
  e.items = world.item_topics;
  return e;
}

WorldFiles world_files(const std::filesystem::path& dir) {
  return {dir / "interactions.tsv", dir / "image.emb",        dir / "text.emb",
          dir / "review.emb",       dir / "ground_truth.tsv", dir / "world.json"};
}

WorldFiles write_world(const PlantedWorld& world, const std::filesystem::path& dir,
                       const std::string& fingerprint) {
  std::filesystem::create_directories(dir);
  const WorldFiles f = world_files(dir);
  write_interactions(f.interactions, world.catalog, world.interactions, fingerprint);
  auto write_table = [&](const std::filesystem::path& path, const EmbeddingTable& table) {
    if (fingerprint.empty() || table.fingerprint == fingerprint) {
      write_embedding_table(path, table);
      return;
    }
    EmbeddingTable stamped = table;
    stamped.fingerprint = fingerprint;
    write_embedding_table(path, stamped);
  };
  write_table(f.image, world.image);
  write_table(f.text, world.text);
  write_table(f.reviews, world.reviews);
  {
    std::ofstream out(f.ground_truth, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + f.ground_truth.string());
    if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
    out << "user\titem\taffinity\n" << std::setprecision(8);
    for (std::size_t u = 0; u < world.num_users(); ++u) {
      for (std::size_t i = 0; i < world.num_items(); ++i) {
        out << world.catalog.users.id(static_cast<Index>(u)) << '\t'
            << world.catalog.items.id(static_cast<Index>(i)) << '\t'
            << world.affinity(static_cast<Index>(u), static_cast<Index>(i)) << '\n';
      }
    }
    if (!out) throw std::runtime_error("write failed: " + f.ground_truth.string());
  }
  nlohmann::ordered_json j;
  if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
  j["config"] = nlohmann::ordered_json::parse(world.config.to_json());
  j["users"] = world.num_users();
  j["items"] = world.num_items();
  j["interactions"] = world.interactions.size();
  j["density"] = world.density();
  std::ofstream out(f.summary, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + f.summary.string());
  out << j.dump(2) << '\n';
  return f;
}

}  // namespace revgraph
