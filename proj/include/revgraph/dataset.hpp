#pragma once

// Interaction corpus, embedding tables and their on-disk formats, per-user
// splitting and negative sampling.
//
// Interactions file (UTF-8 TSV), one row per interaction:
//   user_id<TAB>item_id<TAB>review_row_index|-
// Lines starting with '#' and blank lines are ignored.
//
// Embedding file: a text header line
//   dim=<d> rows=<n> kind=<kind> [encoding=binary|tsv] [fingerprint=<hex>]
// followed by n rows of d little-endian float32 values (binary), or n TSV
// lines (encoding=tsv). A row made entirely of NaN marks a missing entity;
// it is loaded as the zero vector and flagged.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "revgraph/numerics.hpp"

namespace revgraph {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using Index = std::uint32_t;

// Bijection between external string ids and dense indices [0, n).
class IdMap {
 public:
  Index intern(const std::string& id);
  std::optional<Index> find(const std::string& id) const;
  const std::string& id(Index idx) const { return ids_.at(idx); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Index> index_;
};

struct Catalog {
  IdMap users;
  IdMap items;
  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
};

struct Interaction {
  Index user = 0;
  Index item = 0;
  std::optional<Index> review_row;

  bool operator==(const Interaction&) const = default;
};

struct LoadedInteractions {
  Catalog catalog;
  std::vector<Interaction> interactions;
  std::size_t duplicates_dropped = 0;
};

// review_rows, when given, bounds the review_row column.
LoadedInteractions load_interactions(const std::filesystem::path& path,
                                     std::optional<std::size_t> review_rows = std::nullopt);
void write_interactions(const std::filesystem::path& path, const Catalog& catalog,
                        const std::vector<Interaction>& interactions,
                        const std::string& fingerprint = {});

// ---------------------------------------------------------------------------

enum class EmbeddingKind {
  kRawImage,
  kRawText,
  kRawReview,
  kCompressedImage,
  kCompressedText,
  kCompressedReview,
  kAlignedImage,
  kAlignedText,
  kItemInit,
  kUserInit,
};

std::string to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(const std::string& s);
EmbeddingKind compressed_kind_for(EmbeddingKind raw);

struct EmbeddingTable {
  EmbeddingKind kind = EmbeddingKind::kRawImage;
  DenseMatrix matrix;
  // Entities whose vector was absent on disk; their row is zero.
  std::vector<bool> missing;
  std::string fingerprint;

  std::size_t dim() const { return matrix.cols(); }
  std::size_t rows() const { return matrix.rows(); }
  std::size_t num_missing() const;
  void validate() const;
};

EmbeddingTable make_table(EmbeddingKind kind, DenseMatrix matrix);

enum class TableEncoding { kBinary, kTsv };

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table,
                           TableEncoding encoding = TableEncoding::kBinary);
EmbeddingTable load_embedding_table(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.75;
  double val = 0.05;
  double test = 0.20;
};

struct SplitDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> val;
  std::vector<Interaction> test;
};

// Per user: shuffle, then floor(n*val) to val, floor(n*test) to test and the
// remainder to train. Users with fewer than three interactions keep all of
// them in train.
SplitDataset split_per_user(const std::vector<Interaction>& interactions, std::size_t num_users,
                            std::size_t num_items, SplitRatios ratios, std::uint64_t seed);

// Split file: "# data=<fingerprint>" then rows "train|val|test<TAB>user<TAB>item<TAB>review|-"
// using the external ids of the catalog.
void write_split(const std::filesystem::path& path, const Catalog& catalog,
                 const SplitDataset& split, const std::string& data_fingerprint,
                 const std::string& fingerprint = {});
struct LoadedSplit {
  SplitDataset split;
  std::string data_fingerprint;
};
LoadedSplit load_split(const std::filesystem::path& path, const Catalog& catalog);

// Iteratively drops users and items with fewer than k interactions until
// every remaining degree is >= k. Each pass removes users first, then items.
// Returns the surviving interactions re-indexed against a compacted catalog.
LoadedInteractions k_core_filter(const LoadedInteractions& data, std::size_t k);

class BipartiteGraph;

// Uniform over items the user has not interacted with in the graph.
Index sample_negative(Index user, const BipartiteGraph& graph, Rng& rng);

}  // namespace revgraph
