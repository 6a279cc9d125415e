#include "revgraph/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "revgraph/graph.hpp"

namespace revgraph {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

Index IdMap::intern(const std::string& id) {
  auto [it, inserted] = index_.try_emplace(id, static_cast<Index>(ids_.size()));
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::optional<Index> IdMap::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skippable(const std::string& line) {
  return line.empty() || line[0] == '#';
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::optional<Index> parse_review_field(const std::string& field, const std::string& path,
                                        std::size_t line_no,
                                        std::optional<std::size_t> review_rows) {
  if (field == "-") return std::nullopt;
  std::uint64_t row = 0;
  if (!parse_number(field, row) || row > std::numeric_limits<Index>::max()) {
    throw ParseError(path, line_no, "bad review row '" + field + "'");
  }
  if (review_rows && row >= *review_rows) {
    throw ParseError(path, line_no,
                     "dangling review reference " + field + " (table has " +
                         std::to_string(*review_rows) + " rows)");
  }
  return static_cast<Index>(row);
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

LoadedInteractions load_interactions(const fs::path& path,
                                     std::optional<std::size_t> review_rows) {
  std::ifstream in = open_in(path);
  LoadedInteractions out;
  std::set<std::pair<Index, Index>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(path.string(), line_no, "empty user or item id");
    }
    auto review = parse_review_field(fields[2], path.string(), line_no, review_rows);
    Interaction it;
    it.user = out.catalog.users.intern(fields[0]);
    it.item = out.catalog.items.intern(fields[1]);
    it.review_row = review;
    if (!seen.emplace(it.user, it.item).second) {
      ++out.duplicates_dropped;
      continue;
    }
    out.interactions.push_back(it);
  }
  return out;
}

void write_interactions(const fs::path& path, const Catalog& catalog,
                        const std::vector<Interaction>& interactions,
                        const std::string& fingerprint) {
  std::ofstream out = open_out(path);
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
  for (const Interaction& it : interactions) {
    out << catalog.users.id(it.user) << '\t' << catalog.items.id(it.item) << '\t';
    if (it.review_row) {
      out << *it.review_row;
    } else {
      out << '-';
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

struct KindName {
  EmbeddingKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {EmbeddingKind::kRawImage, "raw_image"},
    {EmbeddingKind::kRawText, "raw_text"},
    {EmbeddingKind::kRawReview, "raw_review"},
    {EmbeddingKind::kCompressedImage, "compressed_image"},
    {EmbeddingKind::kCompressedText, "compressed_text"},
    {EmbeddingKind::kCompressedReview, "compressed_review"},
    {EmbeddingKind::kAlignedImage, "aligned_image"},
    {EmbeddingKind::kAlignedText, "aligned_text"},
    {EmbeddingKind::kItemInit, "item_init"},
    {EmbeddingKind::kUserInit, "user_init"},
};

}  // namespace

std::string to_string(EmbeddingKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

EmbeddingKind parse_embedding_kind(const std::string& s) {
  for (const auto& kn : kKindNames) {
    if (s == kn.name) return kn.kind;
  }
  throw std::invalid_argument("unknown embedding kind '" + s + "'");
}

EmbeddingKind compressed_kind_for(EmbeddingKind raw) {
  switch (raw) {
    case EmbeddingKind::kRawImage:
    case EmbeddingKind::kAlignedImage:
      return EmbeddingKind::kCompressedImage;
    case EmbeddingKind::kRawText:
    case EmbeddingKind::kAlignedText:
      return EmbeddingKind::kCompressedText;
    case EmbeddingKind::kRawReview:
      return EmbeddingKind::kCompressedReview;
    default:
      throw std::invalid_argument("no compressed kind for " + to_string(raw));
  }
}

std::size_t EmbeddingTable::num_missing() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), true));
}

void EmbeddingTable::validate() const {
  if (matrix.cols() == 0 && matrix.rows() > 0) throw ShapeError("embedding table with dim 0");
  if (missing.size() != matrix.rows()) throw ShapeError("embedding table missing-mask size");
  if (!matrix.all_finite()) throw std::domain_error("embedding table has non-finite entries");
}

EmbeddingTable make_table(EmbeddingKind kind, DenseMatrix matrix) {
  EmbeddingTable t;
  t.kind = kind;
  t.missing.assign(matrix.rows(), false);
  t.matrix = std::move(matrix);
  return t;
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_embedding_table(const fs::path& path, const EmbeddingTable& table,
                           TableEncoding encoding) {
  table.validate();
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << "dim=" << table.dim() << " rows=" << table.rows() << " kind=" << to_string(table.kind);
  if (encoding == TableEncoding::kTsv) out << " encoding=tsv";
  if (!table.fingerprint.empty()) out << " fingerprint=" << table.fingerprint;
  out << '\n';
  const float nan = std::numeric_limits<float>::quiet_NaN();
  if (encoding == TableEncoding::kTsv) {
    out << std::setprecision(9);
    for (std::size_t r = 0; r < table.rows(); ++r) {
      for (std::size_t c = 0; c < table.dim(); ++c) {
        if (c) out << '\t';
        if (table.missing[r]) {
          out << "nan";
        } else {
          out << static_cast<float>(table.matrix(r, c));
        }
      }
      out << '\n';
    }
    return;
  }
  std::vector<std::uint32_t> buf(table.dim());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < table.dim(); ++c) {
      const float f = table.missing[r] ? nan : static_cast<float>(table.matrix(r, c));
      buf[c] = to_little_endian(std::bit_cast<std::uint32_t>(f));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingTable load_embedding_table(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path.string(), 1, "missing header");
  std::map<std::string, std::string> kv;
  std::istringstream hs(header);
  std::string tok;
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), 1, "bad header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  std::size_t dim = 0, rows = 0;
  if (!kv.count("dim") || !parse_number(kv["dim"], dim) || dim == 0) {
    throw ParseError(path.string(), 1, "header needs dim=<d> with d > 0");
  }
  if (!kv.count("rows") || !parse_number(kv["rows"], rows)) {
    throw ParseError(path.string(), 1, "header needs rows=<n>");
  }
  if (!kv.count("kind")) throw ParseError(path.string(), 1, "header needs kind=<kind>");
  EmbeddingTable t;
  try {
    t.kind = parse_embedding_kind(kv["kind"]);
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  if (kv.count("fingerprint")) t.fingerprint = kv["fingerprint"];
  const bool tsv = kv.count("encoding") && kv["encoding"] == "tsv";
  if (kv.count("encoding") && !tsv && kv["encoding"] != "binary") {
    throw ParseError(path.string(), 1, "unknown encoding '" + kv["encoding"] + "'");
  }

  t.matrix = DenseMatrix(rows, dim);
  t.missing.assign(rows, false);
  if (tsv) {
    std::string line;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw ParseError(path.string(), r + 2, "truncated table");
      strip_cr(line);
      auto fields = split_tabs(line);
      if (fields.size() != dim) {
        throw ParseError(path.string(), r + 2,
                         "expected " + std::to_string(dim) + " values, got " +
                             std::to_string(fields.size()));
      }
      for (std::size_t c = 0; c < dim; ++c) {
        float f = 0.0f;
        if (fields[c] == "nan" || fields[c] == "NaN") {
          f = std::numeric_limits<float>::quiet_NaN();
        } else if (!parse_number(fields[c], f)) {
          throw ParseError(path.string(), r + 2, "bad value '" + fields[c] + "'");
        }
        t.matrix(r, c) = f;
      }
    }
  } else {
    std::vector<std::uint32_t> buf(dim);
    for (std::size_t r = 0; r < rows; ++r) {
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(dim * sizeof(std::uint32_t)));
      if (in.gcount() != static_cast<std::streamsize>(dim * sizeof(std::uint32_t))) {
        throw ParseError(path.string(), 2, "truncated binary table at row " + std::to_string(r));
      }
      for (std::size_t c = 0; c < dim; ++c) {
        t.matrix(r, c) = std::bit_cast<float>(to_little_endian(buf[c]));
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = t.matrix.row(r);
    const bool all_nan = std::all_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
    if (all_nan) {
      t.missing[r] = true;
      std::fill(row.begin(), row.end(), 0.0);
    } else if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
      throw ParseError(path.string(), r + 2, "non-finite value in row " + std::to_string(r));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

SplitDataset split_per_user(const std::vector<Interaction>& interactions, std::size_t num_users,
                            std::size_t num_items, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw std::invalid_argument("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::vector<Interaction>> per_user(num_users);
  for (const Interaction& it : interactions) {
    if (it.user >= num_users || it.item >= num_items) {
      throw std::out_of_range("split_per_user: interaction index out of range");
    }
    per_user[it.user].push_back(it);
  }
  SplitDataset out;
  out.num_users = num_users;
  out.num_items = num_items;
  Rng rng(seed);
  for (auto& list : per_user) {
    const std::size_t n = list.size();
    if (n < 3) {
      out.train.insert(out.train.end(), list.begin(), list.end());
      continue;
    }
    std::shuffle(list.begin(), list.end(), rng);
    // The epsilon keeps exact products like 20*0.05 from flooring to 0.
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));
    const std::size_t n_train = n - n_val - n_test;
    out.train.insert(out.train.end(), list.begin(), list.begin() + n_train);
    out.val.insert(out.val.end(), list.begin() + n_train, list.begin() + n_train + n_val);
    out.test.insert(out.test.end(), list.begin() + n_train + n_val, list.end());
  }
  return out;
}

void write_split(const fs::path& path, const Catalog& catalog, const SplitDataset& split,
                 const std::string& data_fingerprint, const std::string& fingerprint) {
  std::ofstream out = open_out(path);
  if (!fingerprint.empty()) out << "# fingerprint=" << fingerprint << '\n';
  out << "# data=" << data_fingerprint << '\n';
  auto emit = [&](const char* tag, const std::vector<Interaction>& list) {
    for (const Interaction& it : list) {
      out << tag << '\t' << catalog.users.id(it.user) << '\t' << catalog.items.id(it.item) << '\t';
      if (it.review_row) {
        out << *it.review_row;
      } else {
        out << '-';
      }
      out << '\n';
    }
  };
  emit("train", split.train);
  emit("val", split.val);
  emit("test", split.test);
}

LoadedSplit load_split(const fs::path& path, const Catalog& catalog) {
  std::ifstream in = open_in(path);
  LoadedSplit out;
  out.split.num_users = catalog.num_users();
  out.split.num_items = catalog.num_items();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.rfind("# data=", 0) == 0) {
      out.data_fingerprint = line.substr(7);
      continue;
    }
    if (skippable(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 4) throw ParseError(path.string(), line_no, "expected 4 fields");
    auto u = catalog.users.find(f[1]);
    auto i = catalog.items.find(f[2]);
    if (!u || !i) throw ParseError(path.string(), line_no, "unknown user or item id");
    Interaction it{*u, *i, parse_review_field(f[3], path.string(), line_no, std::nullopt)};
    if (f[0] == "train") {
      out.split.train.push_back(it);
    } else if (f[0] == "val") {
      out.split.val.push_back(it);
    } else if (f[0] == "test") {
      out.split.test.push_back(it);
    } else {
      throw ParseError(path.string(), line_no, "unknown partition '" + f[0] + "'");
    }
  }
  return out;
}

LoadedInteractions k_core_filter(const LoadedInteractions& data, std::size_t k) {
  const std::size_t nu = data.catalog.num_users();
  const std::size_t ni = data.catalog.num_items();
  std::vector<bool> alive(data.interactions.size(), true);
  std::vector<bool> user_ok(nu, true), item_ok(ni, true);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::size_t> deg(pass == 0 ? nu : ni, 0);
      for (std::size_t e = 0; e < alive.size(); ++e) {
        if (!alive[e]) continue;
        const Interaction& it = data.interactions[e];
        ++deg[pass == 0 ? it.user : it.item];
      }
      auto& ok = pass == 0 ? user_ok : item_ok;
      for (std::size_t x = 0; x < deg.size(); ++x) {
        if (ok[x] && deg[x] < k) {
          ok[x] = false;
          changed = true;
        }
      }
      for (std::size_t e = 0; e < alive.size(); ++e) {
        const Interaction& it = data.interactions[e];
        if (alive[e] && (!user_ok[it.user] || !item_ok[it.item])) alive[e] = false;
      }
    }
  }
  LoadedInteractions out;
  out.duplicates_dropped = data.duplicates_dropped;
  for (std::size_t e = 0; e < alive.size(); ++e) {
    if (!alive[e]) continue;
    const Interaction& it = data.interactions[e];
    Interaction copy = it;
    copy.user = out.catalog.users.intern(data.catalog.users.id(it.user));
    copy.item = out.catalog.items.intern(data.catalog.items.id(it.item));
    out.interactions.push_back(copy);
  }
  return out;
}

Index sample_negative(Index user, const BipartiteGraph& graph, Rng& rng) {
  const std::size_t n = graph.num_items();
  if (user >= graph.num_users()) throw std::out_of_range("sample_negative: user out of range");
  if (graph.user_degree(user) >= n) {
    throw std::invalid_argument("sample_negative: user " + std::to_string(user) +
                                " has interacted with every item");
  }
  std::uniform_int_distribution<Index> dist(0, static_cast<Index>(n - 1));
  while (true) {
    const Index j = dist(rng);
    if (!graph.has_edge(user, j)) return j;
  }
}

}  // namespace revgraph
