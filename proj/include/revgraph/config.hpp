#pragma once

// Run configuration shared by every CLI stage, its canonical text form and
// the stage fingerprints derived from it.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "revgraph/alignment.hpp"
#include "revgraph/compressor.hpp"
#include "revgraph/dataset.hpp"
#include "revgraph/epim.hpp"
#include "revgraph/synthgen.hpp"

namespace revgraph {

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string fnv1a_hex(std::string_view bytes);
std::string file_fingerprint(const std::filesystem::path& path);

struct RunConfig {
  // Paths. Empty input paths resolve to the synth stage's outputs.
  std::filesystem::path out_dir;
  std::filesystem::path interactions;
  std::filesystem::path image;
  std::filesystem::path text;
  std::filesystem::path reviews;

  PlantedWorldConfig world;

  // align
  bool align_first = false;
  std::size_t itc_proj_dim = 256;
  std::size_t itc_epochs = 200;
  std::size_t itc_batch = 32;
  double itc_lr = 1e-3;
  double itc_temperature = 0.07;
  std::uint64_t itc_seed = 0;

  // compress
  std::size_t code_dim = kDefaultCodeDim;
  std::size_t ae_epochs = 20;
  std::size_t ae_batch = 256;
  double ae_lr = 1e-3;
  double ae_l2 = 1e-4;
  std::uint64_t ae_seed = 0;

  // split and init-users
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
  bool center_codes = true;
  bool normalize_codes = false;
  std::size_t clusters = 8;

  // train
  InitMode mode = InitMode::kPrintf;
  std::size_t layers = kDefaultLayers;
  std::size_t epochs = 400;
  std::size_t batch = 4096;
  std::size_t patience = 20;
  std::size_t eval_every = 1;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double lambda_bpr = 1e-4;
  bool reg_layer0 = false;
  bool freeze_items = false;
  std::size_t random_dim = 0;
  std::uint64_t seed = 0;

  // eval
  std::vector<std::size_t> ks{5, 10};
  bool force = false;

  // ablate / sweep-layers
  std::vector<InitMode> ablate_modes = all_init_modes();
  std::vector<std::size_t> sweep_layers{1, 3, 5, 7, 9};

  // Throws std::invalid_argument naming the first offending field.
  void validate() const;

  // Sorted key=value lines for one group of fields ("synth", "align",
  // "compress", "split", "init", "train", "eval", "ablate", "sweep"). Paths
  // and force are never included.
  std::string canonical(std::string_view group) const;
  // Every group, in pipeline order.
  std::string canonical() const;
  std::string fingerprint() const { return fnv1a_hex(canonical()); }

  AeTrainConfig ae_train_config() const;
  ItcTrainConfig itc_train_config() const;
  TrainConfig train_config() const;
};

std::vector<std::size_t> parse_size_list(const std::string& s);
std::string format_size_list(const std::vector<std::size_t>& v);
std::vector<InitMode> parse_mode_list(const std::string& s);
std::string format_mode_list(const std::vector<InitMode>& v);
// Shortest text that round-trips the double.
std::string format_double(double v);

}  // namespace revgraph
