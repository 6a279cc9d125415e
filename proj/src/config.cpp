#include "revgraph/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace revgraph {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw std::invalid_argument(std::string("config: ") + field + " " + rule);
}

std::string num(double v) { return format_double(v); }

}  // namespace

void RunConfig::validate() const {
  world.validate();
  require(itc_proj_dim > 0, "itc_proj_dim", "must be positive");
  require(itc_epochs > 0, "itc_epochs", "must be positive");
  require(itc_batch >= 2, "itc_batch", "must be at least 2");
  require(itc_lr > 0.0, "itc_lr", "must be positive");
  require(itc_temperature > 0.0, "itc_temperature", "must be positive");
  require(code_dim > 0, "code_dim", "must be positive");
  require(ae_epochs > 0, "ae_epochs", "must be positive");
  require(ae_batch > 0, "ae_batch", "must be positive");
  require(ae_lr > 0.0, "ae_lr", "must be positive");
  require(ae_l2 >= 0.0, "ae_l2", "must be >= 0");
  require(ratios.train > 0.0 && ratios.val >= 0.0 && ratios.test > 0.0, "ratios",
          "need train > 0, val >= 0, test > 0");
  require(std::abs(ratios.train + ratios.val + ratios.test - 1.0) < 1e-9, "ratios",
          "must sum to 1");
  require(clusters > 0, "clusters", "must be positive");
  require(layers <= kMaxLayers, "layers", "must be at most 9");
  require(mode == InitMode::kBprmf || layers >= 1, "layers", "must be at least 1");
  require(epochs > 0, "epochs", "must be positive");
  require(batch > 0, "batch", "must be positive");
  require(eval_every > 0, "eval_every", "must be positive");
  require(lr > 0.0, "lr", "must be positive");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(lambda_bpr >= 0.0, "lambda_bpr", "must be >= 0");
  require(!ks.empty(), "ks", "must not be empty");
  for (std::size_t k : ks) require(k > 0, "ks", "entries must be positive");
  require(!ablate_modes.empty(), "ablate_modes", "must not be empty");
  require(!sweep_layers.empty(), "sweep_layers", "must not be empty");
  for (std::size_t l : sweep_layers) {
    require(l >= 1 && l <= kMaxLayers, "sweep_layers", "entries must be in 1..9");
  }
}

std::string RunConfig::canonical(std::string_view group) const {
  std::map<std::string, std::string> kv;
  if (group == "synth") {
    kv["users"] = std::to_string(world.num_users);
    kv["items"] = std::to_string(world.num_items);
    kv["topics"] = std::to_string(world.num_topics);
    kv["raw_dim"] = std::to_string(world.raw_dim);
    kv["rate"] = num(world.interaction_rate);
    kv["min_user_interactions"] = std::to_string(world.min_user_interactions);
    kv["temperature"] = num(world.temperature);
    kv["spread"] = num(world.topic_spread);
    kv["sigma_content"] = num(world.sigma_content);
    kv["sigma_review"] = num(world.sigma_review);
    kv["seed"] = std::to_string(world.seed);
  } else if (group == "align") {
    kv["align_first"] = align_first ? "1" : "0";
    if (align_first) {
      kv["proj_dim"] = std::to_string(itc_proj_dim);
      kv["epochs"] = std::to_string(itc_epochs);
      kv["batch"] = std::to_string(itc_batch);
      kv["lr"] = num(itc_lr);
      kv["temperature"] = num(itc_temperature);
      kv["seed"] = std::to_string(itc_seed);
    }
  } else if (group == "compress") {
    kv["code_dim"] = std::to_string(code_dim);
    kv["epochs"] = std::to_string(ae_epochs);
    kv["batch"] = std::to_string(ae_batch);
    kv["lr"] = num(ae_lr);
    kv["l2"] = num(ae_l2);
    kv["seed"] = std::to_string(ae_seed);
  } else if (group == "split") {
    kv["train"] = num(ratios.train);
    kv["val"] = num(ratios.val);
    kv["test"] = num(ratios.test);
    kv["seed"] = std::to_string(split_seed);
  } else if (group == "init") {
    kv["center_codes"] = center_codes ? "1" : "0";
    kv["normalize_codes"] = normalize_codes ? "1" : "0";
  } else if (group == "train") {
    kv["mode"] = to_string(mode);
    kv["layers"] = std::to_string(layers);
    kv["epochs"] = std::to_string(epochs);
    kv["batch"] = std::to_string(batch);
    kv["patience"] = std::to_string(patience);
    kv["eval_every"] = std::to_string(eval_every);
    kv["lr"] = num(lr);
    kv["weight_decay"] = num(weight_decay);
    kv["lambda"] = num(lambda_bpr);
    kv["reg_layer0"] = reg_layer0 ? "1" : "0";
    kv["freeze_items"] = freeze_items ? "1" : "0";
    kv["random_dim"] = std::to_string(random_dim);
    kv["seed"] = std::to_string(seed);
  } else if (group == "eval") {
    kv["ks"] = format_size_list(ks);
  } else if (group == "ablate") {
    kv["modes"] = format_mode_list(ablate_modes);
  } else if (group == "sweep") {
    kv["layers"] = format_size_list(sweep_layers);
  } else {
    throw std::invalid_argument("config: unknown group '" + std::string(group) + "'");
  }
  std::string out;
  for (const auto& [k, v] : kv) {
    out += std::string(group) + "." + k + "=" + v + "\n";
  }
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const char* g : {"synth", "align", "compress", "split", "init", "train", "eval", "ablate",
                        "sweep"}) {
    out += canonical(g);
  }
  return out;
}

AeTrainConfig RunConfig::ae_train_config() const {
  AeTrainConfig c;
  c.epochs = ae_epochs;
  c.batch_size = ae_batch;
  c.adamw.lr = ae_lr;
  c.seed = ae_seed;
  return c;
}

ItcTrainConfig RunConfig::itc_train_config() const {
  ItcTrainConfig c;
  c.epochs = itc_epochs;
  c.batch_size = itc_batch;
  c.adamw.lr = itc_lr;
  c.seed = itc_seed;
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch;
  c.patience = patience;
  c.eval_every = eval_every;
  c.adamw.lr = lr;
  c.adamw.weight_decay = weight_decay;
  c.seed = seed;
  return c;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) throw std::invalid_argument("empty entry in list '" + s + "'");
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || tok[0] == '-') {
      throw std::invalid_argument("not a non-negative integer: '" + tok + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<InitMode> parse_mode_list(const std::string& s) {
  std::vector<InitMode> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_init_mode(tok));
  if (out.empty()) throw std::invalid_argument("empty mode list");
  return out;
}

std::string format_mode_list(const std::vector<InitMode>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += to_string(v[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

}  // namespace revgraph
