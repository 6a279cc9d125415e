#include "revgraph/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "revgraph/experiment.hpp"
#include "revgraph/graph.hpp"
#include "revgraph/raum.hpp"

namespace revgraph {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string run_name(InitMode mode, std::size_t layers) {
  if (mode == InitMode::kBprmf) layers = 0;
  return to_string(mode) + "-L" + std::to_string(layers);
}

fs::path Layout::model(InitMode mode, std::size_t layers) const {
  return root / "model" / run_name(mode, layers);
}

fs::path Layout::eval(InitMode mode, std::size_t layers) const {
  return root / "eval" / run_name(mode, layers);
}

namespace {

struct CliError : std::runtime_error {
  CliError(std::string kind_, int code_, const std::string& msg)
      : std::runtime_error(msg), kind(std::move(kind_)), code(code_) {}
  std::string kind;
  int code;
};

CliError missing_artifact(const std::string& producer, const fs::path& path) {
  return CliError("missing_artifact", kExitMissingArtifact,
                  "run stage " + producer + " first (missing " + path.string() + ")");
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw missing_artifact(producer, path);
}

// ---------------------------------------------------------------------------
// Parameters: one entry per configurable field, addressed as "section.key" in
// config files and by a flag on the subcommands that use it.

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_as(const std::string& text);

template <>
std::size_t parse_as<std::size_t>(const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

template <>
double parse_as<double>(const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + text + "'");
  }
  return v;
}

template <>
bool parse_as<bool>(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + text + "'");
}

template <>
fs::path parse_as<fs::path>(const std::string& text) {
  return fs::path(text);
}

template <>
InitMode parse_as<InitMode>(const std::string& text) {
  return parse_init_mode(text);
}

template <>
std::vector<std::size_t> parse_as<std::vector<std::size_t>>(const std::string& text) {
  return parse_size_list(text);
}

template <>
std::vector<InitMode> parse_as<std::vector<InitMode>>(const std::string& text) {
  return parse_mode_list(text);
}

std::string as_text(std::size_t v) { return std::to_string(v); }
std::string as_text(double v) { return format_double(v); }
std::string as_text(bool v) { return v ? "true" : "false"; }
std::string as_text(const fs::path& v) { return v.string(); }
std::string as_text(InitMode v) { return to_string(v); }
std::string as_text(const std::vector<std::size_t>& v) { return format_size_list(v); }
std::string as_text(const std::vector<InitMode>& v) { return format_mode_list(v); }

struct Param {
  std::string key;
  std::string flag;  // CLI11 option names, e.g. "--code-dim" or "--center-codes,!--no-center-codes"
  std::string help;
  bool is_switch = false;
  std::string type_name = "TEXT";
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename F>
Param field(std::string key, std::string flag, std::string help, F ref) {
  using T = std::remove_cvref_t<decltype(ref(std::declval<RunConfig&>()))>;
  Param p;
  p.key = std::move(key);
  p.flag = std::move(flag);
  p.help = std::move(help);
  p.is_switch = std::is_same_v<T, bool>;
  if constexpr (std::is_same_v<T, std::size_t>) {
    p.type_name = "UINT";
  } else if constexpr (std::is_same_v<T, double>) {
    p.type_name = "FLOAT";
  } else if constexpr (std::is_same_v<T, fs::path>) {
    p.type_name = "PATH";
  } else if constexpr (std::is_same_v<T, InitMode>) {
    p.type_name = "MODE";
  } else {
    p.type_name = "LIST";
  }
  p.set = [ref](RunConfig& c, const std::string& text) { ref(c) = parse_as<T>(text); };
  p.get = [ref](const RunConfig& c) { return as_text(ref(const_cast<RunConfig&>(c))); };
  return p;
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Param>& all_params() {
  static const std::vector<Param> params = [] {
    std::vector<Param> p;
    p.push_back(field("paths.out", "--out", "Output root (default $REVGRAPH_OUT, else ./revgraph-out)",
                      REF(out_dir)));
    p.push_back(field("paths.interactions", "--interactions",
                      "Interactions TSV (user, item, review row); default <out>/synth/interactions.tsv",
                      REF(interactions)));
    p.push_back(field("paths.image", "--image", "Raw image embedding table; default <out>/synth/image.emb",
                      REF(image)));
    p.push_back(field("paths.text", "--text", "Raw text embedding table; default <out>/synth/text.emb",
                      REF(text)));
    p.push_back(field("paths.reviews", "--reviews",
                      "Raw review embedding table; default <out>/synth/review.emb", REF(reviews)));

    p.push_back(field("synth.users", "--users", "Number of users", REF(world.num_users)));
    p.push_back(field("synth.items", "--items", "Number of items", REF(world.num_items)));
    p.push_back(field("synth.topics", "--topics", "Number of planted topics", REF(world.num_topics)));
    p.push_back(field("synth.raw_dim", "--raw-dim", "Width of the raw embeddings", REF(world.raw_dim)));
    p.push_back(field("synth.rate", "--rate", "Expected interaction density",
                      REF(world.interaction_rate)));
    p.push_back(field("synth.min_user_interactions", "--min-user-interactions",
                      "Minimum interactions per user", REF(world.min_user_interactions)));
    p.push_back(field("synth.temperature", "--temperature",
                      "Softmax temperature of the interaction distribution",
                      REF(world.temperature)));
    p.push_back(field("synth.spread", "--spread", "Topic vector perturbation std",
                      REF(world.topic_spread)));
    p.push_back(field("synth.sigma_content", "--sigma-content", "Noise std of image/text lifts",
                      REF(world.sigma_content)));
    p.push_back(field("synth.sigma_review", "--sigma-review", "Noise std of review lifts",
                      REF(world.sigma_review)));
    p.push_back(field("synth.seed", "--seed", "World seed", REF(world.seed)));

    {
      Param a;
      a.key = "pipeline.align";
      a.flag = "--align";
      a.help = "first: compress the tables written by the align stage; skip: compress raw tables";
      a.set = [](RunConfig& c, const std::string& v) {
        if (v != "first" && v != "skip") throw std::invalid_argument("expected first or skip");
        c.align_first = v == "first";
      };
      a.get = [](const RunConfig& c) { return std::string(c.align_first ? "first" : "skip"); };
      a.type_name = "first|skip";
      p.push_back(a);
    }
    p.push_back(field("align.proj_dim", "--proj-dim", "Projection width", REF(itc_proj_dim)));
    p.push_back(field("align.epochs", "--epochs", "Training epochs", REF(itc_epochs)));
    p.push_back(field("align.batch", "--batch", "Batch size (in-batch negatives)", REF(itc_batch)));
    p.push_back(field("align.lr", "--lr", "AdamW learning rate", REF(itc_lr)));
    p.push_back(field("align.temperature", "--temperature", "Initial softmax temperature",
                      REF(itc_temperature)));
    p.push_back(field("align.seed", "--seed", "Initialization and batching seed", REF(itc_seed)));

    p.push_back(field("compress.code_dim", "--code-dim", "Code width", REF(code_dim)));
    p.push_back(field("compress.epochs", "--epochs", "Auto-encoder epochs", REF(ae_epochs)));
    p.push_back(field("compress.batch", "--batch", "Auto-encoder batch size", REF(ae_batch)));
    p.push_back(field("compress.lr", "--lr", "AdamW learning rate", REF(ae_lr)));
    p.push_back(field("compress.l2", "--l2", "L2 coefficient on auto-encoder weights", REF(ae_l2)));
    p.push_back(field("compress.seed", "--seed", "Initialization and batching seed", REF(ae_seed)));

    p.push_back(field("split.train", "--train-ratio", "Per-user train fraction", REF(ratios.train)));
    p.push_back(field("split.val", "--val-ratio", "Per-user validation fraction", REF(ratios.val)));
    p.push_back(field("split.test", "--test-ratio", "Per-user test fraction", REF(ratios.test)));
    p.push_back(field("split.seed", "--split-seed", "Split shuffle seed", REF(split_seed)));

    p.push_back(field("init.center_codes", "--center-codes,!--no-center-codes",
                      "Subtract per-column means from the codes before building layer 0",
                      REF(center_codes)));
    p.push_back(field("init.normalize_codes", "--normalize-codes,!--no-normalize-codes",
                      "L2-normalize code rows before building layer 0", REF(normalize_codes)));
    p.push_back(field("init.clusters", "--clusters", "Co-clusters in the cross-relation export",
                      REF(clusters)));

    p.push_back(field("train.mode", "--mode",
                      "printf | no_image | no_title | no_raum | none | bprmf", REF(mode)));
    p.push_back(field("train.layers", "--layers", "Propagation layers (1..9)", REF(layers)));
    p.push_back(field("train.epochs", "--epochs", "Maximum epochs", REF(epochs)));
    p.push_back(field("train.batch", "--batch", "BPR batch size", REF(batch)));
    p.push_back(field("train.patience", "--patience",
                      "Validation checks without improvement before stopping", REF(patience)));
    p.push_back(field("train.eval_every", "--eval-every", "Epochs between validation checks",
                      REF(eval_every)));
    p.push_back(field("train.lr", "--lr", "AdamW learning rate", REF(lr)));
    p.push_back(field("train.weight_decay", "--wd", "AdamW decoupled weight decay",
                      REF(weight_decay)));
    p.push_back(field("train.lambda", "--lambda", "L2 coefficient of the BPR objective",
                      REF(lambda_bpr)));
    p.push_back(field("train.reg_layer0", "--reg-layer0,!--no-reg-layer0",
                      "Apply the BPR L2 term to layer-0 rows instead of final embeddings",
                      REF(reg_layer0)));
    p.push_back(field("train.freeze_items", "--freeze-items,!--no-freeze-items",
                      "Keep item layer-0 embeddings fixed", REF(freeze_items)));
    p.push_back(field("train.random_dim", "--random-dim",
                      "Width of random embeddings (0: match the concatenated codes)",
                      REF(random_dim)));
    p.push_back(field("train.seed", "--seed", "Initialization and sampling seed", REF(seed)));

    p.push_back(field("eval.ks", "--ks", "Cutoffs, comma separated", REF(ks)));
    p.push_back(field("ablate.modes", "--modes", "Modes to compare, comma separated; first is the reference",
                      REF(ablate_modes)));
    p.push_back(field("sweep.layers", "--layers", "Layer counts, comma separated",
                      REF(sweep_layers)));
    return p;
  }();
  return params;
}

#undef REF

const Param& param(const std::string& key) {
  for (const Param& p : all_params()) {
    if (p.key == key) return p;
  }
  throw std::logic_error("unknown parameter " + key);
}

std::string strip_quotes(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

}  // namespace

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(path.string(), line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = strip_quotes(trim(line.substr(eq + 1)));
    const std::string full = section.empty() ? key : section + "." + key;
    const Param* p = nullptr;
    for (const Param& q : all_params()) {
      if (q.key == full) p = &q;
    }
    if (p == nullptr) throw ParseError(path.string(), line_no, "unknown key '" + full + "'");
    try {
      p->set(cfg, value);
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, full + ": " + e.what());
    }
  }
}

namespace {

// ---------------------------------------------------------------------------
// Artifacts

struct Inputs {
  fs::path interactions, image, text, reviews;
};

Inputs resolve_inputs(const RunConfig& cfg, const Layout& layout) {
  const WorldFiles w = world_files(layout.synth());
  return {cfg.interactions.empty() ? w.interactions : cfg.interactions,
          cfg.image.empty() ? w.image : cfg.image, cfg.text.empty() ? w.text : cfg.text,
          cfg.reviews.empty() ? w.reviews : cfg.reviews};
}

// Explicit inputs are the user's responsibility; defaults come from synth.
void require_input(const fs::path& path, const fs::path& explicit_path) {
  if (fs::exists(path)) return;
  if (!explicit_path.empty()) {
    throw CliError("io", kExitError, "input not found: " + path.string());
  }
  throw missing_artifact("synth", path);
}

std::string combine(std::initializer_list<std::string> parts) {
  std::string s;
  for (const std::string& p : parts) {
    s += p;
    s += '\n';
  }
  return fnv1a_hex(s);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_manifest(const fs::path& path, const std::string& stage, const std::string& fingerprint,
                    const std::string& canonical, ojson extra = ojson::object()) {
  ojson j;
  j["stage"] = stage;
  j["format_version"] = 1;
  j["fingerprint"] = fingerprint;
  ojson cfg = ojson::object();
  std::istringstream lines(canonical);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfg;
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_text(path, j.dump(2) + "\n");
}

const char* code_name(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::kCompressedImage:
      return "image";
    case EmbeddingKind::kCompressedText:
      return "text";
    case EmbeddingKind::kCompressedReview:
      return "review";
    default:
      throw std::logic_error("not a code kind");
  }
}

fs::path code_path(const Layout& layout, EmbeddingKind kind) {
  return layout.codes() / (std::string(code_name(kind)) + ".emb");
}

struct Codes {
  std::optional<EmbeddingTable> image, text, review;
};

Codes load_codes(const Layout& layout, bool image, bool text, bool review) {
  Codes c;
  auto one = [&](EmbeddingKind kind, bool required) -> std::optional<EmbeddingTable> {
    const fs::path p = code_path(layout, kind);
    if (!fs::exists(p)) {
      if (required) throw missing_artifact("compress", p);
      return std::nullopt;
    }
    EmbeddingTable t = load_embedding_table(p);
    if (t.kind != kind) {
      throw CliError("bad_artifact", kExitError,
                     p.string() + " holds " + to_string(t.kind) + ", expected " + to_string(kind));
    }
    return t;
  };
  c.image = one(EmbeddingKind::kCompressedImage, image);
  c.text = one(EmbeddingKind::kCompressedText, text);
  c.review = one(EmbeddingKind::kCompressedReview, review);
  return c;
}

struct ModeNeeds {
  bool image, text, review;
};

ModeNeeds needs_of(InitMode m) {
  switch (m) {
    case InitMode::kPrintf:
      return {true, true, true};
    case InitMode::kNoImage:
      return {false, true, true};
    case InitMode::kNoTitle:
      return {true, false, true};
    case InitMode::kNoRaum:
      return {true, true, false};
    case InitMode::kNone:
    case InitMode::kBprmf:
      return {false, false, false};
  }
  return {false, false, false};
}

std::string table_fp(const std::optional<EmbeddingTable>& t) {
  return t ? t->fingerprint : std::string("-");
}

// Interactions, split and codes as written by the earlier stages.
struct StageData {
  LoadedInteractions interactions;
  PreparedData prepared;
  std::string data_fingerprint;
  std::string init_fingerprint;
};

StageData load_stage_data(const RunConfig& cfg, const Layout& layout, ModeNeeds needs) {
  const Inputs in = resolve_inputs(cfg, layout);
  require_input(in.interactions, cfg.interactions);
  require_artifact(layout.split(), "init-users");
  Codes codes = load_codes(layout, needs.image, needs.text, needs.review);

  StageData d;
  d.interactions = load_interactions(in.interactions);
  LoadedSplit split = load_split(layout.split(), d.interactions.catalog);
  d.data_fingerprint = split.data_fingerprint;
  d.prepared.split = std::move(split.split);
  d.prepared.graph = BipartiteGraph(d.prepared.split.num_users, d.prepared.split.num_items,
                                    d.prepared.split.train);
  if (codes.image) d.prepared.image_codes = std::move(codes.image->matrix);
  if (codes.text) d.prepared.text_codes = std::move(codes.text->matrix);
  if (codes.review) d.prepared.review_codes = std::move(codes.review->matrix);
  d.init_fingerprint = combine({d.data_fingerprint, table_fp(codes.image), table_fp(codes.text),
                                table_fp(codes.review), cfg.canonical("init")});
  return d;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.num_layers = cfg.layers;
  m.lambda_bpr = cfg.lambda_bpr;
  m.reg_layer0 = cfg.reg_layer0;
  m.freeze_items = cfg.freeze_items;
  m.center_codes = cfg.center_codes;
  m.normalize_codes = cfg.normalize_codes;
  m.random_dim = cfg.random_dim;
  m.seed = cfg.seed;
  m.eval_ks = cfg.ks;
  return m;
}

std::string fixed6(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

ojson metrics_json(const EvalReport& r) {
  ojson m = ojson::object();
  for (std::size_t j = 0; j < r.ks.size(); ++j) {
    m["R@" + std::to_string(r.ks[j])] = r.mean_recall[j];
    m["N@" + std::to_string(r.ks[j])] = r.mean_ndcg[j];
  }
  return m;
}

std::string metrics_line(const EvalReport& r) {
  std::string s;
  for (std::size_t j = 0; j < r.ks.size(); ++j) {
    s += " R@" + std::to_string(r.ks[j]) + "=" + fixed6(r.mean_recall[j]);
    s += " N@" + std::to_string(r.ks[j]) + "=" + fixed6(r.mean_ndcg[j]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stages

void cmd_synth(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  const std::string fp = fnv1a_hex(cfg.canonical("synth"));
  const PlantedWorld world = generate(cfg.world);
  const WorldFiles f = write_world(world, layout.synth(), fp);
  write_manifest(layout.synth() / "manifest.json", "synth", fp, cfg.canonical("synth"),
                 {{"interactions", world.interactions.size()}, {"density", world.density()}});
  out << "synth: users=" << world.num_users() << " items=" << world.num_items()
      << " interactions=" << world.interactions.size() << " density=" << std::setprecision(4)
      << world.density() << " fingerprint=" << fp << " -> " << f.interactions.parent_path().string()
      << '\n';
}

void cmd_align(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  const Inputs in = resolve_inputs(cfg, layout);
  require_input(in.image, cfg.image);
  require_input(in.text, cfg.text);
  const EmbeddingTable img = load_embedding_table(in.image);
  const EmbeddingTable txt = load_embedding_table(in.text);
  if (img.rows() != txt.rows()) {
    throw CliError("bad_input", kExitError,
                   "image and text tables differ in rows (" + std::to_string(img.rows()) + " vs " +
                       std::to_string(txt.rows()) + ")");
  }
  RunConfig shown = cfg;
  shown.align_first = true;
  const std::string canon = shown.canonical("align");
  const std::string fp =
      combine({file_fingerprint(in.image), file_fingerprint(in.text), canon});

  ItcHead head = make_itc_head(img.dim(), txt.dim(), cfg.itc_proj_dim, cfg.itc_seed,
                               cfg.itc_temperature);
  const ItcTrainResult r = train_itc(head, img.matrix, txt.matrix, cfg.itc_train_config());
  const double top1 = r.heldout_rows.empty()
                          ? std::nan("")
                          : retrieval_top1(head, img.matrix, txt.matrix, r.heldout_rows);

  EmbeddingTable a_img = make_table(EmbeddingKind::kAlignedImage, project_images(head, img.matrix));
  EmbeddingTable a_txt = make_table(EmbeddingKind::kAlignedText, project_texts(head, txt.matrix));
  a_img.missing = img.missing;
  a_txt.missing = txt.missing;
  a_img.fingerprint = a_txt.fingerprint = fp;
  write_embedding_table(layout.align() / "image.emb", a_img);
  write_embedding_table(layout.align() / "text.emb", a_txt);

  std::ostringstream trace;
  trace << "# fingerprint=" << fp << "\nepoch\tloss\n" << std::setprecision(10);
  for (std::size_t e = 0; e < r.trace.size(); ++e) trace << e + 1 << '\t' << r.trace[e] << '\n';
  write_text(layout.align() / "trace.tsv", trace.str());

  ojson extra;
  extra["heldout_rows"] = r.heldout_rows.size();
  extra["heldout_loss_initial"] = r.heldout_loss_initial;
  extra["heldout_loss_final"] = r.heldout_loss_final;
  extra["heldout_top1"] = std::isnan(top1) ? ojson(nullptr) : ojson(top1);
  extra["temperature"] = head.temperature();
  write_manifest(layout.align() / "manifest.json", "align", fp, canon, extra);
  out << "align: proj_dim=" << cfg.itc_proj_dim << " heldout_loss " << std::setprecision(4)
      << r.heldout_loss_initial << " -> " << r.heldout_loss_final << " top1=" << top1
      << " fingerprint=" << fp << " -> " << layout.align().string() << '\n';
}

void cmd_compress(const RunConfig& cfg, const Layout& layout, const std::string& kind,
                  std::ostream& out) {
  if (kind != "all" && kind != "image" && kind != "text" && kind != "review") {
    throw CliError("usage", kExitUsage, "--kind must be image, text, review or all");
  }
  const Inputs in = resolve_inputs(cfg, layout);
  struct Job {
    std::string name;
    fs::path input;
    fs::path explicit_input;
    bool aligned;
  };
  std::vector<Job> jobs;
  auto want = [&](const char* k) { return kind == "all" || kind == k; };
  if (want("image")) {
    jobs.push_back(cfg.align_first ? Job{"image", layout.align() / "image.emb", {}, true}
                                   : Job{"image", in.image, cfg.image, false});
  }
  if (want("text")) {
    jobs.push_back(cfg.align_first ? Job{"text", layout.align() / "text.emb", {}, true}
                                   : Job{"text", in.text, cfg.text, false});
  }
  if (want("review")) jobs.push_back({"review", in.reviews, cfg.reviews, false});
  for (const Job& j : jobs) {
    if (j.aligned) {
      require_artifact(j.input, "align");
    } else {
      require_input(j.input, j.explicit_input);
    }
  }

  for (const Job& j : jobs) {
    const EmbeddingTable raw = load_embedding_table(j.input);
    const EmbeddingKind out_kind = compressed_kind_for(raw.kind);
    if (code_name(out_kind) != j.name) {
      throw CliError("bad_input", kExitError,
                     j.input.string() + " holds " + to_string(raw.kind) + ", expected " + j.name);
    }
    const std::string canon = cfg.canonical("align") + cfg.canonical("compress");
    const std::string fp = combine({file_fingerprint(j.input), canon, j.name});
    AutoEncoder ae = make_autoencoder(raw.dim(), cfg.code_dim, cfg.ae_l2, cfg.ae_seed);
    const std::vector<double> trace = train_ae(ae, raw, cfg.ae_train_config());
    EmbeddingTable codes = compress(ae, raw, out_kind);
    codes.fingerprint = fp;
    write_embedding_table(code_path(layout, out_kind), codes);
    save_autoencoder(layout.codes() / (j.name + ".ae"), ae);
    std::ostringstream t;
    t << "# fingerprint=" << fp << "\nepoch\tloss\n" << std::setprecision(10);
    for (std::size_t e = 0; e < trace.size(); ++e) t << e + 1 << '\t' << trace[e] << '\n';
    write_text(layout.codes() / (j.name + "_trace.tsv"), t.str());
    write_manifest(layout.codes() / (j.name + ".json"), "compress", fp, canon,
                   {{"kind", j.name},
                    {"rows", codes.rows()},
                    {"input_dim", raw.dim()},
                    {"hidden_dim", ae.encoder.hidden_dim()},
                    {"final_loss", trace.empty() ? 0.0 : trace.back()}});
    out << "compress: " << j.name << " " << raw.dim() << " -> " << cfg.code_dim
        << " rows=" << codes.rows() << " loss=" << std::setprecision(6)
        << (trace.empty() ? 0.0 : trace.back()) << " fingerprint=" << fp << '\n';
  }
}

void cmd_init_users(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  const Inputs in = resolve_inputs(cfg, layout);
  require_input(in.interactions, cfg.interactions);
  Codes codes = load_codes(layout, true, true, true);
  const LoadedInteractions data = load_interactions(in.interactions, codes.review->rows());
  const std::size_t nu = data.catalog.num_users();
  const std::size_t ni = data.catalog.num_items();
  if (codes.image->rows() != ni || codes.text->rows() != ni) {
    throw CliError("bad_artifact", kExitError,
                   "item code tables have " + std::to_string(codes.image->rows()) + "/" +
                       std::to_string(codes.text->rows()) + " rows for " + std::to_string(ni) +
                       " items");
  }

  const std::string data_fp =
      combine({file_fingerprint(in.interactions), cfg.canonical("split")});
  const SplitDataset split =
      split_per_user(data.interactions, nu, ni, cfg.ratios, cfg.split_seed);
  const std::string fp = combine({data_fp, table_fp(codes.image), table_fp(codes.text),
                                  table_fp(codes.review), cfg.canonical("init")});
  write_split(layout.split(), data.catalog, split, data_fp, fp);

  const DenseMatrix items = build_item_init(
      prepare_codes(codes.image->matrix, cfg.center_codes, cfg.normalize_codes),
      prepare_codes(codes.text->matrix, cfg.center_codes, cfg.normalize_codes));
  const DenseMatrix reviews =
      prepare_codes(codes.review->matrix, cfg.center_codes, cfg.normalize_codes);
  const ItemReviewMeans means = item_review_means(split.train, reviews, ni);
  const CrossRelationMatrix d = build_cross_relation(means, items);
  const UserInitEmbeddings users = init_users(d, items, split.train, reviews, nu);

  EmbeddingTable item_table = make_table(EmbeddingKind::kItemInit, items);
  EmbeddingTable user_table = make_table(EmbeddingKind::kUserInit, users.matrix);
  item_table.fingerprint = user_table.fingerprint = fp;
  write_embedding_table(layout.raum() / "item_init.emb", item_table);
  write_embedding_table(layout.raum() / "user_init.emb", user_table);
  const CoclusterResult cc =
      export_cross_relation(d, layout.raum() / "cross_relation.tsv", cfg.clusters, cfg.split_seed, fp);

  std::size_t counts[3] = {0, 0, 0};
  std::ostringstream src;
  src << "# fingerprint=" << fp << "\nuser\tsource\n";
  for (std::size_t u = 0; u < nu; ++u) {
    const auto s = users.source[u];
    ++counts[static_cast<int>(s)];
    src << data.catalog.users.id(static_cast<Index>(u)) << '\t'
        << (s == UserInitSource::kAttention      ? "attention"
            : s == UserInitSource::kMeanFallback ? "mean_fallback"
                                                 : "empty")
        << '\n';
  }
  write_text(layout.raum() / "user_init_source.tsv", src.str());

  ojson extra;
  extra["data_fingerprint"] = data_fp;
  extra["train"] = split.train.size();
  extra["val"] = split.val.size();
  extra["test"] = split.test.size();
  extra["users_attention"] = counts[0];
  extra["users_mean_fallback"] = counts[1];
  extra["users_empty"] = counts[2];
  extra["cocluster_degenerate"] = cc.degenerate;
  write_manifest(layout.raum() / "manifest.json", "init-users", fp,
                 cfg.canonical("split") + cfg.canonical("init"), extra);
  out << "init-users: train=" << split.train.size() << " val=" << split.val.size()
      << " test=" << split.test.size() << " attention=" << counts[0]
      << " mean_fallback=" << counts[1] << " empty=" << counts[2] << " fingerprint=" << fp
      << " -> " << layout.raum().string() << '\n';
}

std::string checkpoint_config_json(const ModelState& st, const CheckpointMeta& meta,
                                   const RunConfig& cfg) {
  ojson c;
  c["mode"] = to_string(st.mode);
  c["layers"] = st.num_layers;
  c["dim"] = st.dim();
  c["seed"] = st.seed;
  c["lambda"] = st.lambda_bpr;
  c["reg_layer0"] = st.reg_layer0;
  c["freeze_items"] = st.freeze_items;
  c["ks"] = cfg.ks;
  c["model_fingerprint"] = meta.fingerprint;
  return c.dump();
}

void cmd_train(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  const ModeNeeds needs = needs_of(cfg.mode);
  StageData d = load_stage_data(cfg, layout, needs);
  const std::string fp = combine({d.init_fingerprint, cfg.canonical("train")});

  ModelState st;
  st.num_layers = cfg.layers;
  st.lambda_bpr = cfg.lambda_bpr;
  st.reg_layer0 = cfg.reg_layer0;
  st.freeze_items = cfg.freeze_items;
  st.seed = cfg.seed;
  st.optimizer.config = cfg.train_config().adamw;
  init_mode(st, cfg.mode, content_inputs(d.prepared, model_config(cfg)));
  const TrainResult r = train(st, d.prepared.graph, d.prepared.split, cfg.train_config());
  if (r.aborted) throw CliError("diverged", kExitError, "training aborted: " + r.abort_reason);

  const fs::path dir = layout.model(cfg.mode, st.num_layers);
  save_checkpoint(dir / "checkpoint.bin", st, {fp, d.data_fingerprint});
  write_train_trace(dir / "trace.tsv", r, fp);
  ojson extra;
  extra["data_fingerprint"] = d.data_fingerprint;
  extra["epochs_run"] = r.trace.size();
  extra["best_epoch"] = r.best_epoch;
  extra["best_val_ndcg"] = r.best_val_ndcg;
  extra["early_stopped"] = r.early_stopped;
  write_manifest(dir / "manifest.json", "train", fp,
                 cfg.canonical("init") + cfg.canonical("train"), extra);
  out << "train: " << run_name(cfg.mode, st.num_layers) << " epochs=" << r.trace.size()
      << " best_epoch=" << r.best_epoch << " val_ndcg=" << fixed6(r.best_val_ndcg)
      << " fingerprint=" << fp << " -> " << dir.string() << '\n';
}

void cmd_eval(const RunConfig& cfg, const Layout& layout, std::ostream& out, std::ostream& err) {
  const Inputs in = resolve_inputs(cfg, layout);
  const fs::path ckpt = layout.model(cfg.mode, cfg.layers) / "checkpoint.bin";
  require_artifact(ckpt, "train");
  require_artifact(layout.split(), "init-users");
  require_input(in.interactions, cfg.interactions);

  CheckpointMeta meta;
  const ModelState st = load_checkpoint(ckpt, &meta);
  const LoadedInteractions data = load_interactions(in.interactions);
  const LoadedSplit split = load_split(layout.split(), data.catalog);

  std::vector<std::string> problems;
  if (meta.data_fingerprint != split.data_fingerprint) {
    problems.push_back("checkpoint data fingerprint " + meta.data_fingerprint +
                       " != split data fingerprint " + split.data_fingerprint);
  }
  if (st.mode != cfg.mode) {
    problems.push_back("checkpoint mode " + to_string(st.mode) + " != requested " +
                       to_string(cfg.mode));
  }
  if (st.user0.rows() != split.split.num_users || st.item0.rows() != split.split.num_items) {
    throw CliError("fingerprint_mismatch", kExitFingerprint,
                   "checkpoint shape does not match the interactions catalog");
  }
  for (const std::string& p : problems) {
    if (!cfg.force) {
      throw CliError("fingerprint_mismatch", kExitFingerprint, p + " (use --force to override)");
    }
    err << "warning stage=eval kind=fingerprint_mismatch message=\"" << p << "\" (forced)\n";
  }

  const BipartiteGraph graph(split.split.num_users, split.split.num_items, split.split.train);
  EvalReport report = evaluate(propagate(st, graph), split.split, EvalTarget::kTest, cfg.ks);
  report.fingerprint = combine({meta.fingerprint, cfg.canonical("eval")});
  report.data_fingerprint = split.data_fingerprint;
  const fs::path dir = layout.eval(cfg.mode, cfg.layers);
  write_report_tsv(dir / "report.tsv", report, &data.catalog);
  write_report_json(dir / "report.json", report, checkpoint_config_json(st, meta, cfg));
  out << "eval: " << run_name(st.mode, st.num_layers) << " users=" << report.per_user.size()
      << " skipped=" << report.skipped_users << metrics_line(report)
      << " fingerprint=" << report.fingerprint << " -> " << dir.string() << '\n';
}

ModeNeeds union_needs(const std::vector<InitMode>& modes) {
  ModeNeeds n{false, false, false};
  for (InitMode m : modes) {
    const ModeNeeds x = needs_of(m);
    n.image |= x.image;
    n.text |= x.text;
    n.review |= x.review;
  }
  return n;
}

void write_runs_json(const fs::path& path, const std::vector<RunResult>& results,
                     const std::string& fp, const std::string& data_fp) {
  ojson j;
  j["fingerprint"] = fp;
  j["data_fingerprint"] = data_fp;
  ojson runs = ojson::array();
  for (const RunResult& r : results) {
    ojson o;
    o["mode"] = to_string(r.mode);
    o["layers"] = r.num_layers;
    o["best_epoch"] = r.train.best_epoch;
    o["best_val_ndcg"] = r.train.best_val_ndcg;
    o["users_evaluated"] = r.test.per_user.size();
    o["metrics"] = metrics_json(r.test);
    runs.push_back(o);
  }
  j["runs"] = runs;
  write_text(path, j.dump(2) + "\n");
}

void cmd_ablate(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  StageData d = load_stage_data(cfg, layout, union_needs(cfg.ablate_modes));
  const std::string canon = cfg.canonical("train") + cfg.canonical("eval") + cfg.canonical("ablate");
  const std::string fp = combine({d.init_fingerprint, canon});
  const std::vector<RunResult> results =
      run_ablation(d.prepared, cfg.ablate_modes, model_config(cfg), cfg.train_config());
  write_results_tsv(layout.ablate() / "ablation.tsv", results, fp);
  write_runs_json(layout.ablate() / "ablation.json", results, fp, d.data_fingerprint);
  for (const RunResult& r : results) {
    out << "ablate: " << run_name(r.mode, r.num_layers) << metrics_line(r.test) << '\n';
  }
  out << "ablate: fingerprint=" << fp << " -> " << layout.ablate().string() << '\n';
}

void cmd_sweep(const RunConfig& cfg, const Layout& layout, std::ostream& out) {
  if (cfg.mode == InitMode::kBprmf) {
    throw CliError("usage", kExitUsage, "sweep-layers: bprmf has no propagation layers");
  }
  StageData d = load_stage_data(cfg, layout, needs_of(cfg.mode));
  RunConfig shown = cfg;
  shown.layers = cfg.sweep_layers.front();
  const std::string canon = shown.canonical("train") + cfg.canonical("eval") + cfg.canonical("sweep");
  const std::string fp = combine({d.init_fingerprint, canon});
  const std::vector<RunResult> results = sweep_layers(d.prepared, cfg.mode, cfg.sweep_layers,
                                                      model_config(cfg), cfg.train_config());
  write_results_tsv(layout.sweep() / "layers.tsv", results, fp);
  write_runs_json(layout.sweep() / "layers.json", results, fp, d.data_fingerprint);
  for (const RunResult& r : results) {
    out << "sweep-layers: " << run_name(r.mode, r.num_layers) << metrics_line(r.test) << '\n';
  }
  out << "sweep-layers: fingerprint=" << fp << " -> " << layout.sweep().string() << '\n';
}

// ---------------------------------------------------------------------------
// Command-line wiring

struct Bound {
  const Param* param;
  CLI::Option* option;
  std::string* text;
  bool* flag;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<Bound> bound;
  std::string config_file;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const RunConfig defaults;
  CLI::App app{"revgraph: review-aware graph recommender pipeline", "revgraph"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "revgraph 0.1.0");
  app.footer(
      "Every subcommand accepts --config FILE: '[section]' headers and 'key = value' lines,\n"
      "keys as in the option descriptions below (e.g. [train] epochs = 100). Flags override\n"
      "the file. The output root is --out, else $REVGRAPH_OUT, else ./revgraph-out.");

  std::deque<std::string> texts;
  struct Switch {
    bool value = false;
  };
  std::deque<Switch> flags;
  std::deque<Command> commands;
  std::string compress_kind = "all";
  bool force = false;

  auto add = [&](const std::string& name, const std::string& description,
                 const std::vector<std::string>& keys) -> Command& {
    Command& c = commands.emplace_back();
    c.name = name;
    c.app = app.add_subcommand(name, description);
    c.app->add_option("--config", c.config_file, "Config file (TOML-like key = value sections)")
        ->check(CLI::ExistingFile);
    for (const std::string& key : keys) {
      const Param& p = param(key);
      const std::string desc = p.help + "  [" + p.key + "]";
      Bound b{&p, nullptr, nullptr, nullptr};
      if (p.is_switch) {
        b.flag = &flags.emplace_back().value;
        b.option = c.app->add_flag(p.flag, *b.flag, desc + " (default " + p.get(defaults) + ")");
      } else {
        b.text = &texts.emplace_back();
        b.option = c.app->add_option(p.flag, *b.text, desc)
                       ->default_str(p.get(defaults))
                       ->type_name(p.type_name);
      }
      c.bound.push_back(b);
    }
    return c;
  };

  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const std::vector<std::string> init_keys = {"init.center_codes", "init.normalize_codes"};
  const std::vector<std::string> train_keys = {
      "train.epochs", "train.batch",      "train.patience",     "train.eval_every",
      "train.lr",     "train.weight_decay", "train.lambda",     "train.reg_layer0",
      "train.freeze_items", "train.random_dim", "train.seed"};

  add("synth", "Generate a planted-topic synthetic world into <out>/synth",
      {"paths.out", "synth.users", "synth.items", "synth.topics", "synth.raw_dim", "synth.rate",
       "synth.min_user_interactions", "synth.temperature", "synth.spread", "synth.sigma_content",
       "synth.sigma_review", "synth.seed"});
  add("align", "Train the image-text contrastive head and write projected tables to <out>/align",
      {"paths.out", "paths.image", "paths.text", "align.proj_dim", "align.epochs", "align.batch",
       "align.lr", "align.temperature", "align.seed"});
  Command& compress_cmd =
      add("compress", "Train auto-encoders and write compressed codes to <out>/codes",
          with({"paths.out", "paths.image", "paths.text", "paths.reviews"}, {"pipeline.align", "compress.code_dim", "compress.epochs",
                       "compress.batch", "compress.lr", "compress.l2", "compress.seed"}));
  compress_cmd.app->add_option("--kind", compress_kind, "Table to compress: image|text|review|all")
      ->default_str("all");
  add("init-users",
      "Split interactions and build item/user layer-0 embeddings and the cross-relation export "
      "in <out>/raum",
      with({"paths.out", "paths.interactions", "split.train", "split.val", "split.test",
            "split.seed", "init.clusters"},
           init_keys));
  add("train", "Train one model into <out>/model/<mode>-L<layers>",
      with(with({"paths.out", "paths.interactions", "train.mode", "train.layers"}, init_keys),
           train_keys));
  Command& eval_cmd = add("eval", "Evaluate a trained model on the test split into <out>/eval",
                          {"paths.out", "paths.interactions", "train.mode", "train.layers",
                           "eval.ks"});
  eval_cmd.app->add_flag("--force", force, "Evaluate even when input fingerprints disagree");
  add("ablate", "Train and evaluate several modes on the stored codes and split",
      with(with({"paths.out", "paths.interactions", "ablate.modes", "train.layers", "eval.ks"},
                init_keys),
           train_keys));
  add("sweep-layers", "Train and evaluate one mode at several depths",
      with(with({"paths.out", "paths.interactions", "train.mode", "sweep.layers", "eval.ks"},
                init_keys),
           train_keys));

  std::string stage = "cli";
  try {
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      throw CliError("usage", kExitUsage, e.what());
    }

    Command* cmd = nullptr;
    for (Command& c : commands) {
      if (c.app->parsed()) cmd = &c;
    }
    stage = cmd->name;

    RunConfig cfg;
    if (const char* env = std::getenv("REVGRAPH_OUT"); env != nullptr && *env != '\0') {
      cfg.out_dir = env;
    }
    if (!cmd->config_file.empty()) {
      try {
        apply_config_file(cfg, cmd->config_file);
      } catch (const ParseError& e) {
        throw CliError("config", kExitUsage, e.what());
      }
    }
    for (const Bound& b : cmd->bound) {
      if (b.option->count() == 0) continue;
      try {
        b.param->set(cfg, b.param->is_switch ? as_text(*b.flag) : *b.text);
      } catch (const std::exception& e) {
        throw CliError("usage", kExitUsage, b.param->flag + ": " + e.what());
      }
    }
    cfg.force = force;
    if (cfg.out_dir.empty()) cfg.out_dir = "revgraph-out";
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw CliError("config", kExitUsage, e.what());
    }

    const Layout layout{cfg.out_dir};
    if (stage == "synth") {
      cmd_synth(cfg, layout, out);
    } else if (stage == "align") {
      cmd_align(cfg, layout, out);
    } else if (stage == "compress") {
      cmd_compress(cfg, layout, compress_kind, out);
    } else if (stage == "init-users") {
      cmd_init_users(cfg, layout, out);
    } else if (stage == "train") {
      cmd_train(cfg, layout, out);
    } else if (stage == "eval") {
      cmd_eval(cfg, layout, out, err);
    } else if (stage == "ablate") {
      cmd_ablate(cfg, layout, out);
    } else if (stage == "sweep-layers") {
      cmd_sweep(cfg, layout, out);
    }
    return kExitOk;
  } catch (const CliError& e) {
    err << "error stage=" << stage << " kind=" << e.kind << " message=\"" << one_line(e.what())
        << "\"\n";
    return e.code;
  } catch (const ParseError& e) {
    err << "error stage=" << stage << " kind=parse message=\"" << one_line(e.what()) << "\"\n";
    return kExitError;
  } catch (const std::invalid_argument& e) {
    err << "error stage=" << stage << " kind=invalid_argument message=\"" << one_line(e.what())
        << "\"\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error stage=" << stage << " kind=runtime message=\"" << one_line(e.what()) << "\"\n";
    return kExitError;
  }
}

}  // namespace revgraph
