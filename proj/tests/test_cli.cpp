#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "revgraph/cli.hpp"
#include "revgraph/config.hpp"
#include "support.hpp"

using namespace revgraph;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "revgraph");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallWorld{"--users", "80",  "--items", "50",
                                           "--topics", "4",  "--raw-dim", "24",
                                           "--rate",  "0.2", "--seed", "3"};

void run_pipeline(const fs::path& out) {
  const std::string o = out.string();
  std::vector<std::string> synth{"synth", "--out", o};
  synth.insert(synth.end(), kSmallWorld.begin(), kSmallWorld.end());
  ASSERT_EQ(cli(synth).code, 0);
  ASSERT_EQ(cli({"compress", "--out", o, "--kind", "all", "--code-dim", "6", "--epochs", "3"}).code, 0);
  ASSERT_EQ(cli({"init-users", "--out", o, "--clusters", "3"}).code, 0);
  ASSERT_EQ(cli({"train", "--out", o, "--mode", "printf", "--layers", "2", "--epochs", "4",
                 "--batch", "256"}).code,
            0);
  const Outcome e = cli({"eval", "--out", o, "--mode", "printf", "--layers", "2"});
  ASSERT_EQ(e.code, 0) << e.err;
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

}  // namespace

TEST(Fingerprint, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Fingerprint, DependsOnSettingsNotPaths) {
  RunConfig a, b;
  b.out_dir = "/somewhere/else";
  b.interactions = "x.tsv";
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.lr = 0.5;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.canonical("train"), RunConfig{}.canonical("train"));
  EXPECT_NE(a.canonical("train").find("train.lr=0.001"), std::string::npos);
}

TEST(Config, ListsRoundTrip) {
  EXPECT_EQ(parse_size_list("1,3,5"), (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_EQ(format_size_list({5, 10}), "5,10");
  EXPECT_EQ(parse_mode_list("printf,lightgcn"), (std::vector<InitMode>{InitMode::kPrintf, InitMode::kNone}));
  EXPECT_THROW(parse_size_list("1,,x"), std::invalid_argument);
}

TEST(Config, FileSetsValuesAndRejectsUnknownKeys) {
  const fs::path dir = scratch_dir("config");
  write(dir / "ok.toml", "# comment\n[train]\nepochs = 12\nlr = 0.01\n\n[synth]\nusers = 42\n");
  RunConfig c;
  apply_config_file(c, dir / "ok.toml");
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.world.num_users, 42u);
  write(dir / "bad.toml", "[train]\nbogus = 1\n");
  EXPECT_THROW(apply_config_file(c, dir / "bad.toml"), std::exception);
}

TEST(Cli, FlagsOverrideConfigFile) {
  const fs::path dir = scratch_dir("cli_precedence");
  write(dir / "c.toml", "[synth]\nusers = 30\nitems = 20\nraw_dim = 8\ntopics = 2\nrate = 0.3\n");
  const Outcome r = cli({"synth", "--out", (dir / "o").string(), "--config", (dir / "c.toml").string(),
                         "--items", "25"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string summary = read_file(dir / "o" / "synth" / "world.json");
  EXPECT_NE(summary.find("\"num_users\": 30"), std::string::npos);
  EXPECT_NE(summary.find("\"num_items\": 25"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--layers", "12"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--mode", "best"}).code, kExitUsage);
  EXPECT_EQ(cli({"synth", "--no-such-flag"}).code, kExitUsage);
}

TEST(Cli, MissingArtifactsNameTheStage) {
  const fs::path dir = scratch_dir("cli_missing");
  const std::string o = dir.string();
  const Outcome c = cli({"compress", "--out", o});
  EXPECT_EQ(c.code, kExitMissingArtifact);
  EXPECT_NE(c.err.find("run stage synth first"), std::string::npos) << c.err;
  EXPECT_EQ(c.err.rfind("error stage=compress kind=", 0), 0u) << c.err;
  EXPECT_EQ(std::count(c.err.begin(), c.err.end(), '\n'), 1);
  EXPECT_EQ(cli({"eval", "--out", o}).code, kExitMissingArtifact);
  EXPECT_EQ(cli({"train", "--out", o}).code, kExitMissingArtifact);
}

TEST(Cli, PipelineWritesEveryArtifact) {
  const fs::path dir = scratch_dir("cli_pipeline");
  run_pipeline(dir);
  for (const char* rel : {"synth/interactions.tsv", "codes/image.emb", "codes/text.emb",
                          "codes/review.emb", "raum/split.tsv", "raum/item_init.emb",
                          "raum/user_init.emb", "raum/cross_relation.tsv",
                          "raum/cross_relation.tsv.clusters.tsv", "raum/user_init_source.tsv",
                          "model/printf-L2/checkpoint.bin", "model/printf-L2/trace.tsv",
                          "eval/printf-L2/report.tsv", "eval/printf-L2/report.json"}) {
    EXPECT_TRUE(fs::exists(dir / rel)) << rel;
  }
  const std::string report = read_file(dir / "eval/printf-L2/report.tsv");
  EXPECT_NE(report.find("user\tR@5\tN@5\tR@10\tN@10\n"), std::string::npos);
}

TEST(Cli, RerunsAreByteIdentical) {
  const fs::path a = scratch_dir("cli_det_a"), b = scratch_dir("cli_det_b");
  run_pipeline(a);
  run_pipeline(b);
  for (const char* rel : {"eval/printf-L2/report.tsv", "eval/printf-L2/report.json",
                          "model/printf-L2/checkpoint.bin", "raum/user_init.emb"}) {
    const std::string x = read_file(a / rel);
    EXPECT_FALSE(x.empty()) << rel;
    EXPECT_EQ(x, read_file(b / rel)) << rel;
  }
}

TEST(Cli, EvalRefusesCheckpointFromOtherSplit) {
  const fs::path dir = scratch_dir("cli_mismatch");
  run_pipeline(dir);
  const std::string o = dir.string();
  // Re-split with another seed; the checkpoint now belongs to stale data.
  ASSERT_EQ(cli({"init-users", "--out", o, "--clusters", "3", "--split-seed", "9"}).code, 0);
  const Outcome refused = cli({"eval", "--out", o, "--mode", "printf", "--layers", "2"});
  EXPECT_EQ(refused.code, kExitFingerprint);
  EXPECT_NE(refused.err.find("kind=fingerprint"), std::string::npos) << refused.err;
  const Outcome forced = cli({"eval", "--out", o, "--mode", "printf", "--layers", "2", "--force"});
  EXPECT_EQ(forced.code, 0) << forced.err;
}
