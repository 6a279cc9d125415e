#pragma once

// The revgraph command line: synth | compress | align | init-users | train |
// eval | ablate | sweep-layers. Every stage reads its inputs from and writes
// its outputs under one output root (--out, else $REVGRAPH_OUT, else
// ./revgraph-out).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "revgraph/config.hpp"

namespace revgraph {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitFingerprint = 4;

// args[0] is the program name. Errors are reported on err as a single line
//   error stage=<name> kind=<kind> message="<text>"
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Loads a TOML-like file ("[section]" headers, "key = value" lines, '#'
// comments) into cfg. Keys are "section.key"; unknown keys are errors.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Artifact locations under an output root.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path synth() const { return root / "synth"; }
  std::filesystem::path align() const { return root / "align"; }
  std::filesystem::path codes() const { return root / "codes"; }
  std::filesystem::path raum() const { return root / "raum"; }
  std::filesystem::path split() const { return raum() / "split.tsv"; }
  std::filesystem::path model(InitMode mode, std::size_t layers) const;
  std::filesystem::path eval(InitMode mode, std::size_t layers) const;
  std::filesystem::path ablate() const { return root / "ablate"; }
  std::filesystem::path sweep() const { return root / "sweep"; }
};

// Directory name of one trained model, e.g. "printf-L7"; bprmf is always L0.
std::string run_name(InitMode mode, std::size_t layers);

}  // namespace revgraph
