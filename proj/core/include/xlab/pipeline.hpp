#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xlab/align.hpp"
#include "xlab/demo.hpp"
#include "xlab/model.hpp"
#include "xlab/patching.hpp"

namespace xlab {

// Exit statuses shared by the command functions and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitEmptyAnalysisSet = 4;

// One configuration drives the whole pipeline. Every random choice derives
// from `seed` through labeled substreams ("corpus", "model", "noise:{lang}",
// "control"), so a master seed pins every artifact byte.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // <= 0: hardware default
  bool force = false;

  std::filesystem::path out_dir = "out";
  std::filesystem::path corpus_dir;  // default: out_dir / "corpus"
  std::filesystem::path model_dir;   // default: out_dir / "model"

  DemoConfig demo;
  GenConfig gen;
  ModelSpec random_spec{32, 4, 4, 8, 64, 16, 64, NormKind::rms, 1e-5f};

  std::string eng_lang = "eng";
  std::string l2_lang = "fra";
  std::vector<std::string> metrics{"dali", "dali-st", "mexa-t"};
  bool dali_symmetric = false;

  std::string patch_mode = "both";  // equivalent | control | both
  std::vector<std::string> patch_positions{"last", "penult"};
  int patch_layer_lo = 0;
  int patch_layer_hi = -1;

  std::filesystem::path corpus_path() const {
    return corpus_dir.empty() ? out_dir / "corpus" : corpus_dir;
  }
  std::filesystem::path model_path() const {
    return model_dir.empty() ? out_dir / "model" : model_dir;
  }
  int effective_threads() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::filesystem::path& file);
// Seed/gen/demo wiring: derives the substream seeds and mirrors shared
// fields (languages, n_opt, premise length) from the demo section into the
// generator section when the latter was not set explicitly.
void finalize_run_config(RunConfig& cfg);

std::string run_config_to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);  // 16 hex chars
std::string meta_comment(const RunConfig& cfg);  // "# xlab vX seed=... config=..."
std::string meta_json(const RunConfig& cfg);

int cmd_gen_corpus(const RunConfig& cfg);
int cmd_build_model(const RunConfig& cfg, const std::string& kind);
int cmd_eval(const RunConfig& cfg);
int cmd_align(const RunConfig& cfg);
int cmd_patch(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

}  // namespace xlab
