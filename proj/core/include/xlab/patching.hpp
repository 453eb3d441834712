#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlab/corpus.hpp"
#include "xlab/eval.hpp"
#include "xlab/model.hpp"

namespace xlab {

enum class PatchMode { equivalent, control };
enum class TokenPos { last, penult };

const char* patch_mode_name(PatchMode mode);
const char* token_pos_name(TokenPos pos);

struct PatchExperimentConfig {
  bool run_equivalent = true;
  bool run_control = true;
  std::vector<TokenPos> positions{TokenPos::last, TokenPos::penult};
  int layer_lo = 0;
  int layer_hi = -1;  // -1: model's top layer
  std::uint64_t control_seed = 0;
  int threads = 1;
};

struct PatchResult {
  std::string id;
  PatchMode mode = PatchMode::equivalent;
  TokenPos position = TokenPos::last;
  int layer = 0;
  std::vector<float> target_logits;  // post-patch, option order
  bool flipped = false;              // gold strictly beats every other target
  double entropy = 0.0;              // decision entropy of the post-patch logits
  int pre_predicted = 0;             // 1-based index predicted before patching
  int gold = 0;                      // 1-based
};

// Eq.-6 decision entropy: softmax over the target-token logits only,
// then -sum p ln p. Range [0, ln n_opt].
double decision_entropy(std::span<const float> target_logits);

// Seeded uniform choice among correctly-answered English instances that
// share the gold letter and differ in id. Deterministic given the seed; one
// donor per instance is reused across every layer and position.
struct DonorCandidate {
  std::string id;
  int gold = 0;  // 1-based option index
  bool correct = false;
};
std::string select_control_donor(const std::string& tf_id, int tf_gold,
                                 const std::vector<DonorCandidate>& english_pool,
                                 std::uint64_t seed);

// Runs the layer x position sweep over the TF instances. Donor passes run
// once per (instance, mode); each cell patches a single site.
std::vector<PatchResult> patch_sweep(const Model& model, const ParallelCorpus& corpus,
                                     const Tokenizer& tok, const std::string& eng_lang,
                                     const std::string& l2_lang,
                                     const std::vector<std::string>& tf_ids,
                                     const PatchExperimentConfig& cfg);

struct SweepCell {
  PatchMode mode = PatchMode::equivalent;
  TokenPos position = TokenPos::last;
  int layer = 0;
  int n = 0;
  int flips = 0;
  double flip_rate = 0.0;
  double mean_gold_logit = 0.0;
  double mean_orig_logit = 0.0;  // logit of the pre-patch (wrong) prediction
  double mean_entropy_all = 0.0;
  std::optional<double> mean_entropy_flipped;  // empty when the cell has no flips
};

std::vector<SweepCell> flip_stats(const std::vector<PatchResult>& results);

struct DeltaCell {
  TokenPos position = TokenPos::last;
  int layer = 0;
  double delta = 0.0;  // equivalent rate - control rate
};

std::vector<DeltaCell> delta_flip(const std::vector<SweepCell>& equivalent,
                                  const std::vector<SweepCell>& control);

struct EntropyCell {
  TokenPos position = TokenPos::last;
  int layer = 0;
  int n_equivalent_flips = 0;
  std::optional<double> mean_entropy_equivalent;
  int n_control_flips = 0;
  std::optional<double> mean_entropy_control;
};

// Per-(position, layer) mean decision entropy over the flipped subsets of
// both modes; cells without flips carry empty means.
std::vector<EntropyCell> entropy_comparison(const std::vector<PatchResult>& equivalent,
                                            const std::vector<PatchResult>& control);

}  // namespace xlab
