#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xlab/model.hpp"
#include "xlab/vocab.hpp"

namespace xlab {

// Hand-constructed bilingual MCQA solver. No training: four single-head
// attention blocks implement bind (option <- preceding letter), gather
// (cue positions <- mean premise concept), fetch (answer slot <- cue), and
// match (answer slot accumulates letters weighted by concept similarity).
// A per-language embedding perturbation turns the second language into a
// degraded reader whose failures the patching experiments then repair.

inline constexpr float kDemoDefaultNoiseSigma = 0.7f;

struct DemoConfig {
  int n_concepts = 64;
  int concept_width = 16;
  int n_opt = 2;
  int premise_len = 3;
  int n_layers = 6;
  int layer_bind = 2;
  int layer_gather = 3;
  int layer_fetch = 4;
  int layer_match = 5;
  float gather_gain = 20.0f;
  float match_gain = 8.0f;
  std::vector<std::string> languages{"eng", "fra"};
  std::map<std::string, float> noise_scale{{"fra", kDemoDefaultNoiseSigma}};
  std::uint64_t seed = 0;
};

void validate_demo_config(const DemoConfig& cfg);

// Fixed prompt layout (0-based slots). Role flags ride on the position
// table, so every MCQA prompt must follow this shape exactly.
struct DemoLayout {
  int premise_len = 0;
  int n_opt = 0;

  int prompt_len() const { return premise_len + 4 + 2 * n_opt; }   // MCQA M
  int concat_len() const { return premise_len + 3; }               // 1-token options
  int bos_slot() const { return 0; }
  int premise_slot(int i) const { return 1 + i; }
  int sep_slot() const { return premise_len + 1; }
  int letter_slot(int i) const { return premise_len + 2 + 2 * i; }
  int option_slot(int i) const { return premise_len + 3 + 2 * i; }
  int colon_slot() const { return premise_len + 2 + 2 * n_opt; }
  int ans_slot() const { return premise_len + 3 + 2 * n_opt; }
};

// Residual-stream partition: [concept-context | concept-key | concept-echo |
// role flags | letter one-hots | position one-hots]. Language noise perturbs
// only the context section; the key section always carries the clean concept
// (what the match block's keys read); the echo section is written by the
// gather block's echo channel and read by nothing downstream.
struct DemoDims {
  int concept_width = 0;
  int n_opt = 0;
  int maxlen = 0;
  int ctx_off = 0;
  int key_off = 0;
  int echo_off = 0;
  int flag_off = 0;    // +0 premise, +1 option, +2 letter, +3 cue
  int letter_off = 0;
  int pos_off = 0;
  int width = 0;
};

DemoLayout demo_layout(const DemoConfig& cfg);
DemoDims demo_dims(const DemoConfig& cfg);

DemoVocab build_demo_vocab(const DemoConfig& cfg);

std::pair<Model, DemoVocab> build_demo_model(const DemoConfig& cfg);

// Adds a fixed seeded gaussian offset of scale sigma to the context half of
// every concept embedding of `lang`. Per-token and persistent, so failure
// sets are stable across instances. sigma == 0 returns the model unchanged.
Model perturb_language(const Model& model, const DemoVocab& vocab,
                       const std::string& lang, float sigma, std::uint64_t seed);

std::string demo_config_to_json(const DemoConfig& cfg);
DemoConfig parse_demo_config(const std::string& json_text);

}  // namespace xlab
