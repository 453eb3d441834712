#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xlab/numeric.hpp"

namespace xlab {

enum class NormKind { rms, identity };

struct ModelSpec {
  int width = 0;        // residual dimension d
  int n_layers = 0;     // number of blocks
  int n_heads = 0;
  int head_dim = 0;     // n_heads * head_dim == width
  int vocab = 0;
  int maxlen = 0;
  int mlp_hidden = 0;
  NormKind norm = NormKind::rms;
  float norm_eps = 1e-5f;
};

void validate_spec(const ModelSpec& spec);

struct Block {
  Matrix wq, wk, wv, wo;  // width x width, row-vector convention: out = x * W
  Matrix w1, w2;          // width x hidden, hidden x width
  std::vector<float> norm1, norm2;
};

// Immutable after construction; safe to share across threads.
struct Model {
  ModelSpec spec;
  Matrix embed;    // vocab x width
  Matrix pos;      // maxlen x width
  std::vector<Block> blocks;
  std::vector<float> final_norm;
  Matrix unembed;  // width x vocab
};

// Replacement of the residual state at (layer, position) applied right
// after block `layer` finishes (layer 0 = embedding output). Positions are
// 1-based, matching h_m with m in 1..M.
struct Patch {
  int layer = 0;
  int position = 1;
  std::vector<float> value;
};

struct LayerTrace {
  std::vector<int> tokens;
  int n_layers = 0;
  int width = 0;
  int vocab = 0;
  std::vector<float> states;  // (n_layers+1) * M * width, layer-major
  std::vector<float> logits;  // M * vocab

  int seq_len() const { return static_cast<int>(tokens.size()); }

  std::span<const float> state(int layer, int position) const;  // position 1-based
  std::span<const float> logits_at(int position) const;         // position 1-based
  std::span<const float> final_logits() const { return logits_at(seq_len()); }
};

Model build_random_model(const ModelSpec& spec, std::uint64_t seed);

// Weight files: <dir>/manifest.json plus <dir>/weights.bin holding raw
// little-endian f32 values, row-major, concatenated in manifest order.
// meta_json, when non-empty, is a serialized JSON object merged into the
// manifest's "meta" section (the pipeline records seed and config hash there).
void save_model(const Model& model, const std::filesystem::path& dir,
                const std::string& meta_json = "");
Model load_model(const std::filesystem::path& dir);

std::uint64_t model_checksum(const Model& model);

LayerTrace forward(const Model& model, std::span<const int> tokens);
LayerTrace patched_forward(const Model& model, std::span<const int> tokens,
                           std::span<const Patch> patches);

// h_position^layer by value; the trace is not modified.
std::vector<float> capture(const LayerTrace& trace, int layer, int position);

// Recomputes h^layer for all positions from the previous layer's states
// (same code path the forward pass uses). prev_states is M x width.
std::vector<float> apply_block(const Model& model, int layer,
                               std::span<const float> prev_states, int seq_len);

}  // namespace xlab
