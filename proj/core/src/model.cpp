#include "xlab/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "xlab/rng.hpp"

namespace xlab {

void validate_spec(const ModelSpec& spec) {
  require(spec.width >= 1, Errc::invalid_spec, "width must be >= 1");
  require(spec.n_layers >= 1, Errc::invalid_spec, "n_layers must be >= 1");
  require(spec.n_heads >= 1 && spec.head_dim >= 1, Errc::invalid_spec,
          "heads and head_dim must be >= 1");
  require(spec.n_heads * spec.head_dim == spec.width, Errc::invalid_spec,
          "n_heads * head_dim must equal width");
  require(spec.vocab >= 2, Errc::invalid_spec, "vocab must be >= 2");
  require(spec.maxlen >= 1, Errc::invalid_spec, "maxlen must be >= 1");
  require(spec.mlp_hidden >= 1, Errc::invalid_spec, "mlp_hidden must be >= 1");
  require(spec.norm_eps >= 0.0f, Errc::invalid_spec, "norm_eps must be >= 0");
}

std::span<const float> LayerTrace::state(int layer, int position) const {
  require(layer >= 0 && layer <= n_layers, Errc::index_out_of_range,
          "trace layer out of range");
  require(position >= 1 && position <= seq_len(), Errc::index_out_of_range,
          "trace position out of range");
  size_t off = (static_cast<size_t>(layer) * seq_len() + (position - 1)) * width;
  return {states.data() + off, static_cast<size_t>(width)};
}

std::span<const float> LayerTrace::logits_at(int position) const {
  require(position >= 1 && position <= seq_len(), Errc::index_out_of_range,
          "logits position out of range");
  return {logits.data() + static_cast<size_t>(position - 1) * vocab,
          static_cast<size_t>(vocab)};
}

namespace {

void fill_gaussian(Rng& rng, float scale, std::vector<float>& out) {
  for (float& v : out) v = rng.gaussian() * scale;
}

void normalize_into(const ModelSpec& spec, std::span<const float> x,
                    std::span<const float> gain, std::span<float> out) {
  if (spec.norm == NormKind::identity) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  float ms = 0.0f;
  for (float v : x) ms += v * v;
  ms /= static_cast<float>(x.size());
  float inv = 1.0f / std::sqrt(ms + spec.norm_eps);
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gain[i] * inv;
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

}  // namespace

Model build_random_model(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Model m;
  m.spec = spec;
  const float scale = 1.0f / std::sqrt(static_cast<float>(spec.width));
  Rng rng(derive_seed(seed, "random_model"));
  m.embed = Matrix(spec.vocab, spec.width);
  fill_gaussian(rng, scale, m.embed.data);
  m.pos = Matrix(spec.maxlen, spec.width);
  fill_gaussian(rng, scale, m.pos.data);
  m.blocks.resize(spec.n_layers);
  for (Block& b : m.blocks) {
    b.wq = Matrix(spec.width, spec.width);
    b.wk = Matrix(spec.width, spec.width);
    b.wv = Matrix(spec.width, spec.width);
    b.wo = Matrix(spec.width, spec.width);
    b.w1 = Matrix(spec.width, spec.mlp_hidden);
    b.w2 = Matrix(spec.mlp_hidden, spec.width);
    fill_gaussian(rng, scale, b.wq.data);
    fill_gaussian(rng, scale, b.wk.data);
    fill_gaussian(rng, scale, b.wv.data);
    fill_gaussian(rng, scale, b.wo.data);
    fill_gaussian(rng, scale, b.w1.data);
    fill_gaussian(rng, scale, b.w2.data);
    b.norm1.resize(spec.width);
    b.norm2.resize(spec.width);
    fill_gaussian(rng, scale, b.norm1);
    fill_gaussian(rng, scale, b.norm2);
  }
  m.final_norm.resize(spec.width);
  fill_gaussian(rng, scale, m.final_norm);
  m.unembed = Matrix(spec.width, spec.vocab);
  fill_gaussian(rng, scale, m.unembed.data);
  return m;
}

std::vector<float> apply_block(const Model& model, int layer,
                               std::span<const float> prev_states, int seq_len) {
  const ModelSpec& spec = model.spec;
  require(layer >= 1 && layer <= spec.n_layers, Errc::index_out_of_range,
          "apply_block: layer out of range");
  require(static_cast<int>(prev_states.size()) == seq_len * spec.width,
          Errc::dimension_mismatch, "apply_block: bad state size");
  const Block& blk = model.blocks[layer - 1];
  const int d = spec.width;
  const int hd = spec.head_dim;
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

  auto prev = [&](int p) {  // 0-based position
    return prev_states.subspan(static_cast<size_t>(p) * d, d);
  };

  // Pre-norm once per position, then Q/K/V projections.
  std::vector<float> normed(static_cast<size_t>(seq_len) * d);
  std::vector<float> q(normed.size()), k(normed.size()), v(normed.size());
  for (int p = 0; p < seq_len; ++p) {
    std::span<float> n1{normed.data() + static_cast<size_t>(p) * d, static_cast<size_t>(d)};
    normalize_into(spec, prev(p), blk.norm1, n1);
    matvec_accumulate(n1, blk.wq, {q.data() + static_cast<size_t>(p) * d, static_cast<size_t>(d)});
    matvec_accumulate(n1, blk.wk, {k.data() + static_cast<size_t>(p) * d, static_cast<size_t>(d)});
    matvec_accumulate(n1, blk.wv, {v.data() + static_cast<size_t>(p) * d, static_cast<size_t>(d)});
  }

  std::vector<float> out(prev_states.begin(), prev_states.end());
  std::vector<float> scores;
  std::vector<float> attn(static_cast<size_t>(d));
  std::vector<float> mid(static_cast<size_t>(d));
  std::vector<float> hidden(static_cast<size_t>(spec.mlp_hidden));
  std::vector<float> n2(static_cast<size_t>(d));
  std::vector<float> mlp_out(static_cast<size_t>(d));
  for (int p = 0; p < seq_len; ++p) {
    std::fill(attn.begin(), attn.end(), 0.0f);
    for (int h = 0; h < spec.n_heads; ++h) {
      const int hoff = h * hd;
      const float* qp = q.data() + static_cast<size_t>(p) * d + hoff;
      scores.assign(static_cast<size_t>(p) + 1, 0.0f);
      for (int j = 0; j <= p; ++j) {
        const float* kj = k.data() + static_cast<size_t>(j) * d + hoff;
        float s = 0.0f;
        for (int t = 0; t < hd; ++t) s += qp[t] * kj[t];
        scores[j] = s * inv_sqrt_hd;
      }
      softmax_inplace(scores);
      for (int j = 0; j <= p; ++j) {
        const float w = scores[j];
        const float* vj = v.data() + static_cast<size_t>(j) * d + hoff;
        for (int t = 0; t < hd; ++t) attn[hoff + t] += w * vj[t];
      }
    }
    // attention output projection, residual add
    std::fill(mid.begin(), mid.end(), 0.0f);
    matvec_accumulate(attn, blk.wo, mid);
    auto xp = prev(p);
    for (int t = 0; t < d; ++t) mid[t] += xp[t];
    // MLP on the post-attention state
    normalize_into(spec, mid, blk.norm2, n2);
    std::fill(hidden.begin(), hidden.end(), 0.0f);
    matvec_accumulate(n2, blk.w1, hidden);
    for (float& hval : hidden) hval = gelu(hval);
    std::fill(mlp_out.begin(), mlp_out.end(), 0.0f);
    matvec_accumulate(hidden, blk.w2, mlp_out);
    float* op = out.data() + static_cast<size_t>(p) * d;
    for (int t = 0; t < d; ++t) op[t] = mid[t] + mlp_out[t];
  }
  return out;
}

namespace {

LayerTrace run_forward(const Model& model, std::span<const int> tokens,
                       std::span<const Patch> patches) {
  const ModelSpec& spec = model.spec;
  const int M = static_cast<int>(tokens.size());
  require(M >= 1, Errc::empty_input, "forward: empty token sequence");
  require(M <= spec.maxlen, Errc::sequence_too_long, "forward: sequence exceeds maxlen");
  for (int t : tokens) {
    require(t >= 0 && t < spec.vocab, Errc::token_out_of_range,
            "forward: token id out of range");
  }
  for (const Patch& pt : patches) {
    require(pt.layer >= 0 && pt.layer <= spec.n_layers, Errc::index_out_of_range,
            "patch layer out of range");
    require(pt.position >= 1 && pt.position <= M, Errc::index_out_of_range,
            "patch position out of range");
    require(static_cast<int>(pt.value.size()) == spec.width, Errc::dimension_mismatch,
            "patch width mismatch");
    require(all_finite(pt.value), Errc::non_finite, "patch value must be finite");
    for (const Patch& other : patches) {
      if (&other != &pt) {
        require(!(other.layer == pt.layer && other.position == pt.position),
                Errc::duplicate_patch_site, "one patch per (layer, position)");
      }
    }
  }

  const int d = spec.width;
  LayerTrace trace;
  trace.tokens.assign(tokens.begin(), tokens.end());
  trace.n_layers = spec.n_layers;
  trace.width = d;
  trace.vocab = spec.vocab;
  trace.states.resize(static_cast<size_t>(spec.n_layers + 1) * M * d);
  trace.logits.resize(static_cast<size_t>(M) * spec.vocab);

  auto layer_states = [&](int layer) {
    return std::span<float>(trace.states.data() + static_cast<size_t>(layer) * M * d,
                            static_cast<size_t>(M) * d);
  };
  auto apply_patches_at = [&](int layer) {
    for (const Patch& pt : patches) {
      if (pt.layer != layer) continue;
      float* dst = trace.states.data() +
                   (static_cast<size_t>(layer) * M + (pt.position - 1)) * d;
      std::memcpy(dst, pt.value.data(), sizeof(float) * d);
    }
  };

  // h^0 = embed + pos
  {
    auto h0 = layer_states(0);
    for (int p = 0; p < M; ++p) {
      const float* e = model.embed.row(tokens[p]);
      const float* ps = model.pos.row(p);
      float* dst = h0.data() + static_cast<size_t>(p) * d;
      for (int t = 0; t < d; ++t) dst[t] = e[t] + ps[t];
    }
    apply_patches_at(0);
  }

  for (int layer = 1; layer <= spec.n_layers; ++layer) {
    std::vector<float> next = apply_block(model, layer, layer_states(layer - 1), M);
    std::copy(next.begin(), next.end(), layer_states(layer).begin());
    apply_patches_at(layer);
  }

  // logits over V at every position, from the final residual state
  {
    auto hf = layer_states(spec.n_layers);
    std::vector<float> nf(static_cast<size_t>(d));
    for (int p = 0; p < M; ++p) {
      normalize_into(spec, hf.subspan(static_cast<size_t>(p) * d, d), model.final_norm, nf);
      std::span<float> lg{trace.logits.data() + static_cast<size_t>(p) * spec.vocab,
                          static_cast<size_t>(spec.vocab)};
      std::fill(lg.begin(), lg.end(), 0.0f);
      matvec_accumulate(nf, model.unembed, lg);
    }
  }

  require(all_finite(trace.states), Errc::non_finite, "forward: non-finite state");
  require(all_finite(trace.logits), Errc::non_finite, "forward: non-finite logits");
  return trace;
}

}  // namespace

LayerTrace forward(const Model& model, std::span<const int> tokens) {
  return run_forward(model, tokens, {});
}

LayerTrace patched_forward(const Model& model, std::span<const int> tokens,
                           std::span<const Patch> patches) {
  return run_forward(model, tokens, patches);
}

std::vector<float> capture(const LayerTrace& trace, int layer, int position) {
  auto s = trace.state(layer, position);
  return {s.begin(), s.end()};
}

namespace {

void hash_tensor(std::uint64_t& h, std::span<const float> t) {
  h = fnv1a64(t.data(), t.size() * sizeof(float), h);
}

}  // namespace

std::uint64_t model_checksum(const Model& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  hash_tensor(h, m.embed.data);
  hash_tensor(h, m.pos.data);
  for (const Block& b : m.blocks) {
    hash_tensor(h, b.wq.data);
    hash_tensor(h, b.wk.data);
    hash_tensor(h, b.wv.data);
    hash_tensor(h, b.wo.data);
    hash_tensor(h, b.w1.data);
    hash_tensor(h, b.w2.data);
    hash_tensor(h, b.norm1);
    hash_tensor(h, b.norm2);
  }
  hash_tensor(h, m.final_norm);
  hash_tensor(h, m.unembed.data);
  return h;
}

}  // namespace xlab
