#include "xlab/numeric.hpp"

#include <cmath>

namespace xlab {

float cosine_similarity(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), Errc::dimension_mismatch,
          "cosine_similarity: lengths differ");
  require(!a.empty(), Errc::empty_input, "cosine_similarity: empty vectors");
  float dot = 0.0f, na = 0.0f, nb = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0f && nb > 0.0f, Errc::zero_norm_vector,
          "cosine_similarity: zero-norm input");
  float s = dot / (std::sqrt(na) * std::sqrt(nb));
  require(std::isfinite(s), Errc::non_finite, "cosine_similarity: non-finite result");
  if (s > 1.0f) s = 1.0f;
  if (s < -1.0f) s = -1.0f;
  return s;
}

void softmax_inplace(std::span<float> logits) {
  require(!logits.empty(), Errc::empty_input, "softmax: empty input");
  float mx = logits[0];
  for (float v : logits) {
    require(std::isfinite(v), Errc::non_finite, "softmax: non-finite logit");
    if (v > mx) mx = v;
  }
  float sum = 0.0f;
  for (float& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (float& v : logits) v /= sum;
}

std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, Errc::dimension_mismatch, "matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const float* arow = a.row(i);
    float* orow = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      float aik = arow[k];
      if (aik == 0.0f) continue;
      const float* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  require(all_finite(out.data), Errc::non_finite, "matmul: non-finite result");
  return out;
}

void matvec_accumulate(std::span<const float> x, const Matrix& m, std::span<float> out) {
  require(static_cast<int>(x.size()) == m.rows, Errc::dimension_mismatch,
          "matvec: vector length != matrix rows");
  require(static_cast<int>(out.size()) == m.cols, Errc::dimension_mismatch,
          "matvec: output length != matrix cols");
  for (int k = 0; k < m.rows; ++k) {
    float xk = x[k];
    if (xk == 0.0f) continue;
    const float* mrow = m.row(k);
    for (int j = 0; j < m.cols; ++j) out[j] += xk * mrow[j];
  }
}

std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps) {
  require(x.size() == gain.size(), Errc::dimension_mismatch, "rms_norm: lengths differ");
  require(!x.empty(), Errc::empty_input, "rms_norm: empty input");
  require(eps >= 0.0f, Errc::invalid_spec, "rms_norm: eps must be non-negative");
  float ms = 0.0f;
  for (float v : x) ms += v * v;
  ms /= static_cast<float>(x.size());
  if (ms + eps == 0.0f) return std::vector<float>(x.size(), 0.0f);
  float inv = 1.0f / std::sqrt(ms + eps);
  std::vector<float> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gain[i] * inv;
  require(all_finite(out), Errc::non_finite, "rms_norm: non-finite result");
  return out;
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace xlab
