#pragma once

#include <span>
#include <vector>

#include "xlab/errors.hpp"

namespace xlab {

// All kernels run in 32-bit floats with a fixed sequential accumulation
// order. Identical inputs therefore give bit-identical outputs across runs
// and thread counts, which the patching no-op checks rely on.

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {
    require(r > 0 && c > 0, Errc::invalid_spec, "matrix dimensions must be positive");
  }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  std::span<const float> row_span(int r) const { return {row(r), static_cast<size_t>(cols)}; }
  size_t size() const { return data.size(); }
};

// dot(a,b) / (|a||b|), clamped to [-1, 1] so strict downstream comparisons
// never see 1+eps artifacts.
float cosine_similarity(std::span<const float> a, std::span<const float> b);

// Max-subtracted softmax; output sums to 1 within 1e-6.
std::vector<float> softmax(std::span<const float> logits);
void softmax_inplace(std::span<float> logits);

Matrix matmul(const Matrix& a, const Matrix& b);

// out = row_vector(x) * m, sequential accumulation over x.
void matvec_accumulate(std::span<const float> x, const Matrix& m, std::span<float> out);

// x_i * gain_i / sqrt(mean(x^2) + eps)
std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps);

bool all_finite(std::span<const float> values);

}  // namespace xlab
