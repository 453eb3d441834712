#include <benchmark/benchmark.h>

#include "xlab/numeric.hpp"
#include "xlab/rng.hpp"

namespace {

xlab::Matrix random_mat(xlab::Rng& rng, int r, int c) {
  xlab::Matrix m(r, c);
  for (float& v : m.data) v = rng.gaussian();
  return m;
}

void BM_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  xlab::Rng rng(1);
  auto a = random_mat(rng, n, n);
  auto b = random_mat(rng, n, n);
  for (auto _ : state) {
    auto c = xlab::matmul(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_softmax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  xlab::Rng rng(2);
  std::vector<float> logits(n);
  for (float& v : logits) v = rng.gaussian();
  std::vector<float> buf(n);
  for (auto _ : state) {
    buf = logits;
    xlab::softmax_inplace(buf);
    benchmark::DoNotOptimize(buf.data());
  }
}
BENCHMARK(BM_softmax)->Arg(16)->Arg(256);

void BM_cosine(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  xlab::Rng rng(3);
  std::vector<float> a(n), b(n);
  for (float& v : a) v = rng.gaussian();
  for (float& v : b) v = rng.gaussian();
  for (auto _ : state) {
    float s = xlab::cosine_similarity(a, b);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_cosine)->Arg(32)->Arg(512);

}  // namespace
