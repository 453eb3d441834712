#include <benchmark/benchmark.h>

#include "xlab/align.hpp"
#include "xlab/rng.hpp"

namespace {

std::vector<std::vector<float>> random_set(xlab::Rng& rng, int n, int width) {
  std::vector<std::vector<float>> out(n, std::vector<float>(width));
  for (auto& v : out) {
    for (float& x : v) x = rng.gaussian();
  }
  return out;
}

void BM_mexa_flags(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  xlab::Rng rng(7);
  auto u = random_set(rng, n, 32);
  auto v = random_set(rng, n, 32);
  for (auto _ : state) {
    auto res = xlab::mexa_flags(u, v);
    benchmark::DoNotOptimize(res.fraction);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_mexa_flags)->Arg(8)->Arg(64);

void BM_dali_bit(benchmark::State& state) {
  xlab::Rng rng(8);
  xlab::InstancePairEmbeddings pair;
  const int layers = 6, width = 32, n_opt = 4;
  for (int o = 0; o < n_opt; ++o) {
    xlab::LayerEmbeddings e1, e2;
    e1.n_layers = e2.n_layers = layers;
    e1.width = e2.width = width;
    e1.rows.resize((layers + 1) * width);
    e2.rows.resize((layers + 1) * width);
    for (float& v : e1.rows) v = rng.gaussian();
    for (float& v : e2.rows) v = rng.gaussian();
    pair.l1.push_back(std::move(e1));
    pair.l2.push_back(std::move(e2));
  }
  for (auto _ : state) {
    int bit = 0;
    for (int layer = 0; layer <= layers; ++layer) {
      bit += xlab::dali_strict_bit(pair, layer);
    }
    benchmark::DoNotOptimize(bit);
  }
}
BENCHMARK(BM_dali_bit);

}  // namespace
