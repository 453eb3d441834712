#include <benchmark/benchmark.h>

#include "xlab/corpus.hpp"
#include "xlab/demo.hpp"
#include "xlab/model.hpp"
#include "xlab/rng.hpp"

namespace {

void BM_forward_random(benchmark::State& state) {
  xlab::ModelSpec spec;
  spec.width = 64;
  spec.n_layers = static_cast<int>(state.range(0));
  spec.n_heads = 4;
  spec.head_dim = 16;
  spec.vocab = 128;
  spec.maxlen = 32;
  spec.mlp_hidden = 128;
  xlab::Model model = xlab::build_random_model(spec, 5);
  xlab::Rng rng(6);
  std::vector<int> tokens(24);
  for (int& t : tokens) t = static_cast<int>(rng.below(spec.vocab));
  for (auto _ : state) {
    auto trace = xlab::forward(model, tokens);
    benchmark::DoNotOptimize(trace.logits.data());
  }
}
BENCHMARK(BM_forward_random)->Arg(2)->Arg(6);

void BM_forward_demo(benchmark::State& state) {
  xlab::DemoConfig cfg;
  auto [model, vocab] = xlab::build_demo_model(cfg);
  xlab::GenConfig gen;
  gen.n_instances = 1;
  gen.seed = 9;
  auto corpus = xlab::generate_parallel_corpus(gen, vocab);
  auto enc = xlab::encode_mcqa(corpus.instances("fra")[0], vocab.tokenizer,
                               model.spec.maxlen);
  for (auto _ : state) {
    auto trace = xlab::forward(model, enc.tokens);
    benchmark::DoNotOptimize(trace.logits.data());
  }
}
BENCHMARK(BM_forward_demo);

void BM_patched_forward_demo(benchmark::State& state) {
  xlab::DemoConfig cfg;
  auto [model, vocab] = xlab::build_demo_model(cfg);
  xlab::GenConfig gen;
  gen.n_instances = 1;
  gen.seed = 9;
  auto corpus = xlab::generate_parallel_corpus(gen, vocab);
  auto eng = xlab::encode_mcqa(corpus.instances("eng")[0], vocab.tokenizer,
                               model.spec.maxlen);
  auto fra = xlab::encode_mcqa(corpus.instances("fra")[0], vocab.tokenizer,
                               model.spec.maxlen);
  auto donor = xlab::forward(model, eng.tokens);
  xlab::Patch patch{cfg.layer_gather, fra.penult,
                    xlab::capture(donor, cfg.layer_gather, fra.penult)};
  for (auto _ : state) {
    auto trace = xlab::patched_forward(model, fra.tokens, {&patch, 1});
    benchmark::DoNotOptimize(trace.logits.data());
  }
}
BENCHMARK(BM_patched_forward_demo);

}  // namespace
