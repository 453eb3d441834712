#include <doctest.h>

#include <cmath>
#include <set>

#include "xlab/corpus.hpp"
#include "xlab/demo.hpp"
#include "xlab/eval.hpp"
#include "xlab/rng.hpp"

using namespace xlab;

namespace {

DemoConfig clean_config(std::uint64_t seed = 21) {
  DemoConfig cfg;
  cfg.noise_scale.clear();
  cfg.seed = seed;
  return cfg;
}

ParallelCorpus make_corpus(const DemoVocab& vocab, int n, std::uint64_t seed) {
  GenConfig g;
  g.n_instances = n;
  g.seed = seed;
  return generate_parallel_corpus(g, vocab);
}

}  // namespace

TEST_CASE("demo config validation") {
  DemoConfig cfg;
  validate_demo_config(cfg);

  DemoConfig bad = cfg;
  bad.layer_match = 7;  // > n_layers
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
  bad = cfg;
  bad.layer_gather = 2;  // == layer_bind
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
  bad = cfg;
  bad.languages = {"fra"};
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
  bad = cfg;
  bad.noise_scale["eng"] = 1.0f;
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
  bad = cfg;
  bad.n_opt = 5;
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
  bad = cfg;
  bad.n_concepts = 1;
  CHECK_THROWS_AS(validate_demo_config(bad), Error);
}

TEST_CASE("demo layout slots and derived dimensions") {
  DemoConfig cfg;
  DemoLayout layout = demo_layout(cfg);
  CHECK(layout.prompt_len() == 11);
  CHECK(layout.concat_len() == 6);
  CHECK(layout.bos_slot() == 0);
  CHECK(layout.sep_slot() == 4);
  CHECK(layout.letter_slot(0) == 5);
  CHECK(layout.option_slot(0) == 6);
  CHECK(layout.letter_slot(1) == 7);
  CHECK(layout.option_slot(1) == 8);
  CHECK(layout.colon_slot() == 9);
  CHECK(layout.ans_slot() == 10);

  DemoDims dims = demo_dims(cfg);
  CHECK(dims.width == 3 * 16 + 4 + 2 + 11);
  CHECK(dims.maxlen == 11);
}

TEST_CASE("demo vocab: shared letters, disjoint concepts") {
  DemoVocab vocab = build_demo_vocab(DemoConfig{});
  CHECK(vocab.tokenizer.letters.size() == 2);
  CHECK(vocab.tokenizer.id_to_token[vocab.tokenizer.letters[0]] == "A");
  CHECK(vocab.tokenizer.id_to_token[vocab.tokenizer.letters[1]] == "B");
  std::set<int> eng_ids, fra_ids;
  for (int k = 0; k < vocab.n_concepts; ++k) {
    eng_ids.insert(vocab.concept_id(k, "eng"));
    fra_ids.insert(vocab.concept_id(k, "fra"));
  }
  CHECK(eng_ids.size() == 64);
  for (int id : fra_ids) CHECK(eng_ids.count(id) == 0);
  CHECK_THROWS_AS(vocab.concept_id(0, "deu"), Error);
}

TEST_CASE("demo build is deterministic") {
  DemoConfig cfg;
  cfg.seed = 5;
  auto [m1, v1] = build_demo_model(cfg);
  auto [m2, v2] = build_demo_model(cfg);
  CHECK(model_checksum(m1) == model_checksum(m2));
  cfg.seed = 6;
  auto [m3, v3] = build_demo_model(cfg);
  CHECK(model_checksum(m1) != model_checksum(m3));
}

TEST_CASE("clean demo answers every English instance correctly") {
  DemoConfig cfg = clean_config();
  auto [model, vocab] = build_demo_model(cfg);
  ParallelCorpus corpus = make_corpus(vocab, 400, 22);
  EvalReport report = evaluate_corpus(model, corpus, vocab.tokenizer, "eng", "fra", 4);
  CHECK(report.accuracy_eng == 1.0);
  CHECK(report.accuracy_l2 == 1.0);  // sigma 0 everywhere
  CHECK(report.tf_ids.empty());
  CHECK(report.excluded_ids.empty());
}

TEST_CASE("gold-letter margin grows monotonically in the match gain") {
  float prev_margin = -1.0f;
  for (float beta : {2.0f, 4.0f, 8.0f}) {
    DemoConfig cfg = clean_config(77);
    cfg.match_gain = beta;
    auto [model, vocab] = build_demo_model(cfg);
    ParallelCorpus corpus = make_corpus(vocab, 1, 23);
    PromptEncoding enc =
        encode_mcqa(corpus.instances("eng")[0], vocab.tokenizer, model.spec.maxlen);
    DecisionRecord rec = score_mcqa(model, enc);
    REQUIRE(rec.correct);
    float margin = rec.target_logits[rec.gold - 1];
    for (int i = 0; i < static_cast<int>(rec.target_logits.size()); ++i) {
      if (i != rec.gold - 1) margin -= rec.target_logits[i];
    }
    CHECK(margin > prev_margin);
    prev_margin = margin;
  }
}

TEST_CASE("zero-concept premise gives exactly equal letter logits") {
  DemoConfig cfg = clean_config();
  auto [model, vocab] = build_demo_model(cfg);
  Instance inst;
  inst.id = "sep-premise";
  inst.lang = "eng";
  inst.premise = "[SEP] [SEP] [SEP]";
  inst.options = {"c0@eng", "c1@eng"};
  inst.gold = 1;
  PromptEncoding enc = encode_mcqa(inst, vocab.tokenizer, model.spec.maxlen);
  DecisionRecord rec = score_mcqa(model, enc);
  CHECK(rec.target_logits[0] == rec.target_logits[1]);
  CHECK(rec.tie);
  CHECK(rec.predicted == 1);
}

TEST_CASE("perturb_language: identity at sigma 0, determinism, rejection") {
  DemoConfig cfg = clean_config(9);
  auto [model, vocab] = build_demo_model(cfg);
  Model same = perturb_language(model, vocab, "fra", 0.0f, 123);
  CHECK(model_checksum(same) == model_checksum(model));

  Model p1 = perturb_language(model, vocab, "fra", 0.5f, 123);
  Model p2 = perturb_language(model, vocab, "fra", 0.5f, 123);
  CHECK(model_checksum(p1) == model_checksum(p2));
  CHECK(model_checksum(p1) != model_checksum(model));
  Model p3 = perturb_language(model, vocab, "fra", 0.5f, 124);
  CHECK(model_checksum(p1) != model_checksum(p3));

  CHECK_THROWS_AS(perturb_language(model, vocab, "eng", 0.5f, 1), Error);
  CHECK_THROWS_AS(perturb_language(model, vocab, "deu", 0.5f, 1), Error);
  CHECK_THROWS_AS(perturb_language(model, vocab, "fra", -0.5f, 1), Error);
}

TEST_CASE("perturbation only touches the context section of concept rows") {
  DemoConfig cfg = clean_config(10);
  auto [model, vocab] = build_demo_model(cfg);
  Model p = perturb_language(model, vocab, "fra", 1.0f, 55);
  DemoDims dims = demo_dims(cfg);
  for (int k = 0; k < vocab.n_concepts; ++k) {
    const float* before = model.embed.row(vocab.concept_id(k, "fra"));
    const float* after = p.embed.row(vocab.concept_id(k, "fra"));
    bool ctx_changed = false;
    for (int c = 0; c < dims.concept_width; ++c) {
      if (before[dims.ctx_off + c] != after[dims.ctx_off + c]) ctx_changed = true;
    }
    CHECK(ctx_changed);
    for (int c = dims.key_off; c < dims.width; ++c) CHECK(before[c] == after[c]);
    const float* eng_row = p.embed.row(vocab.concept_id(k, "eng"));
    const float* eng_before = model.embed.row(vocab.concept_id(k, "eng"));
    for (int c = 0; c < dims.width; ++c) CHECK(eng_row[c] == eng_before[c]);
  }
}

TEST_CASE("sigma 10 drives L2 accuracy to chance") {
  DemoConfig cfg = clean_config(31);
  cfg.noise_scale["fra"] = 10.0f;
  auto [model, vocab] = build_demo_model(cfg);
  ParallelCorpus corpus = make_corpus(vocab, 2000, 32);
  EvalReport report = evaluate_corpus(model, corpus, vocab.tokenizer, "eng", "fra", 8);
  CHECK(report.accuracy_eng == 1.0);
  // Noise offsets are per concept token and persistent, so with 64 concepts
  // the accuracy of a 2000-instance corpus fluctuates at the concept level
  // (sd ~ 0.06 across seeds, measured 0.48-0.57). The band reflects that.
  CHECK(std::fabs(report.accuracy_l2 - 0.5) <= 0.10);
}

TEST_CASE("sigma 0 makes the two languages bitwise equivalent") {
  DemoConfig cfg = clean_config(41);
  auto [model, vocab] = build_demo_model(cfg);
  ParallelCorpus corpus = make_corpus(vocab, 64, 42);
  for (size_t i = 0; i < corpus.instances("eng").size(); ++i) {
    PromptEncoding eng =
        encode_mcqa(corpus.instances("eng")[i], vocab.tokenizer, model.spec.maxlen);
    PromptEncoding fra =
        encode_mcqa(corpus.instances("fra")[i], vocab.tokenizer, model.spec.maxlen);
    LayerTrace te = forward(model, eng.tokens);
    LayerTrace tf = forward(model, fra.tokens);
    // exact equality at the gather point and everywhere else
    auto he = te.state(cfg.layer_gather, eng.penult);
    auto hf = tf.state(cfg.layer_gather, fra.penult);
    for (size_t c = 0; c < he.size(); ++c) CHECK(he[c] == hf[c]);
    CHECK(te.logits == tf.logits);
  }
}

TEST_CASE("demo config json round trip") {
  DemoConfig cfg;
  cfg.noise_scale["fra"] = 0.25f;
  cfg.seed = 99;
  cfg.match_gain = 6.5f;
  DemoConfig back = parse_demo_config(demo_config_to_json(cfg));
  CHECK(back.n_concepts == cfg.n_concepts);
  CHECK(back.concept_width == cfg.concept_width);
  CHECK(back.languages == cfg.languages);
  CHECK(back.noise_scale.at("fra") == 0.25f);
  CHECK(back.seed == 99);
  CHECK(back.match_gain == 6.5f);
  CHECK_THROWS_AS(parse_demo_config("{bad"), Error);
  CHECK_THROWS_AS(parse_demo_config(R"({"n_opt": 9})"), Error);
}
