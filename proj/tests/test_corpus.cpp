#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xlab/corpus.hpp"
#include "xlab/demo.hpp"

using namespace xlab;

namespace {

DemoVocab default_vocab() {
  return build_demo_vocab(DemoConfig{});
}

GenConfig small_gen(int n = 16) {
  GenConfig g;
  g.n_instances = n;
  g.seed = 7;
  return g;
}

std::filesystem::path temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() /
             (std::string("xlab_corpus_test_") + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generation is parallel and deterministic") {
  DemoVocab vocab = default_vocab();
  GenConfig g = small_gen(1);
  ParallelCorpus c = generate_parallel_corpus(g, vocab);
  CHECK(c.by_lang.size() == 2);
  CHECK(c.instances("eng")[0].id == "i-000000");
  CHECK(c.instances("fra")[0].id == "i-000000");
  CHECK(c.instances("eng")[0].gold == c.instances("fra")[0].gold);
  validate_parallel(c);

  ParallelCorpus c2 = generate_parallel_corpus(g, vocab);
  CHECK(c.instances("eng")[0].premise == c2.instances("eng")[0].premise);
  CHECK(c.instances("eng")[0].options == c2.instances("eng")[0].options);

  GenConfig g3 = small_gen(64);
  g3.seed = 8;
  ParallelCorpus c3 = generate_parallel_corpus(g3, vocab);
  validate_parallel(c3);
  // same premise concept everywhere in the premise, gold option repeats it
  for (const Instance& inst : c3.instances("eng")) {
    auto first = inst.premise.substr(0, inst.premise.find(' '));
    CHECK(inst.options[inst.gold - 1] == first);
    CHECK(inst.options[0] != inst.options[1]);
  }
}

TEST_CASE("gold letters are balanced across a large corpus") {
  DemoVocab vocab = default_vocab();
  GenConfig g = small_gen(2000);
  g.seed = 11;
  ParallelCorpus c = generate_parallel_corpus(g, vocab);
  int at_first = 0;
  for (const Instance& inst : c.instances("eng")) {
    if (inst.gold == 1) ++at_first;
  }
  // binomial 3-sigma bound from the balance requirement
  CHECK(std::fabs(at_first - 1000.0) <= 3.0 * std::sqrt(2000.0) / 2.0);
}

TEST_CASE("renderings differ across languages only in concept tokens") {
  DemoVocab vocab = default_vocab();
  ParallelCorpus c = generate_parallel_corpus(small_gen(32), vocab);
  for (size_t i = 0; i < c.instances("eng").size(); ++i) {
    const Instance& e = c.instances("eng")[i];
    const Instance& f = c.instances("fra")[i];
    for (int o = 1; o <= e.n_opt(); ++o) {
      std::string re = render_concat(e, o);
      std::string rf = render_concat(f, o);
      // token-by-token: either equal (specials) or @eng vs @fra concepts
      std::stringstream se(re), sf(rf);
      std::string te, tf;
      while (se >> te && sf >> tf) {
        if (te != tf) {
          CHECK(te.find("@eng") != std::string::npos);
          CHECK(tf.find("@fra") != std::string::npos);
          CHECK(te.substr(0, te.find('@')) == tf.substr(0, tf.find('@')));
        }
      }
    }
  }
}

TEST_CASE("render_concat layout and bounds") {
  Instance inst;
  inst.id = "x";
  inst.lang = "eng";
  inst.premise = "c3@eng c3@eng c3@eng";
  inst.options = {"c3@eng", "c5@eng"};
  inst.gold = 1;
  CHECK(render_concat(inst, 1) == "c3@eng c3@eng c3@eng [SEP] c3@eng");
  CHECK(render_concat(inst, 2) == "c3@eng c3@eng c3@eng [SEP] c5@eng");
  CHECK(render_concat(inst, 1) != render_concat(inst, 2));
  CHECK_THROWS_AS(render_concat(inst, 0), Error);
  CHECK_THROWS_AS(render_concat(inst, 3), Error);
}

TEST_CASE("question field concatenates into the premise") {
  Instance inst;
  inst.id = "q";
  inst.lang = "eng";
  inst.premise = "c1@eng";
  inst.question = "c2@eng";
  inst.options = {"c1@eng", "c3@eng"};
  inst.gold = 1;
  CHECK(inst.effective_premise() == "c1@eng c2@eng");
  CHECK(render_concat(inst, 1) == "c1@eng c2@eng [SEP] c1@eng");
}

TEST_CASE("encode_mcqa layout: slot count, colon and ans positions") {
  DemoVocab vocab = default_vocab();
  ParallelCorpus c = generate_parallel_corpus(small_gen(8), vocab);
  const Instance& inst = c.instances("eng")[0];
  PromptEncoding enc = encode_mcqa(inst, vocab.tokenizer, 32);
  // BOS + premise(3) + SEP + 2 x (letter + 1-token option) + COLON + ANS
  CHECK(enc.last == 11);
  CHECK(enc.penult == 10);
  CHECK(enc.tokens[0] == vocab.tokenizer.bos);
  CHECK(enc.tokens[enc.last - 1] == vocab.tokenizer.ans);
  CHECK(enc.tokens[enc.penult - 1] == vocab.tokenizer.colon);
  CHECK(enc.targets == vocab.tokenizer.letters);
  CHECK(enc.gold_target == vocab.tokenizer.letters[inst.gold - 1]);
}

TEST_CASE("parallel encodings share M and target ids") {
  DemoVocab vocab = default_vocab();
  ParallelCorpus c = generate_parallel_corpus(small_gen(32), vocab);
  for (size_t i = 0; i < c.instances("eng").size(); ++i) {
    PromptEncoding e = encode_mcqa(c.instances("eng")[i], vocab.tokenizer, 32);
    PromptEncoding f = encode_mcqa(c.instances("fra")[i], vocab.tokenizer, 32);
    CHECK(e.last == f.last);
    CHECK(e.penult == f.penult);
    CHECK(e.targets == f.targets);
    CHECK(e.gold_target == f.gold_target);
  }
}

TEST_CASE("encode_mcqa error paths") {
  DemoVocab vocab = default_vocab();
  Instance inst;
  inst.id = "bad";
  inst.lang = "eng";
  inst.premise = "c1@eng";
  inst.options = {"c1@eng", "not-a-token"};
  inst.gold = 1;
  CHECK_THROWS_AS(encode_mcqa(inst, vocab.tokenizer, 32), Error);

  inst.options = {"c1@eng", "c2@eng"};
  try {
    encode_mcqa(inst, vocab.tokenizer, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::sequence_too_long);
  }

  Instance premise_only;
  premise_only.id = "p";
  premise_only.lang = "eng";
  premise_only.premise = "c1@eng";
  CHECK_THROWS_AS(encode_mcqa(premise_only, vocab.tokenizer, 32), Error);
}

TEST_CASE("save/load round trip preserves every field") {
  DemoVocab vocab = default_vocab();
  ParallelCorpus c = generate_parallel_corpus(small_gen(24), vocab);
  auto dir = temp_dir("roundtrip");
  save_corpus(c, dir, "meta line");
  ParallelCorpus r = load_corpus(dir);
  for (const auto& [lang, list] : c.by_lang) {
    REQUIRE(r.has_language(lang));
    const auto& rl = r.instances(lang);
    REQUIRE(rl.size() == list.size());
    for (size_t i = 0; i < list.size(); ++i) {
      CHECK(rl[i].id == list[i].id);
      CHECK(rl[i].lang == list[i].lang);
      CHECK(rl[i].premise == list[i].premise);
      CHECK(rl[i].question == list[i].question);
      CHECK(rl[i].options == list[i].options);
      CHECK(rl[i].gold == list[i].gold);
    }
  }
  // refuses to overwrite without force
  CHECK_THROWS_AS(save_corpus(c, dir, ""), Error);
  save_corpus(c, dir, "", /*force=*/true);
  std::filesystem::remove_all(dir);
}

TEST_CASE("validation rejects malformed and non-parallel corpora") {
  auto dir = temp_dir("invalid");

  SUBCASE("gold out of range") {
    std::ofstream(dir / "eng.jsonl")
        << R"({"id":"a","lang":"eng","premise":"p","options":["x","y"],"gold":2})" << "\n";
    try {
      load_corpus(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::malformed_line);
    }
  }

  SUBCASE("missing id in the other language") {
    std::ofstream(dir / "eng.jsonl")
        << R"({"id":"a","lang":"eng","premise":"p","options":["x","y"],"gold":0})" << "\n"
        << R"({"id":"b","lang":"eng","premise":"p","options":["x","y"],"gold":0})" << "\n";
    std::ofstream(dir / "fra.jsonl")
        << R"({"id":"a","lang":"fra","premise":"q","options":["u","v"],"gold":0})" << "\n"
        << R"({"id":"c","lang":"fra","premise":"q","options":["u","v"],"gold":0})" << "\n";
    try {
      load_corpus(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::non_parallel);
    }
  }

  SUBCASE("duplicate ids") {
    std::ofstream(dir / "eng.jsonl")
        << R"({"id":"a","lang":"eng","premise":"p","options":["x","y"],"gold":0})" << "\n"
        << R"({"id":"a","lang":"eng","premise":"p","options":["x","y"],"gold":0})" << "\n";
    try {
      load_corpus(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::duplicate_id);
    }
  }

  SUBCASE("gold differs across languages") {
    std::ofstream(dir / "eng.jsonl")
        << R"({"id":"a","lang":"eng","premise":"p","options":["x","y"],"gold":0})" << "\n";
    std::ofstream(dir / "fra.jsonl")
        << R"({"id":"a","lang":"fra","premise":"q","options":["u","v"],"gold":1})" << "\n";
    try {
      load_corpus(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::non_parallel);
    }
  }

  SUBCASE("broken json") {
    std::ofstream(dir / "eng.jsonl") << "{not json\n";
    try {
      load_corpus(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::malformed_line);
    }
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("premise-only instances load and validate") {
  auto dir = temp_dir("premise_only");
  std::ofstream(dir / "eng.jsonl")
      << R"({"id":"a","lang":"eng","premise":"hello","options":[]})" << "\n";
  std::ofstream(dir / "fra.jsonl")
      << R"({"id":"a","lang":"fra","premise":"bonjour","options":[]})" << "\n";
  ParallelCorpus c = load_corpus(dir);
  CHECK(c.instances("eng")[0].n_opt() == 0);
  CHECK(c.instances("eng")[0].gold == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated corpora validate and comment lines are skipped") {
  DemoVocab vocab = default_vocab();
  ParallelCorpus c = generate_parallel_corpus(small_gen(12), vocab);
  auto dir = temp_dir("meta");
  save_corpus(c, dir, "tool vX seed=1 config=feed");
  {
    std::ifstream in(dir / "eng.jsonl");
    std::string first;
    std::getline(in, first);
    CHECK(first.substr(0, 2) == "# ");
  }
  ParallelCorpus r = load_corpus(dir);
  CHECK(r.size() == 12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator config validation") {
  DemoVocab vocab = default_vocab();
  GenConfig g = small_gen();
  g.n_instances = 0;
  CHECK_THROWS_AS(generate_parallel_corpus(g, vocab), Error);
  g = small_gen();
  g.languages = {"eng"};
  CHECK_THROWS_AS(generate_parallel_corpus(g, vocab), Error);
  g = small_gen();
  g.languages = {"eng", "deu"};
  CHECK_THROWS_AS(generate_parallel_corpus(g, vocab), Error);
}
