#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xlab/vocab.hpp"

namespace xlab {

// One MCQA instance. Ids are shared across languages; `gold` is 1-based
// internally (the JSONL files store it 0-based). Premise-only instances
// (no options, gold == 0) are allowed for MEXA-style alignment but are
// rejected by MCQA encoding.
struct Instance {
  std::string id;
  std::string lang;
  std::string premise;
  std::string question;  // optional; concatenated to the premise when present
  std::vector<std::string> options;
  int gold = 0;

  int n_opt() const { return static_cast<int>(options.size()); }
  std::string effective_premise() const {
    return question.empty() ? premise : premise + " " + question;
  }
};

struct ParallelCorpus {
  // language -> instances ordered by id
  std::map<std::string, std::vector<Instance>> by_lang;

  bool has_language(const std::string& lang) const {
    return by_lang.find(lang) != by_lang.end();
  }
  const std::vector<Instance>& instances(const std::string& lang) const;
  const Instance& instance(const std::string& lang, const std::string& id) const;
  int size() const;
};

struct GenConfig {
  int n_instances = 2000;
  int n_opt = 2;
  int premise_len = 3;
  std::vector<std::string> languages{"eng", "fra"};
  std::uint64_t seed = 0;
};

// Seeded synthetic bilingual corpus: per instance a concept and distinct
// distractors, the premise is the concept token repeated, and the gold
// letter assignment is balanced by the seed. Every language renders the
// same (concept, distractor, letter) triple in its own token set.
ParallelCorpus generate_parallel_corpus(const GenConfig& gen, const DemoVocab& vocab);

// One "{lang}.jsonl" per language under dir. A leading '#' metadata line is
// written when meta_line is non-empty and skipped on load.
void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& dir,
                 const std::string& meta_line = "", bool force = false);
ParallelCorpus load_corpus(const std::filesystem::path& dir);

void validate_parallel(const ParallelCorpus& corpus);

// premise tokens, SEP, option-i tokens: the (P+o_i) text whose last-token
// embedding feeds the alignment metrics. i is 1-based.
std::string render_concat(const Instance& inst, int option_index);

struct PromptEncoding {
  std::string id;
  std::string lang;
  std::vector<int> tokens;
  int last = 0;     // M, 1-based
  int penult = 0;   // M-1
  std::vector<int> targets;  // answer-letter token ids, option order
  int gold_index = 0;        // 1-based option index
  int gold_target = 0;       // token id of the gold letter
};

// [BOS, premise..., SEP, letter_1, option_1..., ..., COLON, ANS]
PromptEncoding encode_mcqa(const Instance& inst, const Tokenizer& tok, int maxlen);

// BOS-prefixed whitespace tokenization used for alignment embeddings.
std::vector<int> encode_text(const std::string& text, const Tokenizer& tok, int maxlen);

}  // namespace xlab
