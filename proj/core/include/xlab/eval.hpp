#pragma once

#include <string>
#include <vector>

#include "xlab/corpus.hpp"
#include "xlab/model.hpp"

namespace xlab {

struct DecisionRecord {
  std::string id;
  std::string lang;
  std::vector<float> target_logits;  // option order
  int predicted = 0;                 // 1-based; ties resolve to the lowest index
  bool tie = false;
  int gold = 0;
  bool correct = false;
};

enum class TransferLabel { ts, tf, excluded_english_wrong };

struct TransferOutcome {
  std::string id;
  TransferLabel label;
};

// Builds the record from already-extracted target logits; score_mcqa wraps a
// forward pass around it. Exposed so tie handling and shift invariance can
// be unit tested without a model.
DecisionRecord make_decision(const std::string& id, const std::string& lang,
                             std::vector<float> target_logits, int gold);

DecisionRecord score_mcqa(const Model& model, const PromptEncoding& encoding);

TransferOutcome label_transfer(const DecisionRecord& eng, const DecisionRecord& l2);

struct EvalReport {
  std::string eng_lang;
  std::string l2_lang;
  int n = 0;
  int n_acc_eng = 0;
  int n_acc_l2 = 0;
  double accuracy_eng = 0.0;
  double accuracy_l2 = 0.0;
  std::vector<std::string> ts_ids, tf_ids, excluded_ids;
};

EvalReport evaluate_corpus(const Model& model, const ParallelCorpus& corpus,
                           const Tokenizer& tok, const std::string& eng_lang,
                           const std::string& l2_lang, int threads = 1);

std::string eval_report_to_json(const EvalReport& report, const std::string& meta_json = "");
EvalReport parse_eval_report(const std::string& json_text);

}  // namespace xlab
