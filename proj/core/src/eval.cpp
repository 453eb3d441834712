#include "xlab/eval.hpp"

#include <nlohmann/json.hpp>

#include "xlab/parallel.hpp"

namespace xlab {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

DecisionRecord make_decision(const std::string& id, const std::string& lang,
                             std::vector<float> target_logits, int gold) {
  require(target_logits.size() >= 2, Errc::invalid_config,
          "decision needs at least two target logits");
  require(gold >= 1 && gold <= static_cast<int>(target_logits.size()),
          Errc::invalid_config, "gold index out of range");
  require(all_finite(target_logits), Errc::non_finite, "non-finite target logit");
  DecisionRecord rec;
  rec.id = id;
  rec.lang = lang;
  rec.gold = gold;
  // Strict argmax; exact ties fall to the lowest index and are flagged so
  // downstream flip statistics never silently credit a tie.
  int best = 0;
  for (int i = 1; i < static_cast<int>(target_logits.size()); ++i) {
    if (target_logits[i] > target_logits[best]) best = i;
  }
  for (int i = 0; i < static_cast<int>(target_logits.size()); ++i) {
    if (i != best && target_logits[i] == target_logits[best]) {
      rec.tie = true;
      if (i < best) best = i;
    }
  }
  rec.target_logits = std::move(target_logits);
  rec.predicted = best + 1;
  rec.correct = rec.predicted == rec.gold;
  return rec;
}

DecisionRecord score_mcqa(const Model& model, const PromptEncoding& enc) {
  LayerTrace trace = forward(model, enc.tokens);
  auto logits = trace.final_logits();
  std::vector<float> target_logits;
  target_logits.reserve(enc.targets.size());
  for (int t : enc.targets) target_logits.push_back(logits[t]);
  return make_decision(enc.id, enc.lang, std::move(target_logits), enc.gold_index);
}

TransferOutcome label_transfer(const DecisionRecord& eng, const DecisionRecord& l2) {
  require(eng.id == l2.id, Errc::id_mismatch,
          "'" + eng.id + "' vs '" + l2.id + "'");
  TransferOutcome out;
  out.id = eng.id;
  if (!eng.correct) {
    out.label = TransferLabel::excluded_english_wrong;
  } else if (l2.correct) {
    out.label = TransferLabel::ts;
  } else {
    out.label = TransferLabel::tf;
  }
  return out;
}

EvalReport evaluate_corpus(const Model& model, const ParallelCorpus& corpus,
                           const Tokenizer& tok, const std::string& eng_lang,
                           const std::string& l2_lang, int threads) {
  validate_parallel(corpus);
  const auto& eng_list = corpus.instances(eng_lang);
  const auto& l2_list = corpus.instances(l2_lang);
  const int n = static_cast<int>(eng_list.size());

  std::vector<DecisionRecord> eng_dec(n), l2_dec(n);
  parallel_for(n, threads, [&](int i) {
    eng_dec[i] = score_mcqa(model, encode_mcqa(eng_list[i], tok, model.spec.maxlen));
    l2_dec[i] = score_mcqa(model, encode_mcqa(l2_list[i], tok, model.spec.maxlen));
  });

  EvalReport report;
  report.eng_lang = eng_lang;
  report.l2_lang = l2_lang;
  report.n = n;
  for (int i = 0; i < n; ++i) {
    if (eng_dec[i].correct) ++report.n_acc_eng;
    if (l2_dec[i].correct) ++report.n_acc_l2;
    TransferOutcome outcome = label_transfer(eng_dec[i], l2_dec[i]);
    switch (outcome.label) {
      case TransferLabel::ts: report.ts_ids.push_back(outcome.id); break;
      case TransferLabel::tf: report.tf_ids.push_back(outcome.id); break;
      case TransferLabel::excluded_english_wrong:
        report.excluded_ids.push_back(outcome.id);
        break;
    }
  }
  report.accuracy_eng = static_cast<double>(report.n_acc_eng) / n;
  report.accuracy_l2 = static_cast<double>(report.n_acc_l2) / n;
  return report;
}

std::string eval_report_to_json(const EvalReport& report, const std::string& meta_json) {
  ordered_json j;
  ordered_json meta;
  meta["tool"] = "xlab";
  meta["version"] = XLAB_VERSION;
  if (!meta_json.empty()) {
    json extra = json::parse(meta_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  }
  j["meta"] = meta;
  ordered_json eng;
  eng["lang"] = report.eng_lang;
  eng["n"] = report.n;
  eng["n_acc"] = report.n_acc_eng;
  eng["accuracy"] = report.accuracy_eng;
  j["eng"] = eng;
  ordered_json l2;
  l2["lang"] = report.l2_lang;
  l2["n"] = report.n;
  l2["n_acc"] = report.n_acc_l2;
  l2["accuracy"] = report.accuracy_l2;
  j["l2"] = l2;
  j["ts_ids"] = report.ts_ids;
  j["tf_ids"] = report.tf_ids;
  j["excluded_ids"] = report.excluded_ids;
  return j.dump(2);
}

EvalReport parse_eval_report(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(Errc::malformed_line, std::string("eval report parse error: ") + e.what());
  }
  EvalReport report;
  try {
    report.eng_lang = j.at("eng").at("lang").get<std::string>();
    report.l2_lang = j.at("l2").at("lang").get<std::string>();
    report.n = j.at("eng").at("n").get<int>();
    report.n_acc_eng = j.at("eng").at("n_acc").get<int>();
    report.n_acc_l2 = j.at("l2").at("n_acc").get<int>();
    report.accuracy_eng = j.at("eng").at("accuracy").get<double>();
    report.accuracy_l2 = j.at("l2").at("accuracy").get<double>();
    report.ts_ids = j.at("ts_ids").get<std::vector<std::string>>();
    report.tf_ids = j.at("tf_ids").get<std::vector<std::string>>();
    report.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    raise(Errc::malformed_line, std::string("eval report schema error: ") + e.what());
  }
  return report;
}

}  // namespace xlab
