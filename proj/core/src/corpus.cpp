#include "xlab/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "xlab/errors.hpp"
#include "xlab/rng.hpp"

namespace xlab {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<Instance>& ParallelCorpus::instances(const std::string& lang) const {
  auto it = by_lang.find(lang);
  require(it != by_lang.end(), Errc::unknown_language, "no corpus for '" + lang + "'");
  return it->second;
}

const Instance& ParallelCorpus::instance(const std::string& lang,
                                         const std::string& id) const {
  const auto& list = instances(lang);
  auto it = std::lower_bound(list.begin(), list.end(), id,
                             [](const Instance& a, const std::string& b) { return a.id < b; });
  require(it != list.end() && it->id == id, Errc::index_out_of_range,
          "no instance '" + id + "' in '" + lang + "'");
  return *it;
}

int ParallelCorpus::size() const {
  if (by_lang.empty()) return 0;
  return static_cast<int>(by_lang.begin()->second.size());
}

ParallelCorpus generate_parallel_corpus(const GenConfig& gen, const DemoVocab& vocab) {
  require(gen.n_instances >= 1, Errc::invalid_gen_config, "n_instances must be >= 1");
  require(gen.n_opt >= 2 && gen.n_opt <= 4, Errc::invalid_gen_config, "n_opt must be 2..4");
  require(gen.premise_len >= 1, Errc::invalid_gen_config, "premise_len must be >= 1");
  require(gen.languages.size() >= 2, Errc::invalid_gen_config,
          "need eng plus at least one other language");
  require(std::find(gen.languages.begin(), gen.languages.end(), "eng") !=
              gen.languages.end(),
          Errc::invalid_gen_config, "languages must include 'eng'");
  require(vocab.n_concepts >= gen.n_opt, Errc::invalid_gen_config,
          "vocabulary has fewer concepts than options");
  for (const std::string& lang : gen.languages) {
    require(vocab.has_language(lang), Errc::unknown_language,
            "vocabulary has no language '" + lang + "'");
  }

  ParallelCorpus corpus;
  Rng rng(derive_seed(gen.seed, "corpus"));
  for (int i = 0; i < gen.n_instances; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "i-%06d", i);
    // One concept per instance plus distinct distractors; the gold slot is
    // drawn uniformly so letters stay balanced.
    std::vector<int> concepts;
    concepts.push_back(static_cast<int>(rng.below(vocab.n_concepts)));
    while (static_cast<int>(concepts.size()) < gen.n_opt) {
      int cand = static_cast<int>(rng.below(vocab.n_concepts));
      if (std::find(concepts.begin(), concepts.end(), cand) == concepts.end()) {
        concepts.push_back(cand);
      }
    }
    int gold_slot = static_cast<int>(rng.below(gen.n_opt));  // 0-based
    for (const std::string& lang : gen.languages) {
      Instance inst;
      inst.id = idbuf;
      inst.lang = lang;
      std::string ctok = vocab.concept_token(concepts[0], lang);
      for (int p = 0; p < gen.premise_len; ++p) {
        if (p) inst.premise += ' ';
        inst.premise += ctok;
      }
      inst.options.resize(gen.n_opt);
      inst.options[gold_slot] = ctok;
      int next_distractor = 1;
      for (int o = 0; o < gen.n_opt; ++o) {
        if (o == gold_slot) continue;
        inst.options[o] = vocab.concept_token(concepts[next_distractor++], lang);
      }
      inst.gold = gold_slot + 1;
      corpus.by_lang[lang].push_back(std::move(inst));
    }
  }
  return corpus;
}

namespace {

Instance parse_instance_line(const std::string& line, const std::string& lang,
                             int line_no, const std::string& file) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    raise(Errc::malformed_line,
          file + ":" + std::to_string(line_no) + ": " + e.what());
  }
  Instance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.lang = j.at("lang").get<std::string>();
    inst.premise = j.at("premise").get<std::string>();
    if (j.contains("question") && !j["question"].is_null()) {
      inst.question = j["question"].get<std::string>();
    }
    if (j.contains("options") && !j["options"].is_null()) {
      inst.options = j["options"].get<std::vector<std::string>>();
    }
    if (j.contains("gold") && !j["gold"].is_null()) {
      inst.gold = j["gold"].get<int>() + 1;  // file is 0-based
    }
  } catch (const json::exception& e) {
    raise(Errc::malformed_line,
          file + ":" + std::to_string(line_no) + ": " + e.what());
  }
  require(!inst.id.empty(), Errc::malformed_line,
          file + ":" + std::to_string(line_no) + ": empty id");
  require(inst.lang == lang, Errc::malformed_line,
          file + ":" + std::to_string(line_no) + ": lang does not match file");
  require(!inst.premise.empty(), Errc::malformed_line,
          file + ":" + std::to_string(line_no) + ": empty premise");
  if (!inst.options.empty()) {
    require(inst.n_opt() >= 2, Errc::malformed_line,
            file + ":" + std::to_string(line_no) + ": instances need 0 or >=2 options");
    require(inst.gold >= 1 && inst.gold <= inst.n_opt(), Errc::malformed_line,
            file + ":" + std::to_string(line_no) + ": gold index out of range");
    for (int a = 0; a < inst.n_opt(); ++a) {
      for (int b = a + 1; b < inst.n_opt(); ++b) {
        require(inst.options[a] != inst.options[b], Errc::malformed_line,
                file + ":" + std::to_string(line_no) + ": duplicate options");
      }
    }
  } else {
    inst.gold = 0;
  }
  return inst;
}

}  // namespace

void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& dir,
                 const std::string& meta_line, bool force) {
  std::filesystem::create_directories(dir);
  for (const auto& [lang, list] : corpus.by_lang) {
    std::filesystem::path file = dir / (lang + ".jsonl");
    require(force || !std::filesystem::exists(file), Errc::io_error,
            file.string() + " exists (use force to overwrite)");
    std::ofstream out(file);
    require(out.good(), Errc::io_error, "cannot write " + file.string());
    if (!meta_line.empty()) out << "# " << meta_line << "\n";
    for (const Instance& inst : list) {
      ordered_json j;
      j["id"] = inst.id;
      j["lang"] = inst.lang;
      j["premise"] = inst.premise;
      if (!inst.question.empty()) j["question"] = inst.question;
      j["options"] = inst.options;
      if (inst.gold >= 1) j["gold"] = inst.gold - 1;
      out << j.dump() << "\n";
    }
    require(out.good(), Errc::io_error, "short write to " + file.string());
  }
}

ParallelCorpus load_corpus(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), Errc::missing_artifact,
          "corpus directory " + dir.string());
  ParallelCorpus corpus;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  require(!files.empty(), Errc::missing_artifact,
          "no .jsonl files in " + dir.string());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::string lang = file.stem().string();
    std::ifstream in(file);
    require(in.good(), Errc::io_error, "cannot read " + file.string());
    std::string line;
    int line_no = 0;
    std::vector<Instance>& list = corpus.by_lang[lang];
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      list.push_back(parse_instance_line(line, lang, line_no, file.string()));
    }
    std::sort(list.begin(), list.end(),
              [](const Instance& a, const Instance& b) { return a.id < b.id; });
  }
  validate_parallel(corpus);
  return corpus;
}

void validate_parallel(const ParallelCorpus& corpus) {
  require(!corpus.by_lang.empty(), Errc::non_parallel, "corpus has no languages");
  const auto& first_lang = corpus.by_lang.begin()->first;
  const auto& first_list = corpus.by_lang.begin()->second;
  std::set<std::string> ids;
  for (const Instance& inst : first_list) {
    require(ids.insert(inst.id).second, Errc::duplicate_id,
            "duplicate id '" + inst.id + "' in '" + first_lang + "'");
  }
  for (const auto& [lang, list] : corpus.by_lang) {
    require(list.size() == first_list.size(), Errc::non_parallel,
            "'" + lang + "' has a different instance count than '" + first_lang + "'");
    std::set<std::string> seen;
    for (const Instance& inst : list) {
      require(seen.insert(inst.id).second, Errc::duplicate_id,
              "duplicate id '" + inst.id + "' in '" + lang + "'");
      require(ids.count(inst.id) == 1, Errc::non_parallel,
              "id '" + inst.id + "' missing from '" + first_lang + "'");
    }
    // Lists are id-sorted, so positional comparison pins gold/n_opt equality.
    for (size_t i = 0; i < list.size(); ++i) {
      const Instance& a = first_list[i];
      const Instance& b = list[i];
      require(a.id == b.id, Errc::non_parallel, "id ordering mismatch at '" + b.id + "'");
      require(a.n_opt() == b.n_opt(), Errc::non_parallel,
              "id '" + b.id + "': option counts differ across languages");
      require(a.gold == b.gold, Errc::non_parallel,
              "id '" + b.id + "': gold index differs across languages");
    }
  }
}

std::string render_concat(const Instance& inst, int option_index) {
  require(option_index >= 1 && option_index <= inst.n_opt(), Errc::index_out_of_range,
          "option index out of range");
  return inst.effective_premise() + " [SEP] " + inst.options[option_index - 1];
}

PromptEncoding encode_mcqa(const Instance& inst, const Tokenizer& tok, int maxlen) {
  require(inst.n_opt() >= 2, Errc::invalid_config,
          "instance '" + inst.id + "' has no options; cannot encode MCQA");
  require(inst.n_opt() <= static_cast<int>(tok.letters.size()), Errc::invalid_config,
          "instance '" + inst.id + "' has more options than letter tokens");
  PromptEncoding enc;
  enc.id = inst.id;
  enc.lang = inst.lang;
  enc.tokens.push_back(tok.bos);
  for (int id : tokenize(tok, inst.effective_premise())) enc.tokens.push_back(id);
  enc.tokens.push_back(tok.sep);
  for (int o = 0; o < inst.n_opt(); ++o) {
    enc.tokens.push_back(tok.letters[o]);
    for (int id : tokenize(tok, inst.options[o])) enc.tokens.push_back(id);
    enc.targets.push_back(tok.letters[o]);
  }
  enc.tokens.push_back(tok.colon);
  enc.tokens.push_back(tok.ans);
  enc.last = static_cast<int>(enc.tokens.size());
  enc.penult = enc.last - 1;
  enc.gold_index = inst.gold;
  enc.gold_target = tok.letters[inst.gold - 1];
  require(enc.last <= maxlen, Errc::sequence_too_long,
          "instance '" + inst.id + "' encodes to " + std::to_string(enc.last) +
              " tokens, maxlen " + std::to_string(maxlen));
  return enc;
}

std::vector<int> encode_text(const std::string& text, const Tokenizer& tok, int maxlen) {
  std::vector<int> out;
  out.push_back(tok.bos);
  for (int id : tokenize(tok, text)) out.push_back(id);
  require(static_cast<int>(out.size()) <= maxlen, Errc::sequence_too_long,
          "text encodes to " + std::to_string(out.size()) + " tokens, maxlen " +
              std::to_string(maxlen));
  return out;
}

}  // namespace xlab
