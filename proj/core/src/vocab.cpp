#include "xlab/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xlab/errors.hpp"

namespace xlab {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

int Tokenizer::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  require(it != token_to_id.end(), Errc::unknown_token, "token '" + token + "'");
  return it->second;
}

std::vector<int> tokenize(const Tokenizer& tok, const std::string& text) {
  std::vector<int> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(tok.id_of(text.substr(start, i - start)));
  }
  return out;
}

void save_tokenizer(const Tokenizer& tok, const std::filesystem::path& file,
                    const std::string& meta_json) {
  ordered_json doc;
  ordered_json meta;
  meta["tool"] = "xlab";
  meta["version"] = XLAB_VERSION;
  if (!meta_json.empty()) {
    json extra = json::parse(meta_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  }
  doc["meta"] = meta;
  ordered_json tokens;
  for (int id = 0; id < tok.size(); ++id) tokens[tok.id_to_token[id]] = id;
  doc["tokens"] = tokens;
  ordered_json specials;
  specials["bos"] = tok.bos;
  specials["sep"] = tok.sep;
  specials["colon"] = tok.colon;
  specials["ans"] = tok.ans;
  specials["letters"] = tok.letters;
  doc["specials"] = specials;
  std::ofstream out(file);
  require(out.good(), Errc::io_error, "cannot write " + file.string());
  out << doc.dump(2) << "\n";
}

Tokenizer load_tokenizer(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), Errc::missing_artifact, "missing " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Errc::malformed_line, std::string("tokenizer parse error: ") + e.what());
  }
  Tokenizer tok;
  try {
    const json& tokens = doc.at("tokens");
    int max_id = -1;
    for (auto it = tokens.begin(); it != tokens.end(); ++it) {
      max_id = std::max(max_id, it.value().get<int>());
    }
    tok.id_to_token.resize(max_id + 1);
    for (auto it = tokens.begin(); it != tokens.end(); ++it) {
      int id = it.value().get<int>();
      require(id >= 0, Errc::malformed_line, "negative token id");
      require(tok.id_to_token[id].empty(), Errc::malformed_line,
              "duplicate token id " + std::to_string(id));
      tok.id_to_token[id] = it.key();
      tok.token_to_id[it.key()] = id;
    }
    const json& sp = doc.at("specials");
    tok.bos = sp.at("bos").get<int>();
    tok.sep = sp.at("sep").get<int>();
    tok.colon = sp.at("colon").get<int>();
    tok.ans = sp.at("ans").get<int>();
    tok.letters = sp.at("letters").get<std::vector<int>>();
  } catch (const json::exception& e) {
    raise(Errc::malformed_line, std::string("tokenizer schema error: ") + e.what());
  }
  return tok;
}

std::string DemoVocab::concept_token(int concept_index, const std::string& lang) const {
  return "c" + std::to_string(concept_index) + "@" + lang;
}

int DemoVocab::concept_id(int concept_index, const std::string& lang) const {
  require(has_language(lang), Errc::unknown_language, "language '" + lang + "'");
  require(concept_index >= 0 && concept_index < n_concepts, Errc::index_out_of_range,
          "concept index out of range");
  return tokenizer.id_of(concept_token(concept_index, lang));
}

bool DemoVocab::has_language(const std::string& lang) const {
  return std::find(languages.begin(), languages.end(), lang) != languages.end();
}

}  // namespace xlab
