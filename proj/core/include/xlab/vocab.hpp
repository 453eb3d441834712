#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace xlab {

// Whitespace tokenizer over a fixed token -> id map, with the four special
// tokens and the shared answer-letter tokens called out. Letter ids are the
// same for every language by construction.
struct Tokenizer {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  int bos = -1;
  int sep = -1;
  int colon = -1;
  int ans = -1;
  std::vector<int> letters;

  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const {
    return token_to_id.find(token) != token_to_id.end();
  }
  int size() const { return static_cast<int>(id_to_token.size()); }
};

// Splits on ASCII whitespace and maps every piece through the vocabulary.
std::vector<int> tokenize(const Tokenizer& tok, const std::string& text);

void save_tokenizer(const Tokenizer& tok, const std::filesystem::path& file,
                    const std::string& meta_json = "");
Tokenizer load_tokenizer(const std::filesystem::path& file);

// Demo vocabulary: per-language concept tokens "c{k}@{lang}" plus the shared
// specials and letters.
struct DemoVocab {
  Tokenizer tokenizer;
  std::vector<std::string> languages;
  int n_concepts = 0;
  int concept_width = 0;  // width of the context/key halves in the residual

  std::string concept_token(int concept_index, const std::string& lang) const;
  int concept_id(int concept_index, const std::string& lang) const;
  bool has_language(const std::string& lang) const;
};

}  // namespace xlab
