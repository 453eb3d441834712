#include "xlab/demo.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "xlab/rng.hpp"

namespace xlab {

namespace {

// Construction gains. Addressing and self-anchor logits only need to
// dominate the zero-scoring alternatives; the option bias must dominate
// every concept match score the noise can produce at the default sigma
// range.
constexpr float kAddrGain = 25.0f;
constexpr float kOptionBias = 40.0f;
constexpr float kUnembedGain = 4.0f;
constexpr float kEchoGain = 2.0f;
constexpr float kSelfBonus = 16.0f;
constexpr int kMaxPromptLen = 256;

const char* kLetterNames[4] = {"A", "B", "C", "D"};

}  // namespace

void validate_demo_config(const DemoConfig& cfg) {
  require(cfg.n_opt >= 2 && cfg.n_opt <= 4, Errc::invalid_config, "n_opt must be 2..4");
  require(cfg.n_concepts >= cfg.n_opt, Errc::invalid_config,
          "n_concepts must be >= n_opt");
  require(cfg.concept_width >= 2, Errc::invalid_config, "concept_width must be >= 2");
  require(cfg.premise_len >= 1, Errc::invalid_config, "premise_len must be >= 1");
  require(cfg.n_layers >= 1, Errc::invalid_config, "n_layers must be >= 1");
  require(1 <= cfg.layer_bind && cfg.layer_bind < cfg.layer_gather &&
              cfg.layer_gather < cfg.layer_fetch && cfg.layer_fetch < cfg.layer_match &&
              cfg.layer_match <= cfg.n_layers,
          Errc::invalid_config, "role layers must satisfy bind < gather < fetch < match <= n_layers");
  require(!cfg.languages.empty() &&
              std::find(cfg.languages.begin(), cfg.languages.end(), "eng") !=
                  cfg.languages.end(),
          Errc::invalid_config, "languages must include 'eng'");
  for (size_t i = 0; i < cfg.languages.size(); ++i) {
    for (size_t j = i + 1; j < cfg.languages.size(); ++j) {
      require(cfg.languages[i] != cfg.languages[j], Errc::invalid_config,
              "duplicate language tag");
    }
  }
  for (const auto& [lang, sigma] : cfg.noise_scale) {
    require(std::find(cfg.languages.begin(), cfg.languages.end(), lang) !=
                cfg.languages.end(),
            Errc::unknown_language, "noise_scale language '" + lang + "'");
    require(sigma >= 0.0f, Errc::invalid_config, "noise scale must be >= 0");
    require(!(lang == "eng" && sigma != 0.0f), Errc::invalid_config,
            "eng noise scale must be 0");
  }
  DemoLayout layout = demo_layout(cfg);
  require(layout.prompt_len() <= kMaxPromptLen, Errc::subspace_overflow,
          "prompt layout exceeds the position one-hot budget");
}

DemoLayout demo_layout(const DemoConfig& cfg) {
  return DemoLayout{cfg.premise_len, cfg.n_opt};
}

DemoDims demo_dims(const DemoConfig& cfg) {
  DemoDims d;
  d.concept_width = cfg.concept_width;
  d.n_opt = cfg.n_opt;
  d.maxlen = demo_layout(cfg).prompt_len();
  d.ctx_off = 0;
  d.key_off = cfg.concept_width;
  d.echo_off = 2 * cfg.concept_width;
  d.flag_off = 3 * cfg.concept_width;
  d.letter_off = d.flag_off + 4;
  d.pos_off = d.letter_off + cfg.n_opt;
  d.width = d.pos_off + d.maxlen;
  return d;
}

DemoVocab build_demo_vocab(const DemoConfig& cfg) {
  validate_demo_config(cfg);
  DemoVocab vocab;
  vocab.languages = cfg.languages;
  vocab.n_concepts = cfg.n_concepts;
  vocab.concept_width = cfg.concept_width;
  Tokenizer& tok = vocab.tokenizer;
  auto add = [&tok](const std::string& t) {
    int id = static_cast<int>(tok.id_to_token.size());
    tok.id_to_token.push_back(t);
    tok.token_to_id[t] = id;
    return id;
  };
  tok.bos = add("[BOS]");
  tok.sep = add("[SEP]");
  tok.colon = add("[COLON]");
  tok.ans = add("[ANS]");
  for (int l = 0; l < cfg.n_opt; ++l) tok.letters.push_back(add(kLetterNames[l]));
  for (const std::string& lang : cfg.languages) {
    for (int k = 0; k < cfg.n_concepts; ++k) {
      add(vocab.concept_token(k, lang));
    }
  }
  return vocab;
}

std::pair<Model, DemoVocab> build_demo_model(const DemoConfig& cfg) {
  validate_demo_config(cfg);
  const DemoDims dims = demo_dims(cfg);
  const DemoLayout layout = demo_layout(cfg);
  DemoVocab vocab = build_demo_vocab(cfg);
  const int d = dims.width;
  const float sqrt_d = std::sqrt(static_cast<float>(d));

  Model m;
  m.spec.width = d;
  m.spec.n_layers = cfg.n_layers;
  m.spec.n_heads = 1;
  m.spec.head_dim = d;
  m.spec.vocab = vocab.tokenizer.size();
  m.spec.maxlen = dims.maxlen;
  m.spec.mlp_hidden = 1;
  m.spec.norm = NormKind::identity;

  m.embed = Matrix(m.spec.vocab, d);
  m.pos = Matrix(m.spec.maxlen, d);
  m.blocks.resize(cfg.n_layers);
  for (Block& b : m.blocks) {
    b.wq = Matrix(d, d);
    b.wk = Matrix(d, d);
    b.wv = Matrix(d, d);
    b.wo = Matrix(d, d);
    b.w1 = Matrix(d, 1);
    b.w2 = Matrix(1, d);
    b.norm1.assign(d, 1.0f);
    b.norm2.assign(d, 1.0f);
  }
  m.final_norm.assign(d, 1.0f);
  m.unembed = Matrix(d, m.spec.vocab);

  // Concept vectors: seeded unit vectors shared by every language.
  {
    Rng rng(derive_seed(cfg.seed, "concepts"));
    for (int k = 0; k < cfg.n_concepts; ++k) {
      std::vector<float> e(dims.concept_width);
      float norm = 0.0f;
      while (norm == 0.0f) {
        for (float& v : e) v = rng.gaussian();
        float ss = 0.0f;
        for (float v : e) ss += v * v;
        norm = std::sqrt(ss);
      }
      for (float& v : e) v /= norm;
      for (const std::string& lang : cfg.languages) {
        float* row = m.embed.row(vocab.concept_id(k, lang));
        for (int c = 0; c < dims.concept_width; ++c) {
          row[dims.ctx_off + c] = e[c];
          row[dims.key_off + c] = e[c];
        }
      }
    }
  }
  // Letter tokens carry their one-hot; specials stay zero.
  for (int l = 0; l < cfg.n_opt; ++l) {
    m.embed.row(vocab.tokenizer.letters[l])[dims.letter_off + l] = 1.0f;
  }

  // Position table: one-hot plus the slot's role flag.
  for (int p = 0; p < dims.maxlen; ++p) m.pos.row(p)[dims.pos_off + p] = 1.0f;
  for (int i = 0; i < cfg.premise_len; ++i) {
    m.pos.row(layout.premise_slot(i))[dims.flag_off + 0] = 1.0f;
  }
  for (int i = 0; i < cfg.n_opt; ++i) {
    m.pos.row(layout.option_slot(i))[dims.flag_off + 1] = 1.0f;
    m.pos.row(layout.letter_slot(i))[dims.flag_off + 2] = 1.0f;
  }
  // Cue rides on both gather points: the premise boundary (so concatenated
  // premise+option renderings pick up premise context too) and the colon.
  m.pos.row(layout.sep_slot())[dims.flag_off + 3] = 1.0f;
  m.pos.row(layout.colon_slot())[dims.flag_off + 3] = 1.0f;

  // bind: every position attends its predecessor and copies the letter
  // subspace; options thereby bind the letter printed before them.
  {
    Block& b = m.blocks[cfg.layer_bind - 1];
    for (int p = 1; p < dims.maxlen; ++p) {
      b.wq.at(dims.pos_off + p, dims.pos_off + p - 1) = kAddrGain * sqrt_d;
    }
    for (int p = 0; p < dims.maxlen; ++p) b.wk.at(dims.pos_off + p, dims.pos_off + p) = 1.0f;
    for (int l = 0; l < cfg.n_opt; ++l) {
      b.wv.at(dims.letter_off + l, dims.letter_off + l) = 1.0f;
      b.wo.at(dims.letter_off + l, dims.letter_off + l) = 1.0f;
    }
  }

  // gather: cue positions pull the mean premise concept into their context;
  // every other position anchors on itself via a self bonus. The same
  // attention also echoes the attended clean key concepts into the echo
  // subspace, which nothing downstream reads; it makes the mid-stack
  // residual carry the language-shared content the alignment metrics see.
  {
    Block& b = m.blocks[cfg.layer_gather - 1];
    b.wq.at(dims.flag_off + 3, 0) = cfg.gather_gain * sqrt_d;
    b.wk.at(dims.flag_off + 0, 0) = 1.0f;
    for (int p = 0; p < dims.maxlen; ++p) {
      b.wq.at(dims.pos_off + p, 1 + p) = kSelfBonus * sqrt_d;
      b.wk.at(dims.pos_off + p, 1 + p) = 1.0f;
    }
    for (int c = 0; c < dims.concept_width; ++c) {
      b.wv.at(dims.ctx_off + c, dims.ctx_off + c) = 1.0f;
      b.wo.at(dims.ctx_off + c, dims.ctx_off + c) = 1.0f;
      b.wv.at(dims.key_off + c, dims.key_off + c) = 1.0f;
      b.wo.at(dims.key_off + c, dims.echo_off + c) = kEchoGain;
    }
  }

  // fetch: predecessor copy of the context subspace; the answer slot sits
  // right after the colon and so receives the gathered premise concept.
  {
    Block& b = m.blocks[cfg.layer_fetch - 1];
    for (int p = 1; p < dims.maxlen; ++p) {
      b.wq.at(dims.pos_off + p, dims.pos_off + p - 1) = kAddrGain * sqrt_d;
    }
    for (int p = 0; p < dims.maxlen; ++p) b.wk.at(dims.pos_off + p, dims.pos_off + p) = 1.0f;
    for (int c = 0; c < dims.concept_width; ++c) {
      b.wv.at(dims.ctx_off + c, dims.ctx_off + c) = 1.0f;
      b.wo.at(dims.ctx_off + c, dims.ctx_off + c) = 1.0f;
    }
  }

  // match: queries carry the position's own context concept, keys expose the
  // clean key-subspace concept plus a large bias on option positions, values
  // copy the bound letters. The answer slot ends up with a softmax-weighted
  // letter mix dominated by the best-matching option.
  {
    Block& b = m.blocks[cfg.layer_match - 1];
    for (int c = 0; c < dims.concept_width; ++c) {
      b.wq.at(dims.ctx_off + c, c) = cfg.match_gain * sqrt_d;
      b.wk.at(dims.key_off + c, c) = 1.0f;
    }
    for (int p = 0; p < dims.maxlen; ++p) {
      b.wq.at(dims.pos_off + p, dims.concept_width) = sqrt_d;
    }
    b.wk.at(dims.flag_off + 1, dims.concept_width) = kOptionBias;
    for (int l = 0; l < cfg.n_opt; ++l) {
      b.wv.at(dims.letter_off + l, dims.letter_off + l) = 1.0f;
      b.wo.at(dims.letter_off + l, dims.letter_off + l) = 1.0f;
    }
  }

  // Only letter rows of the unembedding are nonzero.
  for (int l = 0; l < cfg.n_opt; ++l) {
    m.unembed.at(dims.letter_off + l, vocab.tokenizer.letters[l]) = kUnembedGain;
  }

  // Language degradation, applied to the frozen base model.
  for (const std::string& lang : cfg.languages) {
    auto it = cfg.noise_scale.find(lang);
    if (it == cfg.noise_scale.end() || it->second == 0.0f) continue;
    m = perturb_language(m, vocab, lang, it->second,
                         derive_seed(cfg.seed, "noise:" + lang));
  }
  return {std::move(m), std::move(vocab)};
}

Model perturb_language(const Model& model, const DemoVocab& vocab,
                       const std::string& lang, float sigma, std::uint64_t seed) {
  require(vocab.has_language(lang), Errc::unknown_language, "language '" + lang + "'");
  require(lang != "eng", Errc::invalid_config, "cannot perturb 'eng'");
  require(sigma >= 0.0f, Errc::invalid_config, "sigma must be >= 0");
  Model out = model;
  if (sigma == 0.0f) return out;
  // Offsets land in the context half [0, concept_width); the key half that
  // follows stays clean so the match block always sees undamaged option
  // concepts.
  const int concept_width = vocab.concept_width;
  require(concept_width >= 1 && 2 * concept_width <= model.spec.width,
          Errc::invalid_config, "vocab concept width does not fit the model");
  Rng rng(derive_seed(seed, "perturb"));
  for (int k = 0; k < vocab.n_concepts; ++k) {
    float* row = out.embed.row(vocab.concept_id(k, lang));
    for (int c = 0; c < concept_width; ++c) {
      row[c] += sigma * rng.gaussian();
    }
  }
  return out;
}

std::string demo_config_to_json(const DemoConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_concepts"] = cfg.n_concepts;
  j["concept_width"] = cfg.concept_width;
  j["n_opt"] = cfg.n_opt;
  j["premise_len"] = cfg.premise_len;
  j["n_layers"] = cfg.n_layers;
  j["layer_bind"] = cfg.layer_bind;
  j["layer_gather"] = cfg.layer_gather;
  j["layer_fetch"] = cfg.layer_fetch;
  j["layer_match"] = cfg.layer_match;
  j["gather_gain"] = cfg.gather_gain;
  j["match_gain"] = cfg.match_gain;
  j["languages"] = cfg.languages;
  j["noise_scale"] = cfg.noise_scale;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

DemoConfig parse_demo_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::invalid_config, std::string("demo config parse error: ") + e.what());
  }
  DemoConfig cfg;
  try {
    if (j.contains("n_concepts")) cfg.n_concepts = j["n_concepts"].get<int>();
    if (j.contains("concept_width")) cfg.concept_width = j["concept_width"].get<int>();
    if (j.contains("n_opt")) cfg.n_opt = j["n_opt"].get<int>();
    if (j.contains("premise_len")) cfg.premise_len = j["premise_len"].get<int>();
    if (j.contains("n_layers")) cfg.n_layers = j["n_layers"].get<int>();
    if (j.contains("layer_bind")) cfg.layer_bind = j["layer_bind"].get<int>();
    if (j.contains("layer_gather")) cfg.layer_gather = j["layer_gather"].get<int>();
    if (j.contains("layer_fetch")) cfg.layer_fetch = j["layer_fetch"].get<int>();
    if (j.contains("layer_match")) cfg.layer_match = j["layer_match"].get<int>();
    if (j.contains("gather_gain")) cfg.gather_gain = j["gather_gain"].get<float>();
    if (j.contains("match_gain")) cfg.match_gain = j["match_gain"].get<float>();
    if (j.contains("languages")) cfg.languages = j["languages"].get<std::vector<std::string>>();
    if (j.contains("noise_scale")) {
      cfg.noise_scale.clear();
      for (auto it = j["noise_scale"].begin(); it != j["noise_scale"].end(); ++it) {
        cfg.noise_scale[it.key()] = it.value().get<float>();
      }
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::invalid_config, std::string("demo config field error: ") + e.what());
  }
  validate_demo_config(cfg);
  return cfg;
}

}  // namespace xlab
