#include "xlab/patching.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "xlab/parallel.hpp"
#include "xlab/rng.hpp"

namespace xlab {

const char* patch_mode_name(PatchMode mode) {
  return mode == PatchMode::equivalent ? "equivalent" : "control";
}

const char* token_pos_name(TokenPos pos) {
  return pos == TokenPos::last ? "last" : "penult";
}

double decision_entropy(std::span<const float> target_logits) {
  require(target_logits.size() >= 2, Errc::invalid_config,
          "decision entropy needs at least two targets");
  require(all_finite(target_logits), Errc::non_finite, "non-finite target logit");
  double mx = target_logits[0];
  for (float v : target_logits) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (float v : target_logits) z += std::exp(static_cast<double>(v) - mx);
  double h = 0.0;
  for (float v : target_logits) {
    double p = std::exp(static_cast<double>(v) - mx) / z;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::string select_control_donor(const std::string& tf_id, int tf_gold,
                                 const std::vector<DonorCandidate>& english_pool,
                                 std::uint64_t seed) {
  std::vector<std::string> eligible;
  for (const DonorCandidate& c : english_pool) {
    if (c.correct && c.gold == tf_gold && c.id != tf_id) eligible.push_back(c.id);
  }
  require(!eligible.empty(), Errc::no_eligible_donor,
          "no correct English instance shares the gold letter of '" + tf_id + "'");
  std::sort(eligible.begin(), eligible.end());
  Rng rng(derive_seed(seed, "control:" + tf_id));
  return eligible[rng.below(eligible.size())];
}

namespace {

bool gold_strictly_top(std::span<const float> target_logits, int gold_1b) {
  float gold = target_logits[gold_1b - 1];
  for (int i = 0; i < static_cast<int>(target_logits.size()); ++i) {
    if (i == gold_1b - 1) continue;
    if (!(gold > target_logits[i])) return false;
  }
  return true;
}

}  // namespace

std::vector<PatchResult> patch_sweep(const Model& model, const ParallelCorpus& corpus,
                                     const Tokenizer& tok, const std::string& eng_lang,
                                     const std::string& l2_lang,
                                     const std::vector<std::string>& tf_ids,
                                     const PatchExperimentConfig& cfg) {
  require(!tf_ids.empty(), Errc::empty_tf_set, "patch sweep needs TF instances");
  require(!cfg.positions.empty(), Errc::invalid_config, "no patch positions selected");
  const int top_layer = cfg.layer_hi < 0 ? model.spec.n_layers : cfg.layer_hi;
  require(cfg.layer_lo >= 0 && cfg.layer_lo <= top_layer &&
              top_layer <= model.spec.n_layers,
          Errc::invalid_config, "invalid layer range");

  // Control donors come from correctly answered English instances; score the
  // whole English side once.
  const auto& eng_list = corpus.instances(eng_lang);
  std::vector<DonorCandidate> pool(eng_list.size());
  std::vector<PromptEncoding> eng_enc(eng_list.size());
  parallel_for(static_cast<int>(eng_list.size()), cfg.threads, [&](int i) {
    eng_enc[i] = encode_mcqa(eng_list[i], tok, model.spec.maxlen);
    DecisionRecord rec = score_mcqa(model, eng_enc[i]);
    pool[i] = {rec.id, rec.gold, rec.correct};
  });
  std::map<std::string, int> eng_index;
  for (size_t i = 0; i < eng_list.size(); ++i) eng_index[eng_list[i].id] = static_cast<int>(i);

  const int n_layers_swept = top_layer - cfg.layer_lo + 1;
  int cells_per_instance = 0;
  if (cfg.run_equivalent) cells_per_instance += 1;
  if (cfg.run_control) cells_per_instance += 1;
  cells_per_instance *= static_cast<int>(cfg.positions.size()) * n_layers_swept;

  std::vector<std::vector<PatchResult>> per_instance(tf_ids.size());
  parallel_for(static_cast<int>(tf_ids.size()), cfg.threads, [&](int idx) {
    const std::string& id = tf_ids[idx];
    const Instance& l2_inst = corpus.instance(l2_lang, id);
    PromptEncoding l2_enc = encode_mcqa(l2_inst, tok, model.spec.maxlen);

    // Baseline (unpatched) L2 decision: the pre-patch prediction every cell
    // reports, and the sanity anchor for the flip definition.
    DecisionRecord baseline = score_mcqa(model, l2_enc);

    std::vector<std::pair<PatchMode, LayerTrace>> donors;
    auto eng_it = eng_index.find(id);
    require(eng_it != eng_index.end(), Errc::id_mismatch,
            "TF id '" + id + "' not present in English corpus");
    if (cfg.run_equivalent) {
      donors.emplace_back(PatchMode::equivalent,
                          forward(model, eng_enc[eng_it->second].tokens));
    }
    if (cfg.run_control) {
      std::string donor_id =
          select_control_donor(id, l2_enc.gold_index, pool, cfg.control_seed);
      donors.emplace_back(PatchMode::control,
                          forward(model, eng_enc[eng_index.at(donor_id)].tokens));
    }

    std::vector<PatchResult>& out = per_instance[idx];
    out.reserve(cells_per_instance);
    for (const auto& [mode, donor_trace] : donors) {
      require(donor_trace.seq_len() == l2_enc.last, Errc::length_mismatch,
              "donor and recipient prompt lengths differ for '" + id + "'");
      for (TokenPos pos : cfg.positions) {
        const int m = pos == TokenPos::last ? l2_enc.last : l2_enc.penult;
        for (int layer = cfg.layer_lo; layer <= top_layer; ++layer) {
          Patch patch{layer, m, capture(donor_trace, layer, m)};
          LayerTrace patched = patched_forward(model, l2_enc.tokens, {&patch, 1});
          auto logits = patched.final_logits();
          PatchResult res;
          res.id = id;
          res.mode = mode;
          res.position = pos;
          res.layer = layer;
          res.target_logits.reserve(l2_enc.targets.size());
          for (int t : l2_enc.targets) res.target_logits.push_back(logits[t]);
          res.flipped = gold_strictly_top(res.target_logits, l2_enc.gold_index);
          res.entropy = decision_entropy(res.target_logits);
          res.pre_predicted = baseline.predicted;
          res.gold = l2_enc.gold_index;
          out.push_back(std::move(res));
        }
      }
    }
  });

  std::vector<PatchResult> results;
  results.reserve(tf_ids.size() * cells_per_instance);
  for (auto& chunk : per_instance) {
    for (auto& r : chunk) results.push_back(std::move(r));
  }
  return results;
}

namespace {

struct CellKey {
  int mode;
  int position;
  int layer;
  bool operator<(const CellKey& o) const {
    if (mode != o.mode) return mode < o.mode;
    if (position != o.position) return position < o.position;
    return layer < o.layer;
  }
};

}  // namespace

std::vector<SweepCell> flip_stats(const std::vector<PatchResult>& results) {
  require(!results.empty(), Errc::empty_cell, "flip_stats: no results");
  std::map<CellKey, std::vector<const PatchResult*>> cells;
  for (const PatchResult& r : results) {
    cells[{static_cast<int>(r.mode), static_cast<int>(r.position), r.layer}].push_back(&r);
  }
  std::vector<SweepCell> out;
  out.reserve(cells.size());
  for (auto& [key, rows] : cells) {
    // id order within a cell: deterministic aggregation independent of how
    // the sweep was parallelized.
    std::sort(rows.begin(), rows.end(),
              [](const PatchResult* a, const PatchResult* b) { return a->id < b->id; });
    SweepCell cell;
    cell.mode = static_cast<PatchMode>(key.mode);
    cell.position = static_cast<TokenPos>(key.position);
    cell.layer = key.layer;
    cell.n = static_cast<int>(rows.size());
    double gold_sum = 0.0, orig_sum = 0.0, ent_sum = 0.0, ent_flipped = 0.0;
    for (const PatchResult* r : rows) {
      if (r->flipped) {
        ++cell.flips;
        ent_flipped += r->entropy;
      }
      gold_sum += r->target_logits[r->gold - 1];
      orig_sum += r->target_logits[r->pre_predicted - 1];
      ent_sum += r->entropy;
    }
    cell.flip_rate = static_cast<double>(cell.flips) / cell.n;
    cell.mean_gold_logit = gold_sum / cell.n;
    cell.mean_orig_logit = orig_sum / cell.n;
    cell.mean_entropy_all = ent_sum / cell.n;
    if (cell.flips > 0) cell.mean_entropy_flipped = ent_flipped / cell.flips;
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<DeltaCell> delta_flip(const std::vector<SweepCell>& equivalent,
                                  const std::vector<SweepCell>& control) {
  std::vector<DeltaCell> out;
  std::map<std::pair<int, int>, const SweepCell*> control_by_cell;
  for (const SweepCell& c : control) {
    require(c.mode == PatchMode::control, Errc::cell_mismatch,
            "control summary contains non-control cells");
    control_by_cell[{static_cast<int>(c.position), c.layer}] = &c;
  }
  size_t matched = 0;
  for (const SweepCell& e : equivalent) {
    require(e.mode == PatchMode::equivalent, Errc::cell_mismatch,
            "equivalent summary contains non-equivalent cells");
    auto it = control_by_cell.find({static_cast<int>(e.position), e.layer});
    require(it != control_by_cell.end(), Errc::cell_mismatch,
            "control summary is missing a cell present in the equivalent sweep");
    ++matched;
    out.push_back({e.position, e.layer, e.flip_rate - it->second->flip_rate});
  }
  require(matched == control_by_cell.size(), Errc::cell_mismatch,
          "equivalent summary is missing cells present in the control sweep");
  return out;
}

std::vector<EntropyCell> entropy_comparison(const std::vector<PatchResult>& equivalent,
                                            const std::vector<PatchResult>& control) {
  require(!equivalent.empty() && !control.empty(), Errc::empty_input,
          "entropy comparison needs both result sets");
  std::map<std::pair<int, int>, EntropyCell> cells;
  auto accumulate = [&cells](const std::vector<PatchResult>& results, bool is_equiv) {
    std::map<std::pair<int, int>, std::pair<int, double>> sums;
    for (const PatchResult& r : results) {
      if (!r.flipped) {
        // still materialize the cell so zero-flip cells are emitted as null
        sums.try_emplace({static_cast<int>(r.position), r.layer}, 0, 0.0);
        continue;
      }
      auto& [count, total] = sums[{static_cast<int>(r.position), r.layer}];
      ++count;
      total += r.entropy;
    }
    for (const auto& [key, sum] : sums) {
      EntropyCell& cell = cells[key];
      cell.position = static_cast<TokenPos>(key.first);
      cell.layer = key.second;
      if (is_equiv) {
        cell.n_equivalent_flips = sum.first;
        if (sum.first > 0) cell.mean_entropy_equivalent = sum.second / sum.first;
      } else {
        cell.n_control_flips = sum.first;
        if (sum.first > 0) cell.mean_entropy_control = sum.second / sum.first;
      }
    }
  };
  accumulate(equivalent, true);
  accumulate(control, false);
  std::vector<EntropyCell> out;
  out.reserve(cells.size());
  for (auto& [key, cell] : cells) out.push_back(cell);
  return out;
}

}  // namespace xlab
