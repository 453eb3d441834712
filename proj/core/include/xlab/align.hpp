#pragma once

#include <string>
#include <vector>

#include "xlab/corpus.hpp"
#include "xlab/eval.hpp"
#include "xlab/model.hpp"
#include "xlab/stats.hpp"

namespace xlab {

// Last-token residual states h_M^layer for one text: rows 0..n_layers.
struct LayerEmbeddings {
  int n_layers = 0;
  int width = 0;
  std::vector<float> rows;  // (n_layers+1) * width

  std::span<const float> row(int layer) const {
    require(layer >= 0 && layer <= n_layers, Errc::index_out_of_range,
            "embedding layer out of range");
    return {rows.data() + static_cast<size_t>(layer) * width, static_cast<size_t>(width)};
  }
};

LayerEmbeddings embed_last_token_one(const Model& model, std::span<const int> tokens);
std::vector<LayerEmbeddings> embed_last_token(const Model& model,
                                              const std::vector<std::vector<int>>& texts,
                                              int threads = 1);

// Embeddings of (P+o_i) for every option i, L1 (English) and L2.
struct InstancePairEmbeddings {
  std::vector<LayerEmbeddings> l1;  // one per option
  std::vector<LayerEmbeddings> l2;
};

// Eq.-2-style bit: every cross-lingual matched pair beats the L1-anchored
// mismatched pairs, strictly; ties score 0. `symmetric` additionally anchors
// the comparisons on L2 (not the written definition; off by default).
int dali_bit(const InstancePairEmbeddings& pair, int layer, bool symmetric = false);

// dali plus: matched cross-lingual similarity beats every within-language
// mismatched similarity on both sides.
int dali_strict_bit(const InstancePairEmbeddings& pair, int layer, bool symmetric = false);

struct MexaResult {
  std::vector<int> flags;  // one per sample
  double fraction = 0.0;
};

// Per-sample retrieval bit: the parallel pair must beat all 2N-2 competitor
// pairings strictly. N == 1 is vacuously aligned.
MexaResult mexa_flags(const std::vector<std::vector<float>>& u,
                      const std::vector<std::vector<float>>& v);

enum class AlignMetric { dali, dali_strict, mexa_t, mexa_f };

const char* align_metric_name(AlignMetric metric);

struct AlignmentProfile {
  AlignMetric metric = AlignMetric::dali;
  int n = 0;
  std::vector<std::string> ids;            // instance order
  std::vector<std::vector<uint8_t>> bits;  // [instance][layer]
  std::vector<double> fraction;            // per layer
  int lambda_max = 0;                      // earliest layer with max fraction
};

// Embeds every needed text once, evaluates the metric per instance and
// layer, and aggregates per-layer aligned fractions. subset_ids must be
// non-empty; ids not present in the corpus raise.
AlignmentProfile alignment_profile(const Model& model, const ParallelCorpus& corpus,
                                   const Tokenizer& tok, const std::string& l1,
                                   const std::string& l2, AlignMetric metric,
                                   const std::vector<std::string>& subset_ids,
                                   int threads = 1, bool symmetric_dali = false);

// Restriction of a computed profile to a subset of its instances (fractions
// and lambda_max recomputed). Used to split one pooled computation into the
// TS and TF groups without re-embedding.
AlignmentProfile restrict_profile(const AlignmentProfile& profile,
                                  const std::vector<std::string>& subset_ids);

struct TsTfDelta {
  AlignMetric metric = AlignMetric::dali;
  int lambda_max = 0;  // earliest max of the pooled profile
  int n_ts = 0, n_tf = 0;
  double frac_ts = 0.0, frac_tf = 0.0;
  double delta = 0.0;
  double z = 0.0, p = 1.0;
  bool significant = false;
};

// Evaluates both groups at the pooled profile's lambda_max and runs the
// one-sided two-proportion z-test (H1: TS more aligned than TF).
TsTfDelta ts_tf_delta(const AlignmentProfile& ts, const AlignmentProfile& tf,
                      double alpha = 0.05);

}  // namespace xlab
