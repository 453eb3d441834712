#include "xlab/align.hpp"

#include <algorithm>
#include <set>

#include "xlab/parallel.hpp"

namespace xlab {

LayerEmbeddings embed_last_token_one(const Model& model, std::span<const int> tokens) {
  LayerTrace trace = forward(model, tokens);
  LayerEmbeddings emb;
  emb.n_layers = trace.n_layers;
  emb.width = trace.width;
  emb.rows.resize(static_cast<size_t>(trace.n_layers + 1) * trace.width);
  const int last = trace.seq_len();
  for (int layer = 0; layer <= trace.n_layers; ++layer) {
    auto s = trace.state(layer, last);
    std::copy(s.begin(), s.end(),
              emb.rows.begin() + static_cast<size_t>(layer) * trace.width);
  }
  return emb;
}

std::vector<LayerEmbeddings> embed_last_token(const Model& model,
                                              const std::vector<std::vector<int>>& texts,
                                              int threads) {
  std::vector<LayerEmbeddings> out(texts.size());
  parallel_for(static_cast<int>(texts.size()), threads,
               [&](int i) { out[i] = embed_last_token_one(model, texts[i]); });
  return out;
}

namespace {

int pair_n_opt(const InstancePairEmbeddings& pair) {
  require(pair.l1.size() == pair.l2.size(), Errc::dimension_mismatch,
          "option counts differ across languages");
  require(pair.l1.size() >= 2, Errc::invalid_config, "dali needs n_opt >= 2");
  return static_cast<int>(pair.l1.size());
}

}  // namespace

int dali_bit(const InstancePairEmbeddings& pair, int layer, bool symmetric) {
  const int n = pair_n_opt(pair);
  for (int i = 0; i < n; ++i) {
    float matched = cosine_similarity(pair.l1[i].row(layer), pair.l2[i].row(layer));
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      float mismatched = cosine_similarity(pair.l1[i].row(layer), pair.l2[j].row(layer));
      if (!(matched > mismatched)) return 0;
      if (symmetric) {
        float rev = cosine_similarity(pair.l1[j].row(layer), pair.l2[i].row(layer));
        if (!(matched > rev)) return 0;
      }
    }
  }
  return 1;
}

int dali_strict_bit(const InstancePairEmbeddings& pair, int layer, bool symmetric) {
  if (dali_bit(pair, layer, symmetric) == 0) return 0;
  const int n = pair_n_opt(pair);
  for (int i = 0; i < n; ++i) {
    float matched = cosine_similarity(pair.l1[i].row(layer), pair.l2[i].row(layer));
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      float intra1 = cosine_similarity(pair.l1[i].row(layer), pair.l1[j].row(layer));
      float intra2 = cosine_similarity(pair.l2[i].row(layer), pair.l2[j].row(layer));
      if (!(matched > intra1)) return 0;
      if (!(matched > intra2)) return 0;
    }
  }
  return 1;
}

MexaResult mexa_flags(const std::vector<std::vector<float>>& u,
                      const std::vector<std::vector<float>>& v) {
  require(u.size() == v.size(), Errc::length_mismatch,
          "mexa: parallel sets differ in size");
  require(!u.empty(), Errc::empty_input, "mexa: empty input");
  const int n = static_cast<int>(u.size());
  // Precompute the full cross-similarity matrix once; every flag reads a row
  // and a column of it.
  std::vector<float> sim(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      sim[static_cast<size_t>(i) * n + j] = cosine_similarity(u[i], v[j]);
    }
  }
  MexaResult result;
  result.flags.resize(n);
  int aligned = 0;
  for (int i = 0; i < n; ++i) {
    float matched = sim[static_cast<size_t>(i) * n + i];
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      if (j == i) continue;
      if (!(matched > sim[static_cast<size_t>(i) * n + j])) ok = false;
      if (!(matched > sim[static_cast<size_t>(j) * n + i])) ok = false;
    }
    result.flags[i] = ok ? 1 : 0;
    aligned += result.flags[i];
  }
  result.fraction = static_cast<double>(aligned) / n;
  return result;
}

const char* align_metric_name(AlignMetric metric) {
  switch (metric) {
    case AlignMetric::dali: return "dali";
    case AlignMetric::dali_strict: return "dali_st";
    case AlignMetric::mexa_t: return "mexa_t";
    case AlignMetric::mexa_f: return "mexa_f";
  }
  return "unknown";
}

namespace {

void finish_profile(AlignmentProfile& profile, int n_layers) {
  profile.n = static_cast<int>(profile.ids.size());
  profile.fraction.assign(n_layers + 1, 0.0);
  for (const auto& row : profile.bits) {
    for (int layer = 0; layer <= n_layers; ++layer) profile.fraction[layer] += row[layer];
  }
  for (double& f : profile.fraction) f /= profile.n;
  profile.lambda_max = 0;
  for (int layer = 1; layer <= n_layers; ++layer) {
    if (profile.fraction[layer] > profile.fraction[profile.lambda_max]) {
      profile.lambda_max = layer;
    }
  }
}

}  // namespace

AlignmentProfile alignment_profile(const Model& model, const ParallelCorpus& corpus,
                                   const Tokenizer& tok, const std::string& l1,
                                   const std::string& l2, AlignMetric metric,
                                   const std::vector<std::string>& subset_ids,
                                   int threads, bool symmetric_dali) {
  require(!subset_ids.empty(), Errc::empty_subset, "alignment subset is empty");
  const int n = static_cast<int>(subset_ids.size());
  const int n_layers = model.spec.n_layers;

  AlignmentProfile profile;
  profile.metric = metric;
  profile.ids = subset_ids;
  profile.bits.assign(n, std::vector<uint8_t>(n_layers + 1, 0));

  if (metric == AlignMetric::dali || metric == AlignMetric::dali_strict) {
    parallel_for(n, threads, [&](int idx) {
      const Instance& a = corpus.instance(l1, subset_ids[idx]);
      const Instance& b = corpus.instance(l2, subset_ids[idx]);
      InstancePairEmbeddings pair;
      for (int o = 1; o <= a.n_opt(); ++o) {
        pair.l1.push_back(embed_last_token_one(
            model, encode_text(render_concat(a, o), tok, model.spec.maxlen)));
        pair.l2.push_back(embed_last_token_one(
            model, encode_text(render_concat(b, o), tok, model.spec.maxlen)));
      }
      for (int layer = 0; layer <= n_layers; ++layer) {
        profile.bits[idx][layer] =
            metric == AlignMetric::dali
                ? static_cast<uint8_t>(dali_bit(pair, layer, symmetric_dali))
                : static_cast<uint8_t>(dali_strict_bit(pair, layer, symmetric_dali));
      }
    });
  } else {
    // MEXA over premises: competitors are the other sampled premises. The
    // task-specific and generic variants share this computation; they differ
    // only in which texts the caller feeds (task premises vs generic
    // parallel sentences).
    std::vector<LayerEmbeddings> emb1(n), emb2(n);
    parallel_for(n, threads, [&](int idx) {
      const Instance& a = corpus.instance(l1, subset_ids[idx]);
      const Instance& b = corpus.instance(l2, subset_ids[idx]);
      emb1[idx] = embed_last_token_one(
          model, encode_text(a.effective_premise(), tok, model.spec.maxlen));
      emb2[idx] = embed_last_token_one(
          model, encode_text(b.effective_premise(), tok, model.spec.maxlen));
    });
    for (int layer = 0; layer <= n_layers; ++layer) {
      std::vector<std::vector<float>> u(n), v(n);
      for (int i = 0; i < n; ++i) {
        auto r1 = emb1[i].row(layer);
        auto r2 = emb2[i].row(layer);
        u[i].assign(r1.begin(), r1.end());
        v[i].assign(r2.begin(), r2.end());
      }
      MexaResult res = mexa_flags(u, v);
      for (int i = 0; i < n; ++i) profile.bits[i][layer] = static_cast<uint8_t>(res.flags[i]);
    }
  }
  finish_profile(profile, n_layers);
  return profile;
}

AlignmentProfile restrict_profile(const AlignmentProfile& profile,
                                  const std::vector<std::string>& subset_ids) {
  require(!subset_ids.empty(), Errc::empty_subset, "profile subset is empty");
  std::set<std::string> wanted(subset_ids.begin(), subset_ids.end());
  AlignmentProfile out;
  out.metric = profile.metric;
  for (size_t i = 0; i < profile.ids.size(); ++i) {
    if (wanted.count(profile.ids[i])) {
      out.ids.push_back(profile.ids[i]);
      out.bits.push_back(profile.bits[i]);
    }
  }
  require(out.ids.size() == wanted.size(), Errc::index_out_of_range,
          "subset contains ids not in the profile");
  finish_profile(out, static_cast<int>(profile.fraction.size()) - 1);
  return out;
}

TsTfDelta ts_tf_delta(const AlignmentProfile& ts, const AlignmentProfile& tf,
                      double alpha) {
  require(ts.n >= 1, Errc::empty_group, "TS group is empty");
  require(tf.n >= 1, Errc::empty_group, "TF group is empty");
  require(ts.fraction.size() == tf.fraction.size(), Errc::cell_mismatch,
          "profiles cover different layer counts");
  require(ts.metric == tf.metric, Errc::cell_mismatch, "profiles use different metrics");

  TsTfDelta d;
  d.metric = ts.metric;
  d.n_ts = ts.n;
  d.n_tf = tf.n;
  // Pooled per-layer fraction selects the test layer; earliest max on ties.
  int best = 0;
  double best_frac = -1.0;
  for (size_t layer = 0; layer < ts.fraction.size(); ++layer) {
    double pooled = (ts.fraction[layer] * ts.n + tf.fraction[layer] * tf.n) /
                    static_cast<double>(ts.n + tf.n);
    if (pooled > best_frac) {
      best_frac = pooled;
      best = static_cast<int>(layer);
    }
  }
  d.lambda_max = best;
  d.frac_ts = ts.fraction[best];
  d.frac_tf = tf.fraction[best];
  d.delta = d.frac_ts - d.frac_tf;
  long long x1 = 0, x2 = 0;
  for (const auto& row : ts.bits) x1 += row[best];
  for (const auto& row : tf.bits) x2 += row[best];
  ProportionTest test = two_prop_ztest_one_sided(x1, ts.n, x2, tf.n, alpha);
  d.z = test.z;
  d.p = test.p;
  d.significant = test.significant;
  return d;
}

}  // namespace xlab
