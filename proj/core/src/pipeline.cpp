#include "xlab/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlab/parallel.hpp"
#include "xlab/rng.hpp"

namespace xlab {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

int RunConfig::effective_threads() const {
  return threads > 0 ? threads : default_threads();
}

RunConfig default_run_config() { return RunConfig{}; }

void finalize_run_config(RunConfig& cfg) {
  cfg.demo.seed = derive_seed(cfg.seed, "model");
  cfg.gen.seed = derive_seed(cfg.seed, "corpus");
  if (cfg.gen.languages.empty()) cfg.gen.languages = cfg.demo.languages;
  if (cfg.gen.n_opt == 0) cfg.gen.n_opt = cfg.demo.n_opt;
  if (cfg.gen.premise_len == 0) cfg.gen.premise_len = cfg.demo.premise_len;
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// include_volatile adds the fields that do not affect computed values
// (threads, paths); the config hash must not cover them, so that reruns
// with a different --threads or --out stay byte-identical.
ordered_json run_config_json(const RunConfig& cfg, bool include_volatile) {
  ordered_json j;
  j["seed"] = cfg.seed;
  if (include_volatile) {
    j["threads"] = cfg.threads;
    // only explicitly chosen paths are serialized; defaulted corpus/model
    // locations re-derive from --out so configs stay relocatable
    ordered_json paths;
    paths["out"] = cfg.out_dir.string();
    if (!cfg.corpus_dir.empty()) paths["corpus"] = cfg.corpus_dir.string();
    if (!cfg.model_dir.empty()) paths["model"] = cfg.model_dir.string();
    j["paths"] = paths;
  }
  j["demo"] = ordered_json::parse(demo_config_to_json(cfg.demo));
  j["gen"] = {{"n_instances", cfg.gen.n_instances},
              {"n_opt", cfg.gen.n_opt},
              {"premise_len", cfg.gen.premise_len},
              {"languages", cfg.gen.languages}};
  j["random_spec"] = {{"width", cfg.random_spec.width},
                      {"n_layers", cfg.random_spec.n_layers},
                      {"n_heads", cfg.random_spec.n_heads},
                      {"head_dim", cfg.random_spec.head_dim},
                      {"vocab", cfg.random_spec.vocab},
                      {"maxlen", cfg.random_spec.maxlen},
                      {"mlp_hidden", cfg.random_spec.mlp_hidden},
                      {"norm", cfg.random_spec.norm == NormKind::rms ? "rms" : "identity"}};
  j["langs"] = {cfg.eng_lang, cfg.l2_lang};
  j["metrics"] = cfg.metrics;
  j["dali_symmetric"] = cfg.dali_symmetric;
  j["patch"] = {{"mode", cfg.patch_mode},
                {"positions", cfg.patch_positions},
                {"layer_lo", cfg.patch_layer_lo},
                {"layer_hi", cfg.patch_layer_hi}};
  return j;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  return run_config_json(cfg, /*include_volatile=*/true).dump(2);
}

std::string config_hash(const RunConfig& cfg) {
  // Canonical form: alphabetically sorted keys, no whitespace.
  std::string canon =
      json::parse(run_config_json(cfg, /*include_volatile=*/false).dump()).dump();
  std::uint64_t h = fnv1a64(canon.data(), canon.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string meta_comment(const RunConfig& cfg) {
  return "xlab v" XLAB_VERSION " seed=" + std::to_string(cfg.seed) +
         " config=" + config_hash(cfg);
}

std::string meta_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  return j.dump();
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), Errc::missing_artifact, "config file " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Errc::invalid_config, std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("paths")) {
      const json& p = j["paths"];
      if (p.contains("out")) cfg.out_dir = p["out"].get<std::string>();
      if (p.contains("corpus")) cfg.corpus_dir = p["corpus"].get<std::string>();
      if (p.contains("model")) cfg.model_dir = p["model"].get<std::string>();
    }
    if (j.contains("demo")) cfg.demo = parse_demo_config(j["demo"].dump());
    if (j.contains("gen")) {
      const json& g = j["gen"];
      if (g.contains("n_instances")) cfg.gen.n_instances = g["n_instances"].get<int>();
      if (g.contains("n_opt")) cfg.gen.n_opt = g["n_opt"].get<int>();
      if (g.contains("premise_len")) cfg.gen.premise_len = g["premise_len"].get<int>();
      if (g.contains("languages"))
        cfg.gen.languages = g["languages"].get<std::vector<std::string>>();
    }
    if (j.contains("random_spec")) {
      const json& r = j["random_spec"];
      if (r.contains("width")) cfg.random_spec.width = r["width"].get<int>();
      if (r.contains("n_layers")) cfg.random_spec.n_layers = r["n_layers"].get<int>();
      if (r.contains("n_heads")) cfg.random_spec.n_heads = r["n_heads"].get<int>();
      if (r.contains("head_dim")) cfg.random_spec.head_dim = r["head_dim"].get<int>();
      if (r.contains("vocab")) cfg.random_spec.vocab = r["vocab"].get<int>();
      if (r.contains("maxlen")) cfg.random_spec.maxlen = r["maxlen"].get<int>();
      if (r.contains("mlp_hidden")) cfg.random_spec.mlp_hidden = r["mlp_hidden"].get<int>();
      if (r.contains("norm")) {
        cfg.random_spec.norm = r["norm"].get<std::string>() == "identity"
                                   ? NormKind::identity
                                   : NormKind::rms;
      }
    }
    if (j.contains("langs")) {
      auto langs = j["langs"].get<std::vector<std::string>>();
      require(langs.size() == 2, Errc::invalid_config, "langs must name two languages");
      cfg.eng_lang = langs[0];
      cfg.l2_lang = langs[1];
    }
    if (j.contains("metrics")) cfg.metrics = j["metrics"].get<std::vector<std::string>>();
    if (j.contains("dali_symmetric")) cfg.dali_symmetric = j["dali_symmetric"].get<bool>();
    if (j.contains("patch")) {
      const json& p = j["patch"];
      if (p.contains("mode")) cfg.patch_mode = p["mode"].get<std::string>();
      if (p.contains("positions"))
        cfg.patch_positions = p["positions"].get<std::vector<std::string>>();
      if (p.contains("layer_lo")) cfg.patch_layer_lo = p["layer_lo"].get<int>();
      if (p.contains("layer_hi")) cfg.patch_layer_hi = p["layer_hi"].get<int>();
    }
  } catch (const json::exception& e) {
    raise(Errc::invalid_config, std::string("config field error: ") + e.what());
  }
  return cfg;
}

namespace {

// ---------------------------------------------------------------- CSV out

struct CsvWriter {
  std::filesystem::path file;
  std::string meta;
  std::string header;
  std::vector<std::string> rows;

  void row(const std::vector<std::string>& fields) {
    std::string line;
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) line += ',';
      line += fields[i];
    }
    rows.push_back(std::move(line));
  }

  void write_sorted() {
    std::sort(rows.begin(), rows.end());
    std::ofstream out(file);
    require(out.good(), Errc::io_error, "cannot write " + file.string());
    out << "# " << meta << "\n" << header << "\n";
    for (const std::string& r : rows) out << r << "\n";
    require(out.good(), Errc::io_error, "short write to " + file.string());
  }
};

// Rows sort lexicographically; zero-pad layers so the order is numeric.
std::string layer_field(int layer) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d", layer);
  return buf;
}

int map_exit(const Error& e) {
  switch (e.code()) {
    case Errc::invalid_config:
    case Errc::invalid_gen_config:
    case Errc::invalid_spec:
      return kExitConfigError;
    case Errc::missing_artifact:
      return kExitMissingArtifact;
    case Errc::empty_tf_set:
    case Errc::empty_subset:
    case Errc::empty_group:
      return kExitEmptyAnalysisSet;
    default:
      return kExitFailure;
  }
}

template <typename Fn>
int guarded(const char* what, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return map_exit(e);
  } catch (const std::exception& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitFailure;
  }
}

AlignMetric metric_from_flag(const std::string& name) {
  if (name == "dali") return AlignMetric::dali;
  if (name == "dali-st" || name == "dali_st") return AlignMetric::dali_strict;
  if (name == "mexa-t" || name == "mexa_t") return AlignMetric::mexa_t;
  if (name == "mexa-f" || name == "mexa_f") return AlignMetric::mexa_f;
  raise(Errc::invalid_config, "unknown metric '" + name + "'");
}

Tokenizer load_model_tokenizer(const RunConfig& cfg) {
  return load_tokenizer(cfg.model_path() / "tokenizer.json");
}

EvalReport load_eval_report(const RunConfig& cfg) {
  std::filesystem::path file = cfg.out_dir / "eval_report.json";
  std::ifstream in(file);
  require(in.good(), Errc::missing_artifact, file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_eval_report(ss.str());
}

}  // namespace

int cmd_gen_corpus(const RunConfig& cfg) {
  return guarded("gen-corpus", [&] {
    DemoVocab vocab = build_demo_vocab(cfg.demo);
    ParallelCorpus corpus = generate_parallel_corpus(cfg.gen, vocab);
    save_corpus(corpus, cfg.corpus_path(), meta_comment(cfg), cfg.force);
    // Re-read what we just wrote so schema drift fails loudly here.
    validate_parallel(load_corpus(cfg.corpus_path()));
  });
}

int cmd_build_model(const RunConfig& cfg, const std::string& kind) {
  return guarded("build-model", [&] {
    std::filesystem::path dir = cfg.model_path();
    if (kind == "demo") {
      auto [model, vocab] = build_demo_model(cfg.demo);
      save_model(model, dir, meta_json(cfg));
      save_tokenizer(vocab.tokenizer, dir / "tokenizer.json", meta_json(cfg));
      std::ofstream out(dir / "demo_config.json");
      require(out.good(), Errc::io_error, "cannot write demo_config.json");
      out << demo_config_to_json(cfg.demo) << "\n";
    } else if (kind == "random") {
      Model model = build_random_model(cfg.random_spec, derive_seed(cfg.seed, "model"));
      save_model(model, dir, meta_json(cfg));
    } else {
      raise(Errc::invalid_config, "unknown model kind '" + kind + "'");
    }
  });
}

int cmd_eval(const RunConfig& cfg) {
  return guarded("eval", [&] {
    Model model = load_model(cfg.model_path());
    Tokenizer tok = load_model_tokenizer(cfg);
    ParallelCorpus corpus = load_corpus(cfg.corpus_path());
    EvalReport report = evaluate_corpus(model, corpus, tok, cfg.eng_lang, cfg.l2_lang,
                                        cfg.effective_threads());
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir / "eval_report.json");
    require(out.good(), Errc::io_error, "cannot write eval_report.json");
    out << eval_report_to_json(report, meta_json(cfg)) << "\n";
  });
}

int cmd_align(const RunConfig& cfg) {
  return guarded("align", [&] {
    Model model = load_model(cfg.model_path());
    Tokenizer tok = load_model_tokenizer(cfg);
    ParallelCorpus corpus = load_corpus(cfg.corpus_path());
    EvalReport report = load_eval_report(cfg);

    std::vector<std::string> pooled = report.ts_ids;
    pooled.insert(pooled.end(), report.tf_ids.begin(), report.tf_ids.end());
    std::sort(pooled.begin(), pooled.end());
    require(!pooled.empty(), Errc::empty_subset, "no TS or TF instances to align");

    std::vector<std::string> all_ids;
    for (const Instance& inst : corpus.instances(cfg.eng_lang)) all_ids.push_back(inst.id);

    CsvWriter profile_csv{cfg.out_dir / "alignment_profile.csv", meta_comment(cfg),
                          "metric,lang,group,layer,n,frac_aligned"};
    CsvWriter delta_csv{cfg.out_dir / "ts_tf_delta.csv", meta_comment(cfg),
                        "metric,lang,lambda_max,n_ts,n_tf,frac_ts,frac_tf,delta,z,p,"
                        "significant"};

    for (const std::string& metric_flag : cfg.metrics) {
      AlignMetric metric = metric_from_flag(metric_flag);
      const char* mname = align_metric_name(metric);
      auto emit_profile = [&](const AlignmentProfile& p, const std::string& group) {
        for (size_t layer = 0; layer < p.fraction.size(); ++layer) {
          profile_csv.row({mname, cfg.l2_lang, group, layer_field(static_cast<int>(layer)),
                           std::to_string(p.n), fmt_num(p.fraction[layer])});
        }
      };
      if (metric == AlignMetric::mexa_f) {
        // Generic-sentence variant: all premises, no task grouping.
        AlignmentProfile profile =
            alignment_profile(model, corpus, tok, cfg.eng_lang, cfg.l2_lang, metric,
                              all_ids, cfg.effective_threads(), cfg.dali_symmetric);
        emit_profile(profile, "all");
        continue;
      }
      AlignmentProfile pooled_profile =
          alignment_profile(model, corpus, tok, cfg.eng_lang, cfg.l2_lang, metric,
                            pooled, cfg.effective_threads(), cfg.dali_symmetric);
      emit_profile(pooled_profile, "pooled");
      if (!report.ts_ids.empty() && !report.tf_ids.empty()) {
        AlignmentProfile ts = restrict_profile(pooled_profile, report.ts_ids);
        AlignmentProfile tf = restrict_profile(pooled_profile, report.tf_ids);
        emit_profile(ts, "ts");
        emit_profile(tf, "tf");
        TsTfDelta d = ts_tf_delta(ts, tf);
        delta_csv.row({mname, cfg.l2_lang, std::to_string(d.lambda_max),
                       std::to_string(d.n_ts), std::to_string(d.n_tf), fmt_num(d.frac_ts),
                       fmt_num(d.frac_tf), fmt_num(d.delta), fmt_num(d.z), fmt_num(d.p),
                       d.significant ? "1" : "0"});
      }
    }
    std::filesystem::create_directories(cfg.out_dir);
    profile_csv.write_sorted();
    delta_csv.write_sorted();
  });
}

int cmd_patch(const RunConfig& cfg) {
  return guarded("patch", [&] {
    Model model = load_model(cfg.model_path());
    Tokenizer tok = load_model_tokenizer(cfg);
    ParallelCorpus corpus = load_corpus(cfg.corpus_path());
    EvalReport report = load_eval_report(cfg);
    require(!report.tf_ids.empty(), Errc::empty_tf_set,
            "no transfer failures to patch");

    PatchExperimentConfig pcfg;
    pcfg.run_equivalent = cfg.patch_mode == "equivalent" || cfg.patch_mode == "both";
    pcfg.run_control = cfg.patch_mode == "control" || cfg.patch_mode == "both";
    require(pcfg.run_equivalent || pcfg.run_control, Errc::invalid_config,
            "patch mode must be equivalent, control, or both");
    pcfg.positions.clear();
    for (const std::string& p : cfg.patch_positions) {
      if (p == "last") {
        pcfg.positions.push_back(TokenPos::last);
      } else if (p == "penult") {
        pcfg.positions.push_back(TokenPos::penult);
      } else {
        raise(Errc::invalid_config, "unknown position '" + p + "'");
      }
    }
    pcfg.layer_lo = cfg.patch_layer_lo;
    pcfg.layer_hi = cfg.patch_layer_hi;
    pcfg.control_seed = derive_seed(cfg.seed, "control");
    pcfg.threads = cfg.effective_threads();

    std::vector<PatchResult> results =
        patch_sweep(model, corpus, tok, cfg.eng_lang, cfg.l2_lang, report.tf_ids, pcfg);
    std::vector<SweepCell> cells = flip_stats(results);

    std::filesystem::create_directories(cfg.out_dir);
    CsvWriter sweep_csv{cfg.out_dir / "patch_sweep.csv", meta_comment(cfg),
                        "mode,lang,position,layer,n,flips,flip_rate,mean_gold_logit,"
                        "mean_orig_logit,mean_entropy_all,mean_entropy_flipped"};
    for (const SweepCell& c : cells) {
      sweep_csv.row({patch_mode_name(c.mode), cfg.l2_lang, token_pos_name(c.position),
                     layer_field(c.layer), std::to_string(c.n), std::to_string(c.flips),
                     fmt_num(c.flip_rate), fmt_num(c.mean_gold_logit),
                     fmt_num(c.mean_orig_logit), fmt_num(c.mean_entropy_all),
                     c.mean_entropy_flipped ? fmt_num(*c.mean_entropy_flipped) : ""});
    }
    sweep_csv.write_sorted();

    if (pcfg.run_equivalent && pcfg.run_control) {
      std::vector<SweepCell> equiv, control;
      for (const SweepCell& c : cells) {
        (c.mode == PatchMode::equivalent ? equiv : control).push_back(c);
      }
      CsvWriter delta_csv{cfg.out_dir / "delta_flip.csv", meta_comment(cfg),
                          "lang,position,layer,delta_flip_rate"};
      for (const DeltaCell& d : delta_flip(equiv, control)) {
        delta_csv.row({cfg.l2_lang, token_pos_name(d.position), layer_field(d.layer),
                       fmt_num(d.delta)});
      }
      delta_csv.write_sorted();

      std::vector<PatchResult> equiv_results, control_results;
      for (const PatchResult& r : results) {
        (r.mode == PatchMode::equivalent ? equiv_results : control_results).push_back(r);
      }
      CsvWriter entropy_csv{cfg.out_dir / "entropy.csv", meta_comment(cfg),
                            "lang,position,layer,n_flips_equivalent,"
                            "mean_entropy_equivalent,n_flips_control,mean_entropy_control"};
      for (const EntropyCell& c : entropy_comparison(equiv_results, control_results)) {
        entropy_csv.row(
            {cfg.l2_lang, token_pos_name(c.position), layer_field(c.layer),
             std::to_string(c.n_equivalent_flips),
             c.mean_entropy_equivalent ? fmt_num(*c.mean_entropy_equivalent) : "",
             std::to_string(c.n_control_flips),
             c.mean_entropy_control ? fmt_num(*c.mean_entropy_control) : ""});
      }
      entropy_csv.write_sorted();
    }
  });
}

namespace {

// CSV cell -> JSON value: numbers stay numbers so the merged report echoes
// the emitted values exactly; empty cells become null.
ordered_json csv_value(const std::string& field) {
  if (field.empty()) return nullptr;
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end && *end == '\0') return v;
  return field;
}

ordered_json csv_to_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), Errc::missing_artifact, file.string());
  std::string line;
  std::vector<std::string> columns;
  ordered_json rows = ordered_json::array();
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (columns.empty()) {
      columns = fields;
      continue;
    }
    require(fields.size() == columns.size(), Errc::malformed_line,
            file.string() + ": ragged row");
    ordered_json row;
    for (size_t i = 0; i < columns.size(); ++i) row[columns[i]] = csv_value(fields[i]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

int cmd_report(const RunConfig& cfg) {
  return guarded("report", [&] {
    ordered_json report;
    ordered_json meta = ordered_json::parse(meta_json(cfg));
    meta["tool"] = "xlab";
    meta["version"] = XLAB_VERSION;
    report["meta"] = meta;
    {
      std::filesystem::path file = cfg.out_dir / "eval_report.json";
      std::ifstream in(file);
      require(in.good(), Errc::missing_artifact, file.string());
      ordered_json eval = ordered_json::parse(in);
      eval.erase("meta");
      report["eval"] = eval;
    }
    report["alignment_profile"] = csv_to_json(cfg.out_dir / "alignment_profile.csv");
    report["ts_tf_delta"] = csv_to_json(cfg.out_dir / "ts_tf_delta.csv");
    report["patch_sweep"] = csv_to_json(cfg.out_dir / "patch_sweep.csv");
    report["delta_flip"] = csv_to_json(cfg.out_dir / "delta_flip.csv");
    report["entropy"] = csv_to_json(cfg.out_dir / "entropy.csv");
    std::ofstream out(cfg.out_dir / "report.json");
    require(out.good(), Errc::io_error, "cannot write report.json");
    out << report.dump(2) << "\n";
  });
}

}  // namespace xlab
