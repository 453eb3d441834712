// xlab: desk-scale cross-lingual alignment and activation-patching lab.
//
// Pipeline: gen-corpus -> build-model -> eval -> align / patch -> report.
// Every artifact derives from one master seed; rerunning a command with the
// same inputs reproduces the same bytes regardless of --threads.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xlab/pipeline.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::string out_dir;
  std::string langs;
  std::string metric;
  std::string mode;
  std::string positions;
  std::string kind = "demo";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool force = false;
};

bool passed(const CLI::App& cmd, const char* name) {
  const CLI::Option* opt = cmd.get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

xlab::RunConfig assemble(const CliState& st, const CLI::App& cmd) {
  xlab::RunConfig cfg = st.config_path.empty()
                            ? xlab::default_run_config()
                            : xlab::load_run_config(st.config_path);
  if (passed(cmd, "--seed")) cfg.seed = st.seed;
  if (passed(cmd, "--threads")) cfg.threads = st.threads;
  if (passed(cmd, "--out")) cfg.out_dir = st.out_dir;
  if (passed(cmd, "--force")) cfg.force = true;
  if (passed(cmd, "--langs")) {
    auto comma = st.langs.find(',');
    if (comma == std::string::npos) {
      throw xlab::Error(xlab::Errc::invalid_config, "--langs expects a,b");
    }
    cfg.eng_lang = st.langs.substr(0, comma);
    cfg.l2_lang = st.langs.substr(comma + 1);
  }
  if (passed(cmd, "--metric")) {
    if (st.metric == "all") {
      cfg.metrics = {"dali", "dali-st", "mexa-t"};
    } else {
      cfg.metrics = {st.metric};
    }
  }
  if (passed(cmd, "--mode")) cfg.patch_mode = st.mode;
  if (passed(cmd, "--positions")) {
    cfg.patch_positions.clear();
    std::string rest = st.positions;
    while (!rest.empty()) {
      auto comma = rest.find(',');
      cfg.patch_positions.push_back(rest.substr(0, comma));
      rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
  }
  xlab::finalize_run_config(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, CliState& st) {
  cmd->add_option("--config", st.config_path, "JSON run configuration");
  cmd->add_option("--seed", st.seed, "master seed (labeled substreams derive from it)");
  cmd->add_option("--out", st.out_dir, "output directory");
  cmd->add_option("--threads", st.threads, "worker threads (results are thread-count invariant)");
  cmd->add_option("--langs", st.langs, "language pair, e.g. eng,fra");
  cmd->add_flag("--force", st.force, "overwrite existing corpus files");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-lingual alignment and activation patching laboratory"};
  app.require_subcommand(1);
  CliState st;

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate the parallel MCQA corpus");
  add_common(gen, st);
  CLI::App* build = app.add_subcommand("build-model", "construct and save a model");
  add_common(build, st);
  build->add_option("--kind", st.kind, "demo | random")->default_str("demo");
  CLI::App* eval = app.add_subcommand("eval", "score both languages, label TS/TF");
  add_common(eval, st);
  CLI::App* align = app.add_subcommand("align", "layer-wise alignment profiles and TS-TF deltas");
  add_common(align, st);
  align->add_option("--metric", st.metric, "dali | dali-st | mexa-t | mexa-f | all");
  CLI::App* patch = app.add_subcommand("patch", "activation-patching sweep over TF instances");
  add_common(patch, st);
  patch->add_option("--mode", st.mode, "equivalent | control | both");
  patch->add_option("--positions", st.positions, "comma list of last,penult");
  CLI::App* report = app.add_subcommand("report", "merge artifacts into report.json");
  add_common(report, st);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return xlab::cmd_gen_corpus(assemble(st, *gen));
    if (build->parsed()) return xlab::cmd_build_model(assemble(st, *build), st.kind);
    if (eval->parsed()) return xlab::cmd_eval(assemble(st, *eval));
    if (align->parsed()) return xlab::cmd_align(assemble(st, *align));
    if (patch->parsed()) return xlab::cmd_patch(assemble(st, *patch));
    if (report->parsed()) return xlab::cmd_report(assemble(st, *report));
  } catch (const xlab::Error& e) {
    std::cerr << e.what() << "\n";
    return xlab::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return xlab::kExitFailure;
  }
  return xlab::kExitFailure;
}
