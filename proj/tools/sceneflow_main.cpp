// Command-line front end. Everything goes through the C API; this file only
// parses arguments, builds config override patches, and maps statuses to
// exit codes (0 ok, 1 scenes failed or runtime error, 2 bad config/usage).

#include <cstdio>
#include <cstdint>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sceneflow/c_api.h"

namespace {

using nlohmann::json;

struct BatchOpts {
  std::string config_path;
  std::string input_dir;
  std::string output_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  // count() on these tells us whether the flag was given; only given flags
  // go into the override patch, so config-file values survive otherwise.
  CLI::Option* input_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* dump_opt = nullptr;
};

void add_batch_flags(CLI::App* cmd, BatchOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file; defaults used when omitted")
      ->check(CLI::ExistingFile);
  o.input_opt = cmd->add_option("--input", o.input_dir, "Directory of scene-pair subdirectories");
  o.output_opt = cmd->add_option("--output", o.output_dir, "Directory for flow files and reports");
  o.workers_opt = cmd->add_option("--workers", o.workers, "Parallel scene workers")
      ->check(CLI::Range(1, 4096));
  o.seed_opt = cmd->add_option("--seed", o.seed, "Global seed");
  o.dump_opt = cmd->add_flag("--dump-intermediate", "Also write ground masks, cluster ids, and backbone flow");
}

int status_to_exit(sf_status st) {
  if (st == SF_OK) return 0;
  return st == SF_ERROR_CONFIG ? 2 : 1;
}

int print_error(const char* when) {
  std::fprintf(stderr, "sceneflow: %s: %s\n", when, sf_last_error_message());
  return 1;
}

int run_batch(const BatchOpts& o, sf_status (*driver)(const sf_config*, char**)) {
  sf_config* cfg = nullptr;
  if (o.config_path.empty()) {
    cfg = sf_config_create();
  } else {
    const sf_status st = sf_config_from_file(o.config_path.c_str(), &cfg);
    if (st != SF_OK) {
      print_error("loading config");
      return status_to_exit(st);
    }
  }

  json patch = json::object();
  if (o.input_opt->count() > 0) patch["input_dir"] = o.input_dir;
  if (o.output_opt->count() > 0) patch["output_dir"] = o.output_dir;
  if (o.workers_opt->count() > 0) patch["workers"] = o.workers;
  if (o.seed_opt->count() > 0) patch["seed"] = o.seed;
  if (o.dump_opt->count() > 0) patch["dump_intermediate"] = true;
  if (!patch.empty()) {
    const sf_status st = sf_config_override(cfg, patch.dump().c_str());
    if (st != SF_OK) {
      print_error("applying flags");
      sf_config_free(cfg);
      return status_to_exit(st);
    }
  }

  char* report = nullptr;
  const sf_status st = driver(cfg, &report);
  if (report != nullptr) {
    std::fputs(report, stdout);
    std::fputc('\n', stdout);
    sf_string_free(report);
  }
  if (st != SF_OK) {
    std::fprintf(stderr, "sceneflow: %s (%s)\n", sf_last_error_message(),
                 sf_status_name(st));
  }
  sf_config_free(cfg);
  return status_to_exit(st);
}

struct SynthOpts {
  std::string preset = "flat";
  std::string out_dir;
  std::string params;
  int count = 1;
  std::uint64_t seed = 0;
};

int run_synth(const SynthOpts& o) {
  const sf_status st =
      sf_synth_generate(o.preset.c_str(), o.params.empty() ? nullptr : o.params.c_str(),
                        o.seed, o.count, o.out_dir.c_str());
  if (st != SF_OK) {
    print_error("generating scenes");
    return status_to_exit(st);
  }
  const json summary = {{"preset", o.preset},
                        {"count", o.count},
                        {"seed", o.seed},
                        {"out_dir", o.out_dir}};
  std::fputs(summary.dump(2).c_str(), stdout);
  std::fputc('\n', stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-free LiDAR scene flow"};
  app.require_subcommand(1);

  BatchOpts run_opts, eval_opts, diag_opts, ablate_opts;
  CLI::App* cmd_run =
      app.add_subcommand("run", "Estimate flow for every scene pair and write reports");
  add_batch_flags(cmd_run, run_opts);
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "Re-score previously written flow files against ground truth");
  add_batch_flags(cmd_eval, eval_opts);
  CLI::App* cmd_diag =
      app.add_subcommand("diag", "Ground-truth diagnostics: chamfer violation, dynamic ratios");
  add_batch_flags(cmd_diag, diag_opts);
  CLI::App* cmd_ablate =
      app.add_subcommand("ablate", "Run backbone / +motion / full variants and compare");
  add_batch_flags(cmd_ablate, ablate_opts);

  SynthOpts synth_opts;
  CLI::App* cmd_synth = app.add_subcommand("synth", "Generate synthetic scene pairs");
  cmd_synth->add_option("--preset", synth_opts.preset, "Scene family")
      ->check(CLI::IsMember({"flat", "step", "terrace", "truck", "ratio_sweep"}));
  cmd_synth->add_option("--count", synth_opts.count, "Number of scene pairs")
      ->check(CLI::Range(1, 1000000));
  cmd_synth->add_option("--out", synth_opts.out_dir, "Output directory")->required();
  cmd_synth->add_option("--params", synth_opts.params,
                        "JSON overrides: density_scale, mode, noise_std, dynamic_ratio");
  cmd_synth->add_option("--seed", synth_opts.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (cmd_run->parsed()) return run_batch(run_opts, sf_pipeline_run);
  if (cmd_eval->parsed()) return run_batch(eval_opts, sf_flows_evaluate);
  if (cmd_diag->parsed()) return run_batch(diag_opts, sf_diagnostics_run);
  if (cmd_ablate->parsed()) return run_batch(ablate_opts, sf_pipeline_ablate);
  if (cmd_synth->parsed()) return run_synth(synth_opts);
  return 2;  // unreachable: require_subcommand enforces one
}
