// Command-line front end for the training and verification pipeline.
//
//   agentrank gen-data   --config run.json
//   agentrank fit-collab --config run.json
//   agentrank train      --config run.json --stage both
//   agentrank eval       --config run.json --checkpoint <file> --split val
//   agentrank verify     --config run.json
//
// Every subcommand is deterministic given (config, seed): rerunning with the
// same inputs rewrites byte-identical artifacts.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "agentrank/errors.hpp"
#include "agentrank/pipeline.hpp"

namespace {

agentrank::RunConfig load_config(const std::string& config_path,
                                 std::int64_t seed_override, int threads) {
  agentrank::RunConfig config = agentrank::load_run_config(config_path);
  if (seed_override >= 0) {
    config.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (threads > 0) {
    config.threads = threads;
    config.stage1.threads = threads;
    config.stage2.threads = threads;
  }
  return config;
}

void print_json(const agentrank::json& j) {
  std::printf("%s\n", j.dump(2).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agentrank: tool-using ranking agent trainer and verifier"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stage = "both";
  std::string checkpoint;
  std::string split = "val";
  std::int64_t seed_override = -1;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration JSON file")
        ->required();
    cmd->add_option("--seed-override", seed_override,
                    "Replace the config seed for this invocation");
    cmd->add_option("--threads", threads, "Cap worker threads");
  };

  CLI::App* gen = app.add_subcommand("gen-data",
                                     "Generate or ingest the corpus and "
                                     "write the split request files");
  add_common(gen);

  CLI::App* fit = app.add_subcommand(
      "fit-collab", "Fit the collaborative model on the train-visible stream");
  add_common(fit);

  CLI::App* train = app.add_subcommand("train", "Train the policy");
  add_common(train);
  train->add_option("--stage", stage, "1, 2, or both")->default_val("both");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint file")
      ->required();
  eval_cmd->add_option("--split", split, "train, val, or test")
      ->default_val("val");

  CLI::App* verify =
      app.add_subcommand("verify", "Run the proposition verification suites");
  add_common(verify);

  CLI11_PARSE(app, argc, argv);

  try {
    const agentrank::RunConfig config =
        load_config(config_path, seed_override, threads);
    if (gen->parsed()) {
      print_json(agentrank::run_gen_data(config));
    } else if (fit->parsed()) {
      print_json(agentrank::run_fit_collab(config));
    } else if (train->parsed()) {
      print_json(agentrank::run_train(config, stage));
    } else if (eval_cmd->parsed()) {
      print_json(agentrank::run_eval(config, checkpoint, split));
    } else if (verify->parsed()) {
      const agentrank::VerificationSummary summary =
          agentrank::run_verify(config);
      std::fputs(summary.pretty().c_str(), stdout);
      return summary.pass ? 0 : 1;
    }
    return 0;
  } catch (const agentrank::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
