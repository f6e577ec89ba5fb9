// bnc: synthetic-task harness for HMM compensation techniques.
//
// Subcommands: generate, adapt, decode, evaluate, oracle-check.
// Exit status: 0 success, 1 validation error, 2 numeric failure.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "bnc/errors.hpp"
#include "bnc/harness.hpp"
#include "bnc/suites.hpp"

namespace {

using bnc::harness::ExperimentConfig;

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string technique;
  std::string output = ".";
  std::string format;
  int jobs = 1;
};

void apply_overrides(ExperimentConfig& config, const CommonArgs& args) {
  if (args.seed) config.seed = *args.seed;
  if (!args.technique.empty()) {
    config.technique = args.technique;
    bnc::harness::technique_kind(config.technique);  // validate
  }
  if (!args.format.empty()) {
    if (args.format == "csv") config.format = bnc::io::FeatureFormat::kCsv;
    else if (args.format == "bin") config.format = bnc::io::FeatureFormat::kBin;
    else throw bnc::ValidationError("--format must be csv or bin");
  }
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* config = cmd->add_option("--config", args.config_path, "experiment config JSON");
  if (needs_config) config->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--technique", args.technique, "override the config technique id");
  cmd->add_option("--output", args.output, "output directory");
  cmd->add_option("--format", args.format, "feature file format: csv or bin");
  cmd->add_option("--jobs", args.jobs, "parallel trials")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-task harness for acoustic-model compensation techniques"};
  app.require_subcommand(1);

  CommonArgs gen_args, dec_args, eval_args;
  auto* gen = app.add_subcommand("generate", "sample a synthetic dataset");
  add_common(gen, gen_args, true);

  auto* dec = app.add_subcommand("decode", "score a dataset against the class models");
  add_common(dec, dec_args, true);
  std::string dec_input;
  dec->add_option("--input", dec_input,
                  "dataset directory (defaults to config dataset_dir)");

  auto* eval = app.add_subcommand("evaluate", "recompute metrics from decode outputs");
  add_common(eval, eval_args, true);
  std::string eval_decode_dir;
  eval->add_option("--decode-dir", eval_decode_dir, "decode output directory")
      ->required();

  auto* adapt = app.add_subcommand("adapt", "apply a model-adaptation technique");
  std::string adapt_model, adapt_technique, adapt_output = "adapted.json";
  std::string adapt_params_path, adapt_config_path;
  adapt->add_option("--model", adapt_model, "input model file")->required();
  adapt->add_option("--technique", adapt_technique, "adaptation technique id")
      ->required();
  adapt->add_option("--params", adapt_params_path, "technique parameter JSON file");
  adapt->add_option("--config", adapt_config_path,
                    "experiment config providing the observation model");
  adapt->add_option("--output", adapt_output, "output model file");

  auto* oracle = app.add_subcommand("oracle-check", "run a named oracle suite");
  std::string suite;
  oracle->add_option("suite", suite, "suite name (or 'all')")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig config = bnc::harness::load_config(gen_args.config_path);
      apply_overrides(config, gen_args);
      bnc::harness::run_generate(config, gen_args.output);
      std::cout << "generated " << config.trials << " trials under "
                << gen_args.output << "\n";
    } else if (dec->parsed()) {
      ExperimentConfig config = bnc::harness::load_config(dec_args.config_path);
      apply_overrides(config, dec_args);
      const std::string dataset =
          !dec_input.empty() ? dec_input : config.dataset_dir;
      if (dataset.empty())
        throw bnc::ValidationError("decode: no dataset (config dataset_dir or --input)");
      const auto report = bnc::harness::run_decode(config, dataset, dec_args.output,
                                                   dec_args.jobs);
      std::printf("technique %s: accuracy %.4f, mean margin %.4f (%zu trials, %.2fs)\n",
                  config.technique.c_str(), report.accuracy, report.mean_margin,
                  report.trials.size(), report.wall_clock_seconds);
    } else if (eval->parsed()) {
      ExperimentConfig config = bnc::harness::load_config(eval_args.config_path);
      apply_overrides(config, eval_args);
      const std::string dataset = config.dataset_dir;
      if (dataset.empty())
        throw bnc::ValidationError("evaluate: config dataset_dir is required");
      const auto report =
          bnc::harness::run_evaluate(dataset, eval_decode_dir, eval_args.output);
      std::printf("evaluated %zu trials: accuracy %.4f, mean margin %.4f\n",
                  report.trials.size(), report.accuracy, report.mean_margin);
    } else if (adapt->parsed()) {
      nlohmann::json params;
      if (!adapt_params_path.empty())
        params = bnc::io::read_json_file(adapt_params_path);
      std::optional<bnc::ObservationModelSpec> obs;
      if (!adapt_config_path.empty())
        obs = bnc::harness::load_config(adapt_config_path).observation_model;
      bnc::harness::run_adapt(adapt_model, adapt_technique, params, obs, adapt_output);
      std::cout << "wrote " << adapt_output << "\n";
    } else if (oracle->parsed()) {
      std::vector<std::string> names =
          suite == "all" ? bnc::harness::oracle_suite_names()
                         : std::vector<std::string>{suite};
      bool all_pass = true;
      for (const auto& name : names) {
        const auto result = bnc::harness::run_oracle_suite(name);
        std::printf("suite %s:\n", result.suite.c_str());
        for (const auto& row : result.rows)
          std::printf("  [%s] %-55s %s\n", row.pass ? "PASS" : "FAIL",
                      row.name.c_str(), row.detail.c_str());
        std::printf("  => %s (max error %.3e)\n",
                    result.all_pass ? "all pass" : "FAILURES", result.max_error);
        all_pass = all_pass && result.all_pass;
      }
      if (!all_pass) return 2;
    }
  } catch (const bnc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const bnc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
