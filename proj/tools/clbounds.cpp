#include <iostream>

#include <CLI11.hpp>

#include "clb/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"clbounds: replay continual-learning generalization bound laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one Monte-Carlo experiment and write its bound report");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string sweep_path;
  auto* sweep = app.add_subcommand("sweep", "Run a sweep grid and write long-form CSV");
  sweep->add_option("sweep", sweep_path, "Sweep spec (JSON)")->required();

  clb::ValidateOptions vopts;
  std::string report_path = vopts.report.string();
  auto* validate = app.add_subcommand("validate", "Run identity, gradient, oracle and estimator checks");
  validate->add_option("--section", vopts.section, "Run one section: numerics, gradients, oracle, estimators, identity");
  validate->add_option("--inject-fault", vopts.inject_fault, "Mutation fixture, e.g. binary_kl_sign");
  validate->add_option("--report", report_path, "Validation report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : clb::kExitConfigError;
  }

  try {
    if (*run) return clb::cmd_run(config_path);
    if (*sweep) return clb::cmd_sweep(sweep_path);
    vopts.report = report_path;
    return clb::cmd_validate(vopts);
  } catch (const clb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return clb::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return clb::kExitCheckFailed;
  }
}
