#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scd/cli.hpp"

namespace {

void add_common_flags(CLI::App* cmd, scd::cli::Options& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config JSON");
  cmd->add_option("--seed", opts.seed, "override train.seed");
  cmd->add_option("--out", opts.out_dir, "override output.dir");
  cmd->add_option("--preset", opts.preset, "embedding preset (table1|desk)")
      ->check(CLI::IsMember({"table1", "desk"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel-decorrelated Siamese matching experiments"};
  app.require_subcommand(1);

  scd::cli::Options opts;

  auto* train = app.add_subcommand("train", "train a model and export metrics");
  add_common_flags(train, opts);

  auto* ab = app.add_subcommand(
      "ab-compare", "train with and without decorrelation, compare stats");
  add_common_flags(ab, opts);

  auto* shapes =
      app.add_subcommand("shapes", "print per-layer activation sizes");
  add_common_flags(shapes, opts);

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of every differentiable op");

  auto* report = app.add_subcommand(
      "report", "correlation report for a saved checkpoint");
  add_common_flags(report, opts);
  report->add_option("--checkpoint", opts.checkpoint, "checkpoint file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  for (const auto* cmd :
       {train, ab, shapes, gradcheck, report}) {
    if (cmd->parsed()) {
      opts.command = cmd->get_name();
      break;
    }
  }
  return scd::cli::run(opts, std::cout, std::cerr);
}
