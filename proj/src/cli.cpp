#include "scd/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "scd/checkpoint.hpp"
#include "scd/experiment.hpp"
#include "scd/gradcheck.hpp"

namespace scd::cli {

namespace {

ExperimentConfig resolve_config(const Options& opts) {
  ExperimentConfig cfg;
  if (opts.config_path) {
    cfg = load_experiment_config(*opts.config_path);
  } else if (opts.preset) {
    if (*opts.preset == "desk") {
      cfg = ExperimentConfig::desk_default(opts.seed.value_or(0));
    } else if (*opts.preset == "table1") {
      cfg = ExperimentConfig::desk_default(opts.seed.value_or(0));
      cfg.embedding_preset = "table1";
      cfg.embedding = EmbeddingConfig::table1();
      cfg.train.scd.layers = {3, 5};
    } else {
      throw ConfigError("unknown preset '" + *opts.preset + "'");
    }
  } else {
    throw ConfigError("either --config or --preset is required");
  }
  if (opts.seed) cfg.train.seed = *opts.seed;
  if (opts.out_dir) cfg.output.dir = *opts.out_dir;
  cfg.validate();
  return cfg;
}

EmbeddingConfig resolve_embedding(const Options& opts) {
  if (opts.config_path) {
    return load_experiment_config(*opts.config_path).embedding;
  }
  if (opts.preset) {
    if (*opts.preset == "table1") return EmbeddingConfig::table1();
    if (*opts.preset == "desk") return EmbeddingConfig::desk();
    throw ConfigError("unknown preset '" + *opts.preset + "'");
  }
  throw ConfigError("either --config or --preset is required");
}

int cmd_train(const Options& opts, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(opts);
  const auto result = run_training(cfg, cfg.output.dir, &out);
  out << "metrics: " << result.metrics_csv.string() << "\n"
      << "checkpoint: " << result.checkpoint.string() << "\n"
      << "final task loss: " << format_double(result.final_task_loss) << "\n";
  return kExitOk;
}

int cmd_shapes(const Options& opts, std::ostream& out) {
  const EmbeddingConfig cfg = resolve_embedding(opts);
  const auto exemplar = infer_shapes(cfg, cfg.exemplar_size, cfg.exemplar_size);
  const auto search = infer_shapes(cfg, cfg.search_size, cfg.search_size);

  out << std::left << std::setw(8) << "layer" << std::setw(8) << "kernel"
      << std::setw(8) << "stride" << std::setw(12) << "exemplar"
      << std::setw(12) << "search" << "channels\n";
  out << std::left << std::setw(8) << "input" << std::setw(8) << "-"
      << std::setw(8) << "-" << std::setw(12)
      << (std::to_string(cfg.exemplar_size) + "x" + std::to_string(cfg.exemplar_size))
      << std::setw(12)
      << (std::to_string(cfg.search_size) + "x" + std::to_string(cfg.search_size))
      << cfg.input_channels << "\n";
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    if (l.kind != LayerKind::conv && l.kind != LayerKind::pool) continue;
    out << std::left << std::setw(8) << l.name << std::setw(8)
        << (std::to_string(l.kernel) + "x" + std::to_string(l.kernel))
        << std::setw(8) << l.stride << std::setw(12)
        << (std::to_string(exemplar[i].h) + "x" + std::to_string(exemplar[i].w))
        << std::setw(12)
        << (std::to_string(search[i].h) + "x" + std::to_string(search[i].w))
        << exemplar[i].c << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(std::ostream& out) {
  const auto results = run_gradient_checks();
  for (const auto& r : results) {
    out << std::left << std::setw(18) << r.op << " worst rel err "
        << format_double(r.worst_rel_err) << "  "
        << (r.passed ? "ok" : "FAIL") << "\n";
  }
  if (!all_passed(results)) {
    out << "gradient check FAILED\n";
    return kExitNumerical;
  }
  out << "all gradient checks passed\n";
  return kExitOk;
}

struct ArmSummary {
  double frac_over = 0.0;
  double mean_excess = 0.0;
  double mean_abs = 0.0;
  double task_loss = 0.0;
};

ArmSummary summarize(const TrainResult& result) {
  ArmSummary s;
  s.task_loss = result.final_task_loss;
  const auto& layers = result.final_report.layers;
  for (const auto& lc : layers) {
    s.frac_over += lc.frac_over;
    s.mean_excess += lc.mean_excess;
    s.mean_abs += lc.mean_abs_offdiag;
  }
  if (!layers.empty()) {
    s.frac_over /= double(layers.size());
    s.mean_excess /= double(layers.size());
    s.mean_abs /= double(layers.size());
  }
  return s;
}

int cmd_ab_compare(const Options& opts, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(opts);
  if (!cfg.train.scd.enabled || cfg.train.scd.layers.empty()) {
    throw ConfigError("ab-compare needs a config with SCD enabled");
  }
  const std::filesystem::path base = cfg.output.dir;

  ExperimentConfig scd_cfg = cfg;
  ExperimentConfig none_cfg = cfg;
  none_cfg.train.scd.enabled = false;

  out << "running SCD arm...\n";
  const auto scd_run = run_training(scd_cfg, base / "scd", &out);
  out << "running control arm...\n";
  const auto none_run = run_training(none_cfg, base / "none", &out);

  const ArmSummary a = summarize(scd_run);
  const ArmSummary b = summarize(none_run);

  out << "\n            " << std::left << std::setw(14) << "scd"
      << std::setw(14) << "control" << "\n";
  auto row = [&](const char* name, double va, double vb) {
    out << std::left << std::setw(12) << name << std::setw(14)
        << format_double(va) << std::setw(14) << format_double(vb) << "\n";
  };
  row("meanAbsP", a.mean_abs, b.mean_abs);
  row("fracOver", a.frac_over, b.frac_over);
  row("meanExcess", a.mean_excess, b.mean_excess);
  row("taskLoss", a.task_loss, b.task_loss);
  for (std::size_t i = 0; i < scd_run.final_report.layers.size(); ++i) {
    const auto& la = scd_run.final_report.layers[i];
    const auto& lb = none_run.final_report.layers[i];
    out << "layer " << la.layer << ": meanAbsP " << format_double(la.mean_abs_offdiag)
        << " vs " << format_double(lb.mean_abs_offdiag) << ", fracOver "
        << format_double(la.frac_over) << " vs " << format_double(lb.frac_over)
        << ", meanExcess " << format_double(la.mean_excess) << " vs "
        << format_double(lb.mean_excess) << "\n";
  }

  const bool frac_lower = a.frac_over < b.frac_over;
  const bool excess_halved = a.mean_excess <= 0.5 * b.mean_excess;
  const bool task_close = std::fabs(a.task_loss - b.task_loss) <= 0.2 * b.task_loss;
  out << "check fracOver strictly lower: " << (frac_lower ? "PASS" : "FAIL") << "\n";
  out << "check meanExcess reduced >= 50%: " << (excess_halved ? "PASS" : "FAIL") << "\n";
  out << "check task loss within 20%: " << (task_close ? "PASS" : "FAIL") << "\n";

  std::ofstream json(base / "comparison.json", std::ios::trunc);
  json << "{\n  \"scd\": {\"meanAbsP\": " << format_double(a.mean_abs)
       << ", \"fracOver\": " << format_double(a.frac_over)
       << ", \"meanExcess\": " << format_double(a.mean_excess)
       << ", \"taskLoss\": " << format_double(a.task_loss) << "},\n"
       << "  \"control\": {\"meanAbsP\": " << format_double(b.mean_abs)
       << ", \"fracOver\": " << format_double(b.frac_over)
       << ", \"meanExcess\": " << format_double(b.mean_excess)
       << ", \"taskLoss\": " << format_double(b.task_loss) << "},\n"
       << "  \"checks\": {\"fracOverLower\": " << (frac_lower ? "true" : "false")
       << ", \"excessHalved\": " << (excess_halved ? "true" : "false")
       << ", \"taskWithin20pct\": " << (task_close ? "true" : "false") << "}\n}\n";

  return (frac_lower && excess_halved && task_close) ? kExitOk : kExitNumerical;
}

int cmd_report(const Options& opts, std::ostream& out) {
  if (!opts.checkpoint) {
    throw ConfigError("report requires --checkpoint");
  }
  ExperimentConfig cfg = resolve_config(opts);
  SiameseModel model(cfg.embedding);
  Rng init_rng(derive_seed(cfg.train.seed, kStreamInit));
  model.init_params(init_rng);
  load_checkpoint(*opts.checkpoint, model);

  std::vector<int> layers = cfg.train.scd.layers;
  if (layers.empty()) {
    for (int l = 1; l <= cfg.embedding.conv_count(); ++l) layers.push_back(l);
  }
  const PairGenSpec spec = pair_spec_for(model);
  Rng eval_rng(derive_seed(cfg.train.seed, kStreamEval));
  const TrainBatch eval_batch =
      make_batch(eval_rng, spec, model, cfg.train.batch_size);
  auto report = full_correlation_report(model, eval_batch.search, layers,
                                        cfg.train.scd.epsilon,
                                        cfg.train.scd.denom_stabilizer);
  out << correlation_report_to_json(report);
  return kExitOk;
}

}  // namespace

int run(const Options& opts, std::ostream& out, std::ostream& err) {
  try {
    if (opts.command == "train") return cmd_train(opts, out);
    if (opts.command == "ab-compare") return cmd_ab_compare(opts, out);
    if (opts.command == "shapes") return cmd_shapes(opts, out);
    if (opts.command == "gradcheck") return cmd_gradcheck(out);
    if (opts.command == "report") return cmd_report(opts, out);
    err << "unknown command '" << opts.command << "'\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace scd::cli
