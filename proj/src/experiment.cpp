#include "scd/experiment.hpp"

#include <fstream>
#include <ostream>

#include "scd/checkpoint.hpp"

namespace scd {

namespace {

void write_csv(const std::filesystem::path& path,
               const std::vector<MetricRow>& rows,
               const std::vector<int>& layers) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open metrics file: " + path.string());
  }
  os << "epoch,lr,task_loss,scd_loss_mean,combined_loss";
  for (int l : layers) {
    os << ",meanAbsP_l" << l << ",maxAbsP_l" << l << ",fracOver_l" << l;
  }
  os << "\n";
  for (const auto& row : rows) {
    os << row.epoch << "," << format_double(row.lr) << ","
       << format_double(row.task_loss) << "," << format_double(row.scd_loss_mean)
       << "," << format_double(row.combined_loss);
    for (const auto& lc : row.report.layers) {
      os << "," << format_double(lc.mean_abs_offdiag) << ","
         << format_double(lc.max_abs_offdiag) << ","
         << format_double(lc.frac_over);
    }
    os << "\n";
  }
}

}  // namespace

TrainResult run_training(const ExperimentConfig& cfg,
                         const std::filesystem::path& out_dir,
                         std::ostream* progress) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  SiameseModel model(cfg.embedding);
  Rng init_rng(derive_seed(cfg.train.seed, kStreamInit));
  model.init_params(init_rng);

  const PairGenSpec spec = pair_spec_for(model);
  Rng data_rng(derive_seed(cfg.train.seed, kStreamData));
  Rng eval_rng(derive_seed(cfg.train.seed, kStreamEval));
  const TrainBatch eval_batch =
      make_batch(eval_rng, spec, model, cfg.train.batch_size);

  // Correlations are tracked at the configured SCD layers even when the
  // regularizer itself is off; that is what the A/B comparison reads.
  const std::vector<int> report_layers = cfg.train.scd.layers;

  TrainResult result;
  const int steps = cfg.train.steps_per_epoch();
  const int cadence = cfg.output.metric_cadence;
  std::int64_t iteration = 0;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.train);
    double window_task = 0.0, window_scd = 0.0, window_combined = 0.0;
    int window_count = 0;
    double epoch_task = 0.0;
    int next_row = 1;

    for (int step = 0; step < steps; ++step, ++iteration) {
      TrainBatch batch = make_batch(data_rng, spec, model, cfg.train.batch_size);
      LossBreakdown breakdown = train_step(model, batch, cfg.train, lr, iteration);

      double scd_mean = 0.0;
      for (const auto& [l, v] : breakdown.scd_per_layer) scd_mean += v;
      if (!breakdown.scd_per_layer.empty()) {
        scd_mean /= double(breakdown.scd_per_layer.size());
      }
      window_task += breakdown.task_loss;
      window_scd += scd_mean;
      window_combined += breakdown.combined;
      ++window_count;
      epoch_task += breakdown.task_loss;

      if (next_row <= cadence && (step + 1) == (steps * next_row) / cadence) {
        MetricRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.task_loss = window_task / window_count;
        row.scd_loss_mean = window_scd / window_count;
        row.combined_loss = window_combined / window_count;
        row.report = full_correlation_report(model, eval_batch.search,
                                             report_layers, cfg.train.scd.epsilon,
                                             cfg.train.scd.denom_stabilizer);
        row.report.epoch = epoch;
        result.rows.push_back(std::move(row));
        window_task = window_scd = window_combined = 0.0;
        window_count = 0;
        ++next_row;
      }
    }

    result.final_task_loss = epoch_task / double(steps);
    const CorrelationReport& epoch_report = result.rows.back().report;
    std::ofstream json_out(out_dir / ("corr_epoch_" + std::to_string(epoch) + ".json"),
                           std::ios::trunc);
    json_out << correlation_report_to_json(epoch_report);

    if (progress) {
      *progress << "epoch " << epoch << " lr " << format_double(lr)
                << " task " << format_double(result.rows.back().task_loss);
      for (const auto& lc : epoch_report.layers) {
        *progress << " | l" << lc.layer
                  << " meanAbsP " << format_double(lc.mean_abs_offdiag)
                  << " fracOver " << format_double(lc.frac_over);
      }
      *progress << "\n";
    }
  }

  result.metrics_csv = out_dir / "metrics.csv";
  write_csv(result.metrics_csv, result.rows, report_layers);
  result.checkpoint = out_dir / "checkpoint.bin";
  save_checkpoint(result.checkpoint, model);
  result.final_report = result.rows.back().report;
  return result;
}

}  // namespace scd
