#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "scd/config.hpp"
#include "scd/diagnostics.hpp"

namespace scd {

struct MetricRow {
  int epoch = 0;
  double lr = 0.0;
  double task_loss = 0.0;
  double scd_loss_mean = 0.0;
  double combined_loss = 0.0;
  CorrelationReport report;  // at the row boundary, on the eval batch
};

struct TrainResult {
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
  std::vector<MetricRow> rows;
  CorrelationReport final_report;
  double final_task_loss = 0.0;  // mean over the last epoch
};

// Full training run: writes metrics.csv, per-epoch correlation JSON and
// the final checkpoint under out_dir. Deterministic for a fixed config,
// including byte-identical metric files.
TrainResult run_training(const ExperimentConfig& cfg,
                         const std::filesystem::path& out_dir,
                         std::ostream* progress = nullptr);

}  // namespace scd
