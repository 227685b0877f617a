#pragma once

#include <string>
#include <vector>

#include "scd/siamese.hpp"

namespace scd {

// Exhaustive pairwise channel correlation of one tapped layer: the full
// C x C matrix of per-sample NCC values averaged over a held-out batch,
// with the summary statistics the experiments track.
struct LayerCorrelation {
  int layer = 0;  // conv ordinal
  int channels = 0;
  std::vector<double> matrix;  // C*C, row-major, symmetric
  double mean_abs_offdiag = 0.0;
  double max_abs_offdiag = 0.0;
  double frac_over = 0.0;    // fraction of unordered pairs with |p| > epsilon
  double mean_excess = 0.0;  // mean over unordered pairs of max(0, |p| - epsilon)

  double at(int m, int n) const { return matrix[std::size_t(m) * channels + n]; }
};

struct CorrelationReport {
  int epoch = -1;
  double epsilon = 0.0;
  std::vector<LayerCorrelation> layers;
};

// Runs the model in eval mode on the batch and measures every channel
// pair of every listed conv ordinal; unlike training, the full universe
// is always evaluated here.
CorrelationReport full_correlation_report(SiameseModel& model,
                                          const TensorPtr& eval_batch,
                                          const std::vector<int>& layers,
                                          double epsilon, double delta);

std::string correlation_report_to_json(const CorrelationReport& report);

// Deterministic float formatting shared by the CSV and JSON emitters so
// identical runs produce byte-identical files.
std::string format_double(double v);

}  // namespace scd
