#pragma once

#include <map>
#include <utility>
#include <vector>

#include "scd/graph.hpp"
#include "scd/rng.hpp"
#include "scd/tensor.hpp"

namespace scd {

// Stochastic channel decorrelation settings. `layers` lists the conv
// ordinals (1-based, conv1..convN) whose pre-batchnorm outputs are
// decorrelated.
struct ScdConfig {
  bool enabled = true;
  double epsilon = 0.3;
  int pair_budget = 1000;
  std::vector<int> layers = {3, 5};
  double alpha = 1.0;
  double beta = 2.0;
  double denom_stabilizer = 1e-8;
  // Regularize the exemplar branch as well; off by default since the
  // larger search-branch maps are the easier ones to decorrelate.
  bool include_exemplar_branch = false;

  void validate() const;
};

// Distinct unordered channel pairs (m < n) drawn for one iteration.
struct PairSample {
  std::vector<std::pair<int, int>> pairs;
};

// min(budget, C*(C-1)/2) distinct unordered pairs, uniform without
// replacement; the full universe is returned whenever it fits the budget.
PairSample sample_pairs(int channels, int budget, Rng& rng);

// Normalized cross correlation of two same-shaped maps:
//   sum(a*b) / (sqrt(sum(a*a) * sum(b*b)) + delta)
// Differentiable in both inputs. |result| <= 1 when delta = 0 and both
// norms are nonzero; an all-zero map with delta > 0 gives 0 and no
// gradient.
TensorPtr ncc(Graph& g, const TensorPtr& a, const TensorPtr& b, double delta);

// max(0, |p| - epsilon)^2. Zero value and gradient inside the margin.
TensorPtr pair_margin_loss(Graph& g, const TensorPtr& p, double epsilon);

// Per-layer decorrelation loss: one pair sample shared across the batch,
// NCC per batch sample, margin loss, mean over batch then over pairs.
TensorPtr layer_scd_loss(Graph& g, const TensorPtr& features,
                         const ScdConfig& cfg, Rng& rng);

struct LossBreakdown {
  double task_loss = 0.0;
  std::map<int, double> scd_per_layer;
  double combined = 0.0;
};

struct CombinedLoss {
  LossBreakdown values;
  TensorPtr node;
};

// alpha * task + beta * mean(per-layer losses). `per_layer` keys must
// equal cfg.layers exactly.
CombinedLoss combined_loss(Graph& g, const TensorPtr& task,
                           const std::map<int, TensorPtr>& per_layer,
                           const ScdConfig& cfg);

}  // namespace scd
