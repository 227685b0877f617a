#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scd/scd.hpp"
#include "scd/siamese.hpp"
#include "scd/synth.hpp"

namespace scd {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 50;
  int samples_per_epoch = 3200;
  double lr_initial = 1e-3;
  double lr_final = 1e-5;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  double label_radius = 1.0;  // score-map pixels
  ScdConfig scd;              // scd.enabled gates the regularizer

  void validate() const;
  int steps_per_epoch() const { return samples_per_epoch / batch_size; }
};

// Geometric decay from lr_initial to lr_final over cfg.epochs, one
// multiplication per epoch boundary.
double lr_schedule(int epoch, const TrainConfig& cfg);

// w <- w - lr * (g + weight_decay * w), then zero the gradients.
void sgd_step(const std::vector<NamedParam>& params, double lr,
              double weight_decay);

struct TrainBatch {
  TensorPtr exemplar;  // (B, C, E, E)
  TensorPtr search;    // (B, C, S, S)
  // per-sample target cell in score-map coordinates
  std::vector<std::pair<int, int>> centers;
};

// Derives the pair-generation spec (placement grid, score alignment) from
// the model geometry.
PairGenSpec pair_spec_for(const SiameseModel& model);

TrainBatch make_batch(Rng& rng, const PairGenSpec& spec,
                      const SiameseModel& model, int batch_size);

// One SGD iteration: forward both branches, task loss, per-layer SCD
// losses at the tapped conv outputs, combined objective, backward, update.
// `iteration` seeds the per-iteration pair draw.
LossBreakdown train_step(SiameseModel& model, const TrainBatch& batch,
                         const TrainConfig& cfg, double lr,
                         std::int64_t iteration);

}  // namespace scd
