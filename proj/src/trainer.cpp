#include "scd/trainer.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace scd {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (samples_per_epoch < batch_size) {
    throw std::invalid_argument("train.samples_per_epoch must be >= batch_size");
  }
  if (lr_initial <= 0.0 || lr_final <= 0.0) {
    throw std::invalid_argument("train.lr_initial and lr_final must be > 0");
  }
  if (lr_final > lr_initial) {
    throw std::invalid_argument("train.lr_final must be <= lr_initial");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("train.weight_decay must be >= 0");
  }
  if (label_radius < 0.0) {
    throw std::invalid_argument("train.label_radius must be >= 0");
  }
  if (scd.enabled) scd.validate();
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (cfg.epochs == 1) return cfg.lr_initial;
  const double factor =
      std::pow(cfg.lr_final / cfg.lr_initial, 1.0 / double(cfg.epochs - 1));
  return cfg.lr_initial * std::pow(factor, double(epoch));
}

void sgd_step(const std::vector<NamedParam>& params, double lr,
              double weight_decay) {
  for (const auto& p : params) {
    auto data = p.tensor->data();
    auto grad = p.tensor->grad();  // throws if the gradient buffer is missing
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] -= lr * (grad[i] + weight_decay * data[i]);
    }
    p.tensor->zero_grad();
  }
}

PairGenSpec pair_spec_for(const SiameseModel& model) {
  const auto& ecfg = model.config();
  PairGenSpec spec;
  spec.channels = ecfg.input_channels;
  spec.exemplar_size = ecfg.exemplar_size;
  spec.search_size = ecfg.search_size;
  spec.target_size = std::max(4, (ecfg.exemplar_size * 5) / 8);
  spec.placement_step = model.total_stride();

  const auto shapes = infer_shapes(ecfg, ecfg.search_size, ecfg.search_size);
  const auto ex_shapes = infer_shapes(ecfg, ecfg.exemplar_size, ecfg.exemplar_size);
  const int score_h = shapes.back().h - ex_shapes.back().h + 1;
  // keep the target cell inside the score map...
  int max_steps = (score_h - 1) / 2;
  // ...and the jittered box inside the search image
  const double half = spec.target_size / 2.0;
  const double extent = half * spec.scale_max * (1.0 + std::sin(spec.rot_max)) + 1.0;
  const double margin = (ecfg.search_size - 1) / 2.0 - extent;
  max_steps = std::min(max_steps, int(margin / spec.placement_step));
  spec.max_shift_steps = std::max(0, max_steps);
  return spec;
}

TrainBatch make_batch(Rng& rng, const PairGenSpec& spec,
                      const SiameseModel& model, int batch_size) {
  const auto& ecfg = model.config();
  const auto se_shapes = infer_shapes(ecfg, ecfg.search_size, ecfg.search_size);
  const auto ex_shapes = infer_shapes(ecfg, ecfg.exemplar_size, ecfg.exemplar_size);
  const int score_h = se_shapes.back().h - ex_shapes.back().h + 1;
  const int score_w = score_h;

  TrainBatch batch;
  batch.exemplar = Tensor::zeros(
      Shape{batch_size, spec.channels, spec.exemplar_size, spec.exemplar_size});
  batch.search = Tensor::zeros(
      Shape{batch_size, spec.channels, spec.search_size, spec.search_size});
  for (int b = 0; b < batch_size; ++b) {
    SyntheticPair pair = generate_pair(rng, spec);
    std::copy(pair.exemplar.begin(), pair.exemplar.end(),
              batch.exemplar->data().begin() +
                  std::size_t(b) * pair.exemplar.size());
    std::copy(pair.search.begin(), pair.search.end(),
              batch.search->data().begin() + std::size_t(b) * pair.search.size());
    batch.centers.emplace_back((score_h - 1) / 2 + pair.shift_steps_y,
                               (score_w - 1) / 2 + pair.shift_steps_x);
  }
  return batch;
}

LossBreakdown train_step(SiameseModel& model, const TrainBatch& batch,
                         const TrainConfig& cfg, double lr,
                         std::int64_t iteration) {
  Graph g;
  std::set<int> taps;
  if (cfg.scd.enabled) taps.insert(cfg.scd.layers.begin(), cfg.scd.layers.end());

  auto exemplar = model.embed(g, batch.exemplar, true,
                              cfg.scd.include_exemplar_branch ? taps
                                                              : std::set<int>{});
  auto search = model.embed(g, batch.search, true, taps);
  auto score = model.score_map(g, exemplar.features, search.features);

  ScoreMap sm;
  sm.score = score;
  const int sh = score->shape().h;
  const int sw = score->shape().w;
  sm.labels.reserve(std::size_t(score->size()));
  sm.weights.reserve(std::size_t(score->size()));
  for (const auto& [cy, cx] : batch.centers) {
    auto grid = make_labels(sh, sw, cy, cx, cfg.label_radius);
    sm.labels.insert(sm.labels.end(), grid.labels.begin(), grid.labels.end());
    sm.weights.insert(sm.weights.end(), grid.weights.begin(), grid.weights.end());
  }
  auto task = task_loss(g, sm);

  TensorPtr objective;
  LossBreakdown breakdown;
  if (cfg.scd.enabled) {
    const std::uint64_t iter_seed =
        derive_seed(cfg.seed, kStreamPairs, std::uint64_t(iteration));
    std::map<int, TensorPtr> per_layer;
    for (int layer : cfg.scd.layers) {
      Rng pair_rng(derive_seed(iter_seed, std::uint64_t(layer)));
      auto loss = layer_scd_loss(g, search.taps.at(layer), cfg.scd, pair_rng);
      if (cfg.scd.include_exemplar_branch) {
        Rng ex_rng(derive_seed(iter_seed, std::uint64_t(layer), 1));
        auto ex_loss = layer_scd_loss(g, exemplar.taps.at(layer), cfg.scd, ex_rng);
        loss = scale(g, add(g, loss, ex_loss), 0.5);
      }
      per_layer[layer] = loss;
    }
    auto combined = combined_loss(g, task, per_layer, cfg.scd);
    breakdown = combined.values;
    objective = combined.node;
  } else {
    objective = scale(g, task, cfg.scd.alpha);
    breakdown.task_loss = task->item();
    breakdown.combined = objective->item();
  }

  g.backward(objective);
  sgd_step(model.parameters(), lr, cfg.weight_decay);
  return breakdown;
}

}  // namespace scd
