#include "scd/scd.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace scd {

void ScdConfig::validate() const {
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw std::invalid_argument("scd.epsilon must lie in [0, 1)");
  }
  if (pair_budget < 1) {
    throw std::invalid_argument("scd.pair_budget must be >= 1");
  }
  if (enabled && layers.empty()) {
    throw std::invalid_argument("scd.layers must be non-empty when SCD is enabled");
  }
  if (denom_stabilizer <= 0.0) {
    throw std::invalid_argument("scd.denom_stabilizer must be > 0");
  }
  for (int l : layers) {
    if (l < 1) throw std::invalid_argument("scd.layers entries are 1-based conv ordinals");
  }
}

PairSample sample_pairs(int channels, int budget, Rng& rng) {
  if (channels < 2) {
    throw std::invalid_argument("sample_pairs: need at least 2 channels, got " +
                                std::to_string(channels));
  }
  if (budget < 1) {
    throw std::invalid_argument("sample_pairs: budget must be >= 1");
  }
  std::vector<std::pair<int, int>> universe;
  universe.reserve(std::size_t(channels) * (channels - 1) / 2);
  for (int m = 0; m < channels; ++m) {
    for (int n = m + 1; n < channels; ++n) {
      universe.emplace_back(m, n);
    }
  }
  const std::size_t take = std::min<std::size_t>(std::size_t(budget), universe.size());
  if (take < universe.size()) {
    // Partial Fisher-Yates: the first `take` entries are a uniform draw
    // without replacement.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + std::size_t(rng.uniform_int(universe.size() - i));
      std::swap(universe[i], universe[j]);
    }
    universe.resize(take);
  }
  return PairSample{std::move(universe)};
}

TensorPtr ncc(Graph& g, const TensorPtr& a, const TensorPtr& b, double delta) {
  if (!(a->shape() == b->shape())) {
    throw ShapeError("ncc: shape mismatch " + a->shape().str() + " vs " +
                     b->shape().str());
  }
  auto num = sum_all(g, mul(g, a, b));
  auto na = sum_all(g, mul(g, a, a));
  auto nb = sum_all(g, mul(g, b, b));
  auto den = add_const(g, scd::sqrt(g, mul(g, na, nb)), delta);
  return scd::div(g, num, den);
}

TensorPtr pair_margin_loss(Graph& g, const TensorPtr& p, double epsilon) {
  if (epsilon < 0.0) {
    throw std::invalid_argument("pair_margin_loss: epsilon must be >= 0");
  }
  auto excess = relu(g, add_const(g, scd::abs(g, p), -epsilon));
  return mul(g, excess, excess);
}

namespace {

// Scalar NCC assembled from cached per-channel slices and squared norms so
// channels shared between sampled pairs are reduced once.
struct ChannelCache {
  Graph& g;
  const TensorPtr& features;
  std::vector<TensorPtr> slice;    // (b * C + c)
  std::vector<TensorPtr> norm_sq;  // sum(slice^2)

  ChannelCache(Graph& graph, const TensorPtr& f)
      : g(graph),
        features(f),
        slice(std::size_t(f->shape().n) * f->shape().c),
        norm_sq(slice.size()) {}

  const TensorPtr& channel(int b, int c) {
    auto& s = slice[std::size_t(b) * features->shape().c + c];
    if (!s) s = slice_channel(g, features, b, c);
    return s;
  }
  const TensorPtr& norm(int b, int c) {
    auto& n = norm_sq[std::size_t(b) * features->shape().c + c];
    if (!n) {
      const auto& s = channel(b, c);
      n = sum_all(g, mul(g, s, s));
    }
    return n;
  }
};

}  // namespace

TensorPtr layer_scd_loss(Graph& g, const TensorPtr& features,
                         const ScdConfig& cfg, Rng& rng) {
  const Shape& fs = features->shape();
  if (fs.c < 2) {
    throw std::invalid_argument(
        "layer_scd_loss: need at least 2 channels, got " + std::to_string(fs.c));
  }
  const PairSample sample = sample_pairs(fs.c, cfg.pair_budget, rng);

  ChannelCache cache(g, features);
  std::vector<TensorPtr> terms;
  terms.reserve(sample.pairs.size() * std::size_t(fs.n));
  for (const auto& [m, n] : sample.pairs) {
    for (int b = 0; b < fs.n; ++b) {
      auto num = sum_all(g, mul(g, cache.channel(b, m), cache.channel(b, n)));
      auto den = add_const(g, scd::sqrt(g, mul(g, cache.norm(b, m), cache.norm(b, n))),
                           cfg.denom_stabilizer);
      auto p = scd::div(g, num, den);
      terms.push_back(pair_margin_loss(g, p, cfg.epsilon));
    }
  }
  return scale(g, add_n(g, terms),
               1.0 / (double(sample.pairs.size()) * double(fs.n)));
}

CombinedLoss combined_loss(Graph& g, const TensorPtr& task,
                           const std::map<int, TensorPtr>& per_layer,
                           const ScdConfig& cfg) {
  std::vector<int> expected = cfg.layers;
  std::sort(expected.begin(), expected.end());
  std::vector<int> got;
  got.reserve(per_layer.size());
  for (const auto& [l, t] : per_layer) got.push_back(l);
  if (expected != got) {
    throw std::invalid_argument(
        "combined_loss: per-layer keys do not match configured layer set");
  }

  CombinedLoss result;
  result.values.task_loss = task->item();
  TensorPtr node = scale(g, task, cfg.alpha);
  if (!per_layer.empty()) {
    std::vector<TensorPtr> layer_terms;
    layer_terms.reserve(per_layer.size());
    for (const auto& [l, t] : per_layer) {
      result.values.scd_per_layer[l] = t->item();
      layer_terms.push_back(t);
    }
    auto mean_scd = scale(g, add_n(g, layer_terms), 1.0 / double(per_layer.size()));
    node = add(g, node, scale(g, mean_scd, cfg.beta));
  }
  result.values.combined = node->item();
  result.node = node;
  return result;
}

}  // namespace scd
