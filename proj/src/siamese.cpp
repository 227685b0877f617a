#include "scd/siamese.hpp"

#include <cmath>
#include <stdexcept>

namespace scd {

SiameseModel::SiameseModel(EmbeddingConfig cfg) : cfg_(std::move(cfg)) {
  int in_channels = cfg_.input_channels;
  for (const auto& desc : cfg_.layers) {
    StackEntry entry;
    entry.desc = desc;
    switch (desc.kind) {
      case LayerKind::conv:
        entry.conv = std::make_unique<ConvLayer>(in_channels, desc.out_channels,
                                                 desc.kernel, desc.stride);
        in_channels = desc.out_channels;
        break;
      case LayerKind::batchnorm:
        entry.bn = std::make_unique<BatchNormLayer>(in_channels);
        break;
      case LayerKind::pool:
      case LayerKind::relu:
        break;
    }
    stack_.push_back(std::move(entry));
  }
  score_gain_ = Tensor::full(Shape{1, 1, 1, 1}, 1e-3, true);
  score_bias_ = Tensor::zeros(Shape{1, 1, 1, 1}, true);
}

void SiameseModel::init_params(Rng& rng) {
  for (auto& entry : stack_) {
    if (entry.conv) entry.conv->init_params(rng);
    if (entry.bn) {
      entry.bn->gamma()->fill(1.0);
      entry.bn->beta()->fill(0.0);
      std::fill(entry.bn->running_mean().begin(), entry.bn->running_mean().end(), 0.0);
      std::fill(entry.bn->running_var().begin(), entry.bn->running_var().end(), 1.0);
    }
  }
  score_gain_->fill(1e-3);
  score_bias_->fill(0.0);
}

TensorPtr SiameseModel::score_map(Graph& g, const TensorPtr& exemplar_feat,
                                  const TensorPtr& search_feat) const {
  return scalar_affine(g, cross_correlate(g, exemplar_feat, search_feat),
                       score_gain_, score_bias_);
}

SiameseModel::EmbedResult SiameseModel::embed(Graph& g, const TensorPtr& image,
                                              bool training,
                                              const std::set<int>& taps) {
  EmbedResult result;
  TensorPtr x = image;
  int conv_ordinal = 0;
  for (auto& entry : stack_) {
    switch (entry.desc.kind) {
      case LayerKind::conv:
        x = entry.conv->forward(g, x);
        ++conv_ordinal;
        if (taps.count(conv_ordinal)) {
          result.taps[conv_ordinal] = x;
        }
        break;
      case LayerKind::pool:
        x = maxpool(g, x, entry.desc.kernel, entry.desc.stride);
        break;
      case LayerKind::batchnorm:
        x = entry.bn->forward(g, x, training);
        break;
      case LayerKind::relu:
        x = relu(g, x);
        break;
    }
  }
  result.features = x;
  for (int t : taps) {
    if (!result.taps.count(t)) {
      throw std::invalid_argument("embed: tap ordinal " + std::to_string(t) +
                                  " exceeds conv count " +
                                  std::to_string(conv_ordinal));
    }
  }
  return result;
}

std::vector<NamedParam> SiameseModel::parameters() {
  std::vector<NamedParam> params;
  for (auto& entry : stack_) {
    if (entry.conv) {
      params.push_back({entry.desc.name + ".weight", entry.conv->weights()});
      params.push_back({entry.desc.name + ".bias", entry.conv->bias()});
    }
    if (entry.bn) {
      params.push_back({entry.desc.name + ".gamma", entry.bn->gamma()});
      params.push_back({entry.desc.name + ".beta", entry.bn->beta()});
    }
  }
  params.push_back({"score.gain", score_gain_});
  params.push_back({"score.bias", score_bias_});
  return params;
}

std::vector<NamedState> SiameseModel::state() {
  std::vector<NamedState> state;
  for (auto& entry : stack_) {
    if (entry.bn) {
      state.push_back({entry.desc.name + ".running_mean", &entry.bn->running_mean()});
      state.push_back({entry.desc.name + ".running_var", &entry.bn->running_var()});
    }
  }
  return state;
}

int SiameseModel::total_stride() const {
  int s = 1;
  for (const auto& l : cfg_.layers) {
    if (l.kind == LayerKind::conv || l.kind == LayerKind::pool) s *= l.stride;
  }
  return s;
}

int SiameseModel::conv_channels(int ordinal) const {
  int seen = 0;
  for (const auto& l : cfg_.layers) {
    if (l.kind == LayerKind::conv && ++seen == ordinal) return l.out_channels;
  }
  throw std::invalid_argument("conv ordinal " + std::to_string(ordinal) +
                              " out of range");
}

TensorPtr cross_correlate(Graph& g, const TensorPtr& exemplar_feat,
                          const TensorPtr& search_feat) {
  const Shape& es = exemplar_feat->shape();
  const Shape& ss = search_feat->shape();
  if (es.c != ss.c || es.n != ss.n) {
    throw ShapeError("cross_correlate: batch/channel mismatch " + es.str() +
                     " vs " + ss.str());
  }
  if (es.h > ss.h || es.w > ss.w) {
    throw ShapeError("cross_correlate: exemplar " + es.str() +
                     " larger than search " + ss.str());
  }
  const int oh = ss.h - es.h + 1;
  const int ow = ss.w - es.w + 1;
  bool rg = exemplar_feat->requires_grad() || search_feat->requires_grad();
  auto out = g.make_output(Shape{es.n, 1, oh, ow}, rg);

  const double* ex = exemplar_feat->data().data();
  const double* se = search_feat->data().data();
  double* o = out->data().data();
  const std::int64_t ex_plane = std::int64_t(es.h) * es.w;
  const std::int64_t se_plane = std::int64_t(ss.h) * ss.w;
  for (int b = 0; b < es.n; ++b) {
    double* ob = o + std::int64_t(b) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int c = 0; c < es.c; ++c) {
          const double* ec = ex + (std::int64_t(b) * es.c + c) * ex_plane;
          const double* sc = se + (std::int64_t(b) * ss.c + c) * se_plane;
          for (int i = 0; i < es.h; ++i) {
            const double* erow = ec + std::int64_t(i) * es.w;
            const double* srow = sc + std::int64_t(y + i) * ss.w + x;
            for (int j = 0; j < es.w; ++j) acc += erow[j] * srow[j];
          }
        }
        ob[std::int64_t(y) * ow + x] = acc;
      }
    }
  }

  if (rg) {
    g.record(out, [exemplar_feat, search_feat, out] {
      const Shape& es2 = exemplar_feat->shape();
      const Shape& ss2 = search_feat->shape();
      const Shape& os2 = out->shape();
      const double* go = out->grad().data();
      const double* ex2 = exemplar_feat->data().data();
      const double* se2 = search_feat->data().data();
      const std::int64_t ex_plane2 = std::int64_t(es2.h) * es2.w;
      const std::int64_t se_plane2 = std::int64_t(ss2.h) * ss2.w;
      const bool need_ex = exemplar_feat->requires_grad();
      const bool need_se = search_feat->requires_grad();
      double* gex = need_ex ? exemplar_feat->grad().data() : nullptr;
      double* gse = need_se ? search_feat->grad().data() : nullptr;
      for (int b = 0; b < es2.n; ++b) {
        const double* gb = go + std::int64_t(b) * os2.h * os2.w;
        for (int c = 0; c < es2.c; ++c) {
          const double* ec = ex2 + (std::int64_t(b) * es2.c + c) * ex_plane2;
          const double* sc = se2 + (std::int64_t(b) * ss2.c + c) * se_plane2;
          double* gec = need_ex ? gex + (std::int64_t(b) * es2.c + c) * ex_plane2 : nullptr;
          double* gsc = need_se ? gse + (std::int64_t(b) * ss2.c + c) * se_plane2 : nullptr;
          for (int y = 0; y < os2.h; ++y) {
            for (int x = 0; x < os2.w; ++x) {
              const double gv = gb[std::int64_t(y) * os2.w + x];
              if (gv == 0.0) continue;
              for (int i = 0; i < es2.h; ++i) {
                const double* srow = sc + std::int64_t(y + i) * ss2.w + x;
                const double* erow = ec + std::int64_t(i) * es2.w;
                if (need_ex) {
                  double* gerow = gec + std::int64_t(i) * es2.w;
                  for (int j = 0; j < es2.w; ++j) gerow[j] += gv * srow[j];
                }
                if (need_se) {
                  double* gsrow = gsc + std::int64_t(y + i) * ss2.w + x;
                  for (int j = 0; j < es2.w; ++j) gsrow[j] += gv * erow[j];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

LabelGrid make_labels(int h, int w, int center_y, int center_x,
                      double radius_pos) {
  if (center_y < 0 || center_y >= h || center_x < 0 || center_x >= w) {
    throw std::invalid_argument("make_labels: center (" +
                                std::to_string(center_y) + "," +
                                std::to_string(center_x) +
                                ") outside grid " + std::to_string(h) + "x" +
                                std::to_string(w));
  }
  if (radius_pos < 0.0) {
    throw std::invalid_argument("make_labels: radius must be >= 0");
  }
  LabelGrid grid;
  grid.labels.assign(std::size_t(h) * w, -1.0);
  const double r2 = radius_pos * radius_pos;
  std::int64_t n_pos = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dy = y - center_y;
      const double dx = x - center_x;
      if (dy * dy + dx * dx <= r2) {
        grid.labels[std::size_t(y) * w + x] = 1.0;
        ++n_pos;
      }
    }
  }
  const std::int64_t n_neg = std::int64_t(h) * w - n_pos;
  if (n_neg == 0) {
    throw std::invalid_argument(
        "make_labels: radius covers the whole grid, no negatives left");
  }
  grid.weights.assign(grid.labels.size(), 0.0);
  for (std::size_t i = 0; i < grid.labels.size(); ++i) {
    grid.weights[i] = grid.labels[i] > 0.0 ? 0.5 / double(n_pos)
                                           : 0.5 / double(n_neg);
  }
  return grid;
}

namespace {

double softplus(double t) {
  // log(1 + exp(t)) without overflow.
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

TensorPtr task_loss(Graph& g, const ScoreMap& score_map) {
  const TensorPtr& score = score_map.score;
  const Shape& s = score->shape();
  const std::size_t per_sample = std::size_t(s.h) * s.w;
  if (s.c != 1) {
    throw ShapeError("task_loss: score map must have a single channel");
  }
  if (score_map.labels.size() != std::size_t(s.n) * per_sample ||
      score_map.weights.size() != score_map.labels.size()) {
    throw ShapeError("task_loss: label/weight grids do not match score dims");
  }
  for (int b = 0; b < s.n; ++b) {
    bool has_pos = false;
    bool has_neg = false;
    for (std::size_t i = 0; i < per_sample; ++i) {
      const double l = score_map.labels[std::size_t(b) * per_sample + i];
      (l > 0.0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) {
      throw std::invalid_argument(
          "task_loss: sample " + std::to_string(b) +
          " has a single-class label grid");
    }
  }

  bool rg = score->requires_grad();
  auto out = g.make_output(Shape{1, 1, 1, 1}, rg);
  const double* sv = score->data().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < score_map.labels.size(); ++i) {
    acc += score_map.weights[i] * softplus(-score_map.labels[i] * sv[i]);
  }
  out->data()[0] = acc / double(s.n);

  if (rg) {
    auto labels = score_map.labels;
    auto weights = score_map.weights;
    const int batch = s.n;
    g.record(out, [score, out, labels = std::move(labels),
                   weights = std::move(weights), batch] {
      const double go = out->grad()[0];
      const double* sv2 = score->data().data();
      auto gs = score->grad();
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = labels[i];
        gs[i] += go * weights[i] * (-y) * sigmoid(-y * sv2[i]) / double(batch);
      }
    });
  }
  return out;
}

}  // namespace scd
