#include "scd/layers.hpp"

#include <cmath>
#include <limits>

namespace scd {

int conv_out_extent(int in, int kernel, int stride) {
  if (in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

ConvLayer::ConvLayer(int in_channels, int out_channels, int kernel, int stride)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  if (kernel < 1 || stride < 1 || in_channels < 1 || out_channels < 1) {
    throw ShapeError("ConvLayer: kernel, stride and channel counts must be >= 1");
  }
  weights_ = Tensor::zeros(Shape{out_channels, in_channels, kernel, kernel}, true);
  bias_ = Tensor::zeros(Shape{1, out_channels, 1, 1}, true);
}

void ConvLayer::init_params(Rng& rng) {
  const double fan_in = double(in_channels_) * kernel_ * kernel_;
  const double stddev = std::sqrt(2.0 / fan_in);
  for (double& v : weights_->data()) v = rng.normal(0.0, stddev);
  bias_->fill(0.0);
}

TensorPtr ConvLayer::forward(Graph& g, const TensorPtr& input) const {
  const Shape& is = input->shape();
  if (is.c != in_channels_) {
    throw ShapeError("conv: expected " + std::to_string(in_channels_) +
                     " input channels, got " + std::to_string(is.c));
  }
  const int oh = conv_out_extent(is.h, kernel_, stride_);
  const int ow = conv_out_extent(is.w, kernel_, stride_);
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv: kernel " + std::to_string(kernel_) +
                     " stride " + std::to_string(stride_) +
                     " does not fit input " + is.str());
  }

  bool rg = input->requires_grad() || weights_->requires_grad() ||
            bias_->requires_grad();
  auto out = g.make_output(Shape{is.n, out_channels_, oh, ow}, rg);

  const int k = kernel_;
  const int stride = stride_;
  const double* in = input->data().data();
  const double* w = weights_->data().data();
  const double* b = bias_->data().data();
  double* o = out->data().data();

  const std::int64_t in_chan = std::int64_t(is.h) * is.w;
  const std::int64_t out_chan = std::int64_t(oh) * ow;
  for (int bn = 0; bn < is.n; ++bn) {
    for (int oc = 0; oc < out_channels_; ++oc) {
      double* odst = o + (std::int64_t(bn) * out_channels_ + oc) * out_chan;
      for (std::int64_t i = 0; i < out_chan; ++i) odst[i] = b[oc];
      for (int ic = 0; ic < in_channels_; ++ic) {
        const double* isrc = in + (std::int64_t(bn) * is.c + ic) * in_chan;
        const double* wsrc = w + (std::int64_t(oc) * in_channels_ + ic) * k * k;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ky = 0; ky < k; ++ky) {
            const double* irow = isrc + std::int64_t(oy * stride + ky) * is.w;
            const double* wrow = wsrc + ky * k;
            double* orow = odst + std::int64_t(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              double acc = 0.0;
              const double* ip = irow + ox * stride;
              for (int kx = 0; kx < k; ++kx) acc += wrow[kx] * ip[kx];
              orow[ox] += acc;
            }
          }
        }
      }
    }
  }

  if (rg) {
    auto weights = weights_;
    auto bias = bias_;
    const int in_channels = in_channels_;
    const int out_channels = out_channels_;
    g.record(out, [input, weights, bias, out, k, stride, in_channels,
                   out_channels] {
      const Shape& is2 = input->shape();
      const Shape& os2 = out->shape();
      const std::int64_t in_chan2 = std::int64_t(is2.h) * is2.w;
      const std::int64_t out_chan2 = std::int64_t(os2.h) * os2.w;
      const double* go = out->grad().data();
      const double* in2 = input->data().data();
      const double* w2 = weights->data().data();

      if (bias->requires_grad()) {
        double* gb = bias->grad().data();
        for (int bn = 0; bn < os2.n; ++bn) {
          for (int oc = 0; oc < out_channels; ++oc) {
            const double* gsrc = go + (std::int64_t(bn) * out_channels + oc) * out_chan2;
            double acc = 0.0;
            for (std::int64_t i = 0; i < out_chan2; ++i) acc += gsrc[i];
            gb[oc] += acc;
          }
        }
      }
      if (weights->requires_grad()) {
        double* gw = weights->grad().data();
        for (int bn = 0; bn < os2.n; ++bn) {
          for (int oc = 0; oc < out_channels; ++oc) {
            const double* gsrc = go + (std::int64_t(bn) * out_channels + oc) * out_chan2;
            for (int ic = 0; ic < in_channels; ++ic) {
              const double* isrc = in2 + (std::int64_t(bn) * is2.c + ic) * in_chan2;
              double* gwc = gw + (std::int64_t(oc) * in_channels + ic) * k * k;
              for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                  double acc = 0.0;
                  for (int oy = 0; oy < os2.h; ++oy) {
                    const double* irow = isrc + std::int64_t(oy * stride + ky) * is2.w + kx;
                    const double* grow = gsrc + std::int64_t(oy) * os2.w;
                    for (int ox = 0; ox < os2.w; ++ox) {
                      acc += grow[ox] * irow[ox * stride];
                    }
                  }
                  gwc[ky * k + kx] += acc;
                }
              }
            }
          }
        }
      }
      if (input->requires_grad()) {
        double* gi = input->grad().data();
        for (int bn = 0; bn < os2.n; ++bn) {
          for (int oc = 0; oc < out_channels; ++oc) {
            const double* gsrc = go + (std::int64_t(bn) * out_channels + oc) * out_chan2;
            for (int ic = 0; ic < in_channels; ++ic) {
              double* gic = gi + (std::int64_t(bn) * is2.c + ic) * in_chan2;
              const double* wsrc = w2 + (std::int64_t(oc) * in_channels + ic) * k * k;
              for (int oy = 0; oy < os2.h; ++oy) {
                const double* grow = gsrc + std::int64_t(oy) * os2.w;
                for (int ky = 0; ky < k; ++ky) {
                  double* girow = gic + std::int64_t(oy * stride + ky) * is2.w;
                  const double* wrow = wsrc + ky * k;
                  for (int ox = 0; ox < os2.w; ++ox) {
                    const double gv = grow[ox];
                    double* gp = girow + ox * stride;
                    for (int kx = 0; kx < k; ++kx) gp[kx] += gv * wrow[kx];
                  }
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

TensorPtr maxpool(Graph& g, const TensorPtr& input, int kernel, int stride) {
  const Shape& is = input->shape();
  if (kernel < 1 || stride < 1) {
    throw ShapeError("maxpool: kernel and stride must be >= 1");
  }
  const int oh = conv_out_extent(is.h, kernel, stride);
  const int ow = conv_out_extent(is.w, kernel, stride);
  if (oh < 1 || ow < 1) {
    throw ShapeError("maxpool: window " + std::to_string(kernel) +
                     " stride " + std::to_string(stride) +
                     " does not fit input " + is.str());
  }
  bool rg = input->requires_grad();
  auto out = g.make_output(Shape{is.n, is.c, oh, ow}, rg);
  // First-found maximum wins ties, so gradient routing is deterministic.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out->size()));
  const double* in = input->data().data();
  double* o = out->data().data();
  std::int64_t oi = 0;
  for (int bn = 0; bn < is.n; ++bn) {
    for (int c = 0; c < is.c; ++c) {
      const std::int64_t cbase = (std::int64_t(bn) * is.c + c) * is.h * is.w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = -1;
          for (int ky = 0; ky < kernel; ++ky) {
            const std::int64_t row = cbase + std::int64_t(oy * stride + ky) * is.w;
            for (int kx = 0; kx < kernel; ++kx) {
              const std::int64_t idx = row + ox * stride + kx;
              if (in[idx] > best) {
                best = in[idx];
                best_idx = idx;
              }
            }
          }
          o[oi] = best;
          (*argmax)[std::size_t(oi)] = best_idx;
        }
      }
    }
  }
  if (rg) {
    g.record(out, [input, out, argmax] {
      auto go = out->grad();
      auto gi = input->grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        gi[(*argmax)[i]] += go[i];
      }
    });
  }
  return out;
}

BatchNormLayer::BatchNormLayer(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  if (channels < 1) throw ShapeError("BatchNormLayer: channels must be >= 1");
  if (eps <= 0.0) throw std::invalid_argument("BatchNormLayer: eps must be > 0");
  gamma_ = Tensor::full(Shape{1, channels, 1, 1}, 1.0, true);
  beta_ = Tensor::zeros(Shape{1, channels, 1, 1}, true);
  running_mean_.assign(channels, 0.0);
  running_var_.assign(channels, 1.0);
}

TensorPtr BatchNormLayer::forward(Graph& g, const TensorPtr& input,
                                  bool training) {
  const Shape& is = input->shape();
  if (is.c != channels_) {
    throw ShapeError("batchnorm: expected " + std::to_string(channels_) +
                     " channels, got " + std::to_string(is.c));
  }
  const std::int64_t m = std::int64_t(is.n) * is.h * is.w;
  if (training && m < 2) {
    throw ShapeError("batchnorm: training mode needs n*h*w >= 2");
  }
  bool rg = input->requires_grad() || gamma_->requires_grad() ||
            beta_->requires_grad();
  auto out = g.make_output(is, rg);

  const double* in = input->data().data();
  double* o = out->data().data();
  const double* gam = gamma_->data().data();
  const double* bet = beta_->data().data();
  const std::int64_t plane = std::int64_t(is.h) * is.w;

  auto mean = std::make_shared<std::vector<double>>(channels_, 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(channels_, 0.0);

  if (training) {
    for (int c = 0; c < channels_; ++c) {
      double acc = 0.0;
      for (int bn = 0; bn < is.n; ++bn) {
        const double* src = in + (std::int64_t(bn) * is.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      }
      const double mu = acc / double(m);
      double var_acc = 0.0;
      for (int bn = 0; bn < is.n; ++bn) {
        const double* src = in + (std::int64_t(bn) * is.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = src[i] - mu;
          var_acc += d * d;
        }
      }
      const double var = var_acc / double(m);
      (*mean)[c] = mu;
      (*inv_std)[c] = 1.0 / std::sqrt(var + eps_);
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mu;
      const double var_unbiased = var * double(m) / double(m - 1);
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var_unbiased;
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      (*mean)[c] = running_mean_[c];
      (*inv_std)[c] = 1.0 / std::sqrt(running_var_[c] + eps_);
    }
  }

  for (int bn = 0; bn < is.n; ++bn) {
    for (int c = 0; c < channels_; ++c) {
      const double* src = in + (std::int64_t(bn) * is.c + c) * plane;
      double* dst = o + (std::int64_t(bn) * is.c + c) * plane;
      const double mu = (*mean)[c];
      const double istd = (*inv_std)[c];
      for (std::int64_t i = 0; i < plane; ++i) {
        dst[i] = gam[c] * (src[i] - mu) * istd + bet[c];
      }
    }
  }

  if (rg) {
    auto gamma = gamma_;
    auto beta = beta_;
    const int channels = channels_;
    g.record(out, [input, out, gamma, beta, mean, inv_std, channels, training] {
      const Shape& is2 = input->shape();
      const std::int64_t plane2 = std::int64_t(is2.h) * is2.w;
      const std::int64_t m2 = std::int64_t(is2.n) * plane2;
      const double* in2 = input->data().data();
      const double* go = out->grad().data();
      const double* gam2 = gamma->data().data();

      for (int c = 0; c < channels; ++c) {
        const double mu = (*mean)[c];
        const double istd = (*inv_std)[c];
        double sum_go = 0.0;
        double sum_go_xhat = 0.0;
        for (int bn = 0; bn < is2.n; ++bn) {
          const std::int64_t base = (std::int64_t(bn) * is2.c + c) * plane2;
          for (std::int64_t i = 0; i < plane2; ++i) {
            const double xhat = (in2[base + i] - mu) * istd;
            sum_go += go[base + i];
            sum_go_xhat += go[base + i] * xhat;
          }
        }
        if (beta->requires_grad()) beta->grad()[c] += sum_go;
        if (gamma->requires_grad()) gamma->grad()[c] += sum_go_xhat;
        if (!input->requires_grad()) continue;

        double* gi = input->grad().data();
        if (training) {
          // d/dx of batch-statistics normalization.
          const double inv_m = 1.0 / double(m2);
          for (int bn = 0; bn < is2.n; ++bn) {
            const std::int64_t base = (std::int64_t(bn) * is2.c + c) * plane2;
            for (std::int64_t i = 0; i < plane2; ++i) {
              const double xhat = (in2[base + i] - mu) * istd;
              gi[base + i] += gam2[c] * istd *
                              (go[base + i] - inv_m * sum_go -
                               inv_m * xhat * sum_go_xhat);
            }
          }
        } else {
          for (int bn = 0; bn < is2.n; ++bn) {
            const std::int64_t base = (std::int64_t(bn) * is2.c + c) * plane2;
            for (std::int64_t i = 0; i < plane2; ++i) {
              gi[base + i] += gam2[c] * istd * go[base + i];
            }
          }
        }
      }
    });
  }
  return out;
}

int EmbeddingConfig::conv_count() const {
  int n = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::conv) ++n;
  }
  return n;
}

void append_conv(EmbeddingConfig& cfg, int out_channels, int kernel,
                 int stride, bool batchnorm, bool relu) {
  const int ordinal = cfg.conv_count() + 1;
  const std::string suffix = std::to_string(ordinal);
  cfg.layers.push_back(LayerDesc{LayerKind::conv, "conv" + suffix,
                                 out_channels, kernel, stride});
  if (batchnorm) {
    cfg.layers.push_back(LayerDesc{LayerKind::batchnorm, "bn" + suffix});
  }
  if (relu) {
    cfg.layers.push_back(LayerDesc{LayerKind::relu, "relu" + suffix});
  }
}

void append_pool(EmbeddingConfig& cfg, int kernel, int stride) {
  int pools = 0;
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerKind::pool) ++pools;
  }
  cfg.layers.push_back(LayerDesc{LayerKind::pool,
                                 "pool" + std::to_string(pools + 1), 0, kernel,
                                 stride});
}

EmbeddingConfig EmbeddingConfig::table1(bool final_batchnorm, bool final_relu) {
  EmbeddingConfig cfg;
  cfg.input_channels = 3;
  cfg.exemplar_size = 127;
  cfg.search_size = 255;
  append_conv(cfg, 96, 11, 2, true, true);
  append_pool(cfg, 3, 2);
  append_conv(cfg, 256, 5, 1, true, true);
  append_pool(cfg, 3, 1);
  append_conv(cfg, 384, 3, 1, true, true);
  append_conv(cfg, 384, 3, 1, true, true);
  append_conv(cfg, 32, 3, 1, final_batchnorm, final_relu);
  return cfg;
}

EmbeddingConfig EmbeddingConfig::desk(bool final_batchnorm, bool final_relu) {
  EmbeddingConfig cfg;
  cfg.input_channels = 3;
  cfg.exemplar_size = 32;
  cfg.search_size = 64;
  append_conv(cfg, 8, 5, 2, true, true);
  append_conv(cfg, 16, 3, 1, true, true);
  append_conv(cfg, 16, 3, 1, final_batchnorm, final_relu);
  return cfg;
}

std::vector<ActivationShape> infer_shapes(const EmbeddingConfig& cfg, int in_h,
                                          int in_w) {
  std::vector<ActivationShape> shapes;
  int h = in_h;
  int w = in_w;
  int c = cfg.input_channels;
  if (h < 1 || w < 1 || c < 1) {
    throw ShapeError("infer_shapes: input must be at least 1x1x1");
  }
  for (const auto& l : cfg.layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::pool: {
        const int oh = conv_out_extent(h, l.kernel, l.stride);
        const int ow = conv_out_extent(w, l.kernel, l.stride);
        if (oh < 1 || ow < 1) {
          throw ShapeError("infer_shapes: layer " + l.name + " (kernel " +
                           std::to_string(l.kernel) + ", stride " +
                           std::to_string(l.stride) + ") does not fit " +
                           std::to_string(h) + "x" + std::to_string(w));
        }
        h = oh;
        w = ow;
        if (l.kind == LayerKind::conv) c = l.out_channels;
        break;
      }
      case LayerKind::batchnorm:
      case LayerKind::relu:
        break;
    }
    shapes.push_back(ActivationShape{l.name, h, w, c});
  }
  return shapes;
}

}  // namespace scd
