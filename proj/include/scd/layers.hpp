#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scd/graph.hpp"
#include "scd/rng.hpp"
#include "scd/tensor.hpp"

namespace scd {

// Valid-mode output extent: floor((in - k) / stride) + 1.
int conv_out_extent(int in, int kernel, int stride);

// 2-D convolution in the deep-learning convention (cross-correlation
// style, no kernel flip), no padding, per-channel bias.
class ConvLayer {
 public:
  ConvLayer(int in_channels, int out_channels, int kernel, int stride);

  // He-scaled normal weights, zero bias.
  void init_params(Rng& rng);

  TensorPtr forward(Graph& g, const TensorPtr& input) const;

  const TensorPtr& weights() const { return weights_; }
  const TensorPtr& bias() const { return bias_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }

 private:
  int in_channels_;
  int out_channels_;
  int kernel_;
  int stride_;
  TensorPtr weights_;  // (C_out, C_in, k, k)
  TensorPtr bias_;     // (1, C_out, 1, 1)
};

TensorPtr maxpool(Graph& g, const TensorPtr& input, int kernel, int stride);

// Per-channel batch normalization. Training mode normalizes with batch
// statistics (biased variance) and updates the running estimates by
// momentum; eval mode normalizes with the running estimates.
class BatchNormLayer {
 public:
  explicit BatchNormLayer(int channels, double momentum = 0.1,
                          double eps = 1e-5);

  TensorPtr forward(Graph& g, const TensorPtr& input, bool training);

  const TensorPtr& gamma() const { return gamma_; }
  const TensorPtr& beta() const { return beta_; }
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }
  const std::vector<double>& running_mean() const { return running_mean_; }
  const std::vector<double>& running_var() const { return running_var_; }
  int channels() const { return channels_; }

 private:
  int channels_;
  double momentum_;
  double eps_;
  TensorPtr gamma_;  // (1, C, 1, 1)
  TensorPtr beta_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
};

enum class LayerKind { conv, pool, batchnorm, relu };

struct LayerDesc {
  LayerKind kind;
  std::string name;      // conv1, pool1, bn1, relu1, ...
  int out_channels = 0;  // conv only
  int kernel = 0;        // conv / pool
  int stride = 1;        // conv / pool
};

// Ordered stack description for the embedding function. Conv layers are
// numbered conv1..convN; SCD taps and checkpoint names refer to those
// ordinals.
struct EmbeddingConfig {
  int input_channels = 3;
  int exemplar_size = 127;
  int search_size = 255;
  std::vector<LayerDesc> layers;

  int conv_count() const;

  // The five-conv / two-pool stack with 127/255 inputs. Batch norm follows
  // every conv; ReLU follows each batch norm except the last. Both
  // trailing choices are flags since only the conv/pool arithmetic is
  // pinned down.
  static EmbeddingConfig table1(bool final_batchnorm = true,
                                bool final_relu = false);

  // Small three-conv stack (8/16/16 channels) on 32/64 inputs for
  // CPU-scale experiments.
  static EmbeddingConfig desk(bool final_batchnorm = true,
                              bool final_relu = false);
};

// Appends conv (+ optional bn/relu) or pool entries with consistent names.
void append_conv(EmbeddingConfig& cfg, int out_channels, int kernel,
                 int stride, bool batchnorm, bool relu);
void append_pool(EmbeddingConfig& cfg, int kernel, int stride);

struct ActivationShape {
  std::string name;
  int h = 0;
  int w = 0;
  int c = 0;
};

// Per-layer activation sizes for a given input; throws ShapeError naming
// the first layer whose geometry fails.
std::vector<ActivationShape> infer_shapes(const EmbeddingConfig& cfg, int in_h,
                                          int in_w);

}  // namespace scd
