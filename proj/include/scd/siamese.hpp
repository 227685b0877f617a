#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "scd/layers.hpp"

namespace scd {

struct NamedParam {
  std::string name;
  TensorPtr tensor;
};

// State that is updated outside the gradient path (batch-norm running
// statistics); checkpointed alongside the parameters.
struct NamedState {
  std::string name;
  std::vector<double>* values;
};

// Shared-weight convolutional embedding. Both Siamese branches call
// embed() on the same instance, so weight sharing is exact by
// construction: there is one parameter set.
class SiameseModel {
 public:
  explicit SiameseModel(EmbeddingConfig cfg);

  void init_params(Rng& rng);

  struct EmbedResult {
    TensorPtr features;            // output of the last layer
    std::map<int, TensorPtr> taps; // conv ordinal -> pre-batchnorm conv output
  };

  // Runs the stack; `taps` lists conv ordinals whose raw conv outputs are
  // exposed (the decorrelation attachment points).
  EmbedResult embed(Graph& g, const TensorPtr& image, bool training,
                    const std::set<int>& taps = {});

  // Raw cross-correlation scores are sums over thousands of feature
  // products; the learnable scalar gain/bias rescales them into the
  // logistic loss's working range.
  TensorPtr score_map(Graph& g, const TensorPtr& exemplar_feat,
                      const TensorPtr& search_feat) const;

  std::vector<NamedParam> parameters();
  std::vector<NamedState> state();

  const EmbeddingConfig& config() const { return cfg_; }
  // Product of conv/pool strides; one score-map cell spans this many
  // input pixels.
  int total_stride() const;
  // Channel count of conv ordinal `l` (1-based).
  int conv_channels(int ordinal) const;

 private:
  struct StackEntry {
    LayerDesc desc;
    std::unique_ptr<ConvLayer> conv;
    std::unique_ptr<BatchNormLayer> bn;
  };
  EmbeddingConfig cfg_;
  std::vector<StackEntry> stack_;
  TensorPtr score_gain_;
  TensorPtr score_bias_;
};

// Score grid with its supervision: labels in {+1,-1} and non-negative
// per-pixel weights summing to 1 per sample.
struct ScoreMap {
  TensorPtr score;              // (B, 1, H, W)
  std::vector<double> labels;   // B*H*W
  std::vector<double> weights;  // B*H*W
};

// out[b,y,x] = sum_{c,i,j} exemplar[b,c,i,j] * search[b,c,y+i,x+j].
// Output spatial extent is search - exemplar + 1 per dimension.
TensorPtr cross_correlate(Graph& g, const TensorPtr& exemplar_feat,
                          const TensorPtr& search_feat);

struct LabelGrid {
  std::vector<double> labels;
  std::vector<double> weights;
};

// +1 within `radius_pos` (Euclidean, in score-map pixels) of `center`,
// -1 elsewhere; the two classes share the weight mass equally.
LabelGrid make_labels(int h, int w, int center_y, int center_x,
                      double radius_pos);

// Weighted per-pixel logistic loss, mean over the batch:
//   (1/B) sum_b sum_u weight[u] * log(1 + exp(-label[u] * score[u]))
TensorPtr task_loss(Graph& g, const ScoreMap& score_map);

}  // namespace scd
