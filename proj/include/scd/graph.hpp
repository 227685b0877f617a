#pragma once

#include <functional>
#include <unordered_set>
#include <vector>

#include "scd/tensor.hpp"

namespace scd {

// Define-by-run tape. Operations append one node per call in execution
// order; backward() replays the tape in reverse. A graph is rebuilt for
// every training iteration and must be driven by one thread at a time.
class Graph {
 public:
  // Allocates an op output and registers it as produced by this graph.
  TensorPtr make_output(Shape s, bool requires_grad);

  // Appends a backward rule. Rules read out->grad and accumulate (+=)
  // into input gradients.
  void record(TensorPtr output, std::function<void()> backward);

  bool produced(const Tensor* t) const {
    return produced_.count(t) != 0;
  }

  // Reverse-mode pass from a scalar root produced by this graph.
  // Gradients of tensors produced here are reset first, so leaves see the
  // pure d(root)/d(leaf) contribution of this call; leaf gradients
  // accumulate across calls until explicitly zeroed.
  void backward(const TensorPtr& root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorPtr out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::vector<TensorPtr> outputs_;
  std::unordered_set<const Tensor*> produced_;
};

// Elementwise and reduction primitives. Every op computes its value
// immediately and records the matching backward rule when any input
// requires a gradient.
TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr div(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr add_n(Graph& g, const std::vector<TensorPtr>& xs);
TensorPtr scale(Graph& g, const TensorPtr& a, double k);
TensorPtr add_const(Graph& g, const TensorPtr& a, double k);
// Subgradient at x = 0 is fixed to 0 for sqrt, abs and relu.
TensorPtr sqrt(Graph& g, const TensorPtr& a);
TensorPtr abs(Graph& g, const TensorPtr& a);
TensorPtr relu(Graph& g, const TensorPtr& a);
TensorPtr sum_all(Graph& g, const TensorPtr& a);
// gain * x + bias with 1-element gain/bias tensors broadcast over x.
TensorPtr scalar_affine(Graph& g, const TensorPtr& x, const TensorPtr& gain,
                        const TensorPtr& bias);
TensorPtr reshape(Graph& g, const TensorPtr& a, Shape s);
// Copies sample n / channel c into a 1x1xHxW tensor; backward scatters back.
TensorPtr slice_channel(Graph& g, const TensorPtr& a, int n, int c);

}  // namespace scd
