#include "scd/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace scd {

TensorPtr Graph::make_output(Shape s, bool requires_grad) {
  auto t = Tensor::zeros(s, requires_grad);
  produced_.insert(t.get());
  outputs_.push_back(t);
  return t;
}

void Graph::record(TensorPtr output, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(output), std::move(backward)});
}

void Graph::backward(const TensorPtr& root) {
  if (!root) {
    throw std::invalid_argument("backward: null root");
  }
  if (root->size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + root->shape().str());
  }
  if (!produced(root.get())) {
    throw std::invalid_argument("backward: root was not produced by this graph");
  }
  if (!root->requires_grad()) {
    throw std::logic_error("backward: root does not require gradients");
  }
  // Internal gradients are scratch for this pass; leaves keep theirs.
  for (auto& t : outputs_) {
    t->zero_grad();
  }
  root->grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->back();
  }
}

namespace {

void check_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
  if (!(a->shape() == b->shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a->shape().str() +
                     " vs " + b->shape().str());
  }
}

bool needs_grad(const TensorPtr& a) { return a->requires_grad(); }

}  // namespace

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", a, b);
  bool rg = needs_grad(a) || needs_grad(b);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  auto pb = b->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] + pb[i];
  if (rg) {
    g.record(out, [a, b, out] {
      auto go = out->grad();
      if (a->requires_grad()) {
        auto ga = a->grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b->requires_grad()) {
        auto gb = b->grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", a, b);
  bool rg = needs_grad(a) || needs_grad(b);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  auto pb = b->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] - pb[i];
  if (rg) {
    g.record(out, [a, b, out] {
      auto go = out->grad();
      if (a->requires_grad()) {
        auto ga = a->grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b->requires_grad()) {
        auto gb = b->grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("mul", a, b);
  bool rg = needs_grad(a) || needs_grad(b);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  auto pb = b->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] * pb[i];
  if (rg) {
    g.record(out, [a, b, out] {
      auto go = out->grad();
      if (a->requires_grad()) {
        auto ga = a->grad();
        auto pb2 = b->data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += pb2[i] * go[i];
      }
      if (b->requires_grad()) {
        auto gb = b->grad();
        auto pa2 = a->data();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += pa2[i] * go[i];
      }
    });
  }
  return out;
}

TensorPtr div(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("div", a, b);
  bool rg = needs_grad(a) || needs_grad(b);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  auto pb = b->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] / pb[i];
  if (rg) {
    g.record(out, [a, b, out] {
      auto go = out->grad();
      auto pb2 = b->data();
      if (a->requires_grad()) {
        auto ga = a->grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / pb2[i];
      }
      if (b->requires_grad()) {
        auto gb = b->grad();
        auto pa2 = a->data();
        for (std::size_t i = 0; i < go.size(); ++i) {
          gb[i] -= pa2[i] / (pb2[i] * pb2[i]) * go[i];
        }
      }
    });
  }
  return out;
}

TensorPtr add_n(Graph& g, const std::vector<TensorPtr>& xs) {
  if (xs.empty()) {
    throw std::invalid_argument("add_n: empty input list");
  }
  bool rg = false;
  for (auto& x : xs) {
    check_same_shape("add_n", xs[0], x);
    rg = rg || x->requires_grad();
  }
  auto out = g.make_output(xs[0]->shape(), rg);
  auto o = out->data();
  for (auto& x : xs) {
    auto px = x->data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += px[i];
  }
  if (rg) {
    g.record(out, [xs, out] {
      auto go = out->grad();
      for (auto& x : xs) {
        if (!x->requires_grad()) continue;
        auto gx = x->grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr scale(Graph& g, const TensorPtr& a, double k) {
  bool rg = needs_grad(a);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k * pa[i];
  if (rg) {
    g.record(out, [a, out, k] {
      auto go = out->grad();
      auto ga = a->grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += k * go[i];
    });
  }
  return out;
}

TensorPtr add_const(Graph& g, const TensorPtr& a, double k) {
  bool rg = needs_grad(a);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] + k;
  if (rg) {
    g.record(out, [a, out] {
      auto go = out->grad();
      auto ga = a->grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

TensorPtr sqrt(Graph& g, const TensorPtr& a) {
  bool rg = needs_grad(a);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(pa[i]);
  if (rg) {
    g.record(out, [a, out] {
      auto go = out->grad();
      auto ga = a->grad();
      auto po = out->data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (po[i] != 0.0) ga[i] += go[i] / (2.0 * po[i]);
      }
    });
  }
  return out;
}

TensorPtr abs(Graph& g, const TensorPtr& a) {
  bool rg = needs_grad(a);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::fabs(pa[i]);
  if (rg) {
    g.record(out, [a, out] {
      auto go = out->grad();
      auto ga = a->grad();
      auto pa2 = a->data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (pa2[i] > 0.0) ga[i] += go[i];
        else if (pa2[i] < 0.0) ga[i] -= go[i];
      }
    });
  }
  return out;
}

TensorPtr relu(Graph& g, const TensorPtr& a) {
  bool rg = needs_grad(a);
  auto out = g.make_output(a->shape(), rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  if (rg) {
    g.record(out, [a, out] {
      auto go = out->grad();
      auto ga = a->grad();
      auto pa2 = a->data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (pa2[i] > 0.0) ga[i] += go[i];
      }
    });
  }
  return out;
}

TensorPtr sum_all(Graph& g, const TensorPtr& a) {
  bool rg = needs_grad(a);
  auto out = g.make_output(Shape{1, 1, 1, 1}, rg);
  double acc = 0.0;
  for (double v : a->data()) acc += v;
  out->data()[0] = acc;
  if (rg) {
    g.record(out, [a, out] {
      double go = out->grad()[0];
      auto ga = a->grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
  }
  return out;
}

TensorPtr scalar_affine(Graph& g, const TensorPtr& x, const TensorPtr& gain,
                        const TensorPtr& bias) {
  if (gain->size() != 1 || bias->size() != 1) {
    throw ShapeError("scalar_affine: gain and bias must be 1-element tensors");
  }
  bool rg = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  auto out = g.make_output(x->shape(), rg);
  auto o = out->data();
  auto px = x->data();
  const double k = gain->data()[0];
  const double b = bias->data()[0];
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k * px[i] + b;
  if (rg) {
    g.record(out, [x, gain, bias, out] {
      auto go = out->grad();
      const double k2 = gain->data()[0];
      if (x->requires_grad()) {
        auto gx = x->grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += k2 * go[i];
      }
      if (gain->requires_grad()) {
        auto px2 = x->data();
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * px2[i];
        gain->grad()[0] += acc;
      }
      if (bias->requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) acc += go[i];
        bias->grad()[0] += acc;
      }
    });
  }
  return out;
}

TensorPtr reshape(Graph& g, const TensorPtr& a, Shape s) {
  if (s.elems() != a->size()) {
    throw ShapeError("reshape: element count mismatch " + a->shape().str() +
                     " -> " + s.str());
  }
  bool rg = needs_grad(a);
  auto out = g.make_output(s, rg);
  auto o = out->data();
  auto pa = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[i];
  if (rg) {
    g.record(out, [a, out] {
      auto go = out->grad();
      auto ga = a->grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

TensorPtr slice_channel(Graph& g, const TensorPtr& a, int n, int c) {
  const Shape& s = a->shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c) {
    throw ShapeError("slice_channel: index (" + std::to_string(n) + "," +
                     std::to_string(c) + ") out of range for " + s.str());
  }
  bool rg = needs_grad(a);
  auto out = g.make_output(Shape{1, 1, s.h, s.w}, rg);
  auto o = out->data();
  auto pa = a->data();
  const std::int64_t base = a->index(n, c, 0, 0);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = pa[base + std::int64_t(i)];
  if (rg) {
    g.record(out, [a, out, base] {
      auto go = out->grad();
      auto ga = a->grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[base + std::int64_t(i)] += go[i];
      }
    });
  }
  return out;
}

}  // namespace scd
