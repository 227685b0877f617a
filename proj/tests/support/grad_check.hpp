#pragma once

// Central finite-difference oracle for backward rules. Independent of the
// library's own gradcheck module: tests carry their own copy so the oracle
// used to judge the implementation never comes from it.

#include <cmath>
#include <functional>
#include <vector>

#include "scd/graph.hpp"
#include "scd/tensor.hpp"

namespace testsupport {

// `build` runs a fresh forward pass over the current leaf values and
// returns the scalar root. Leaves must carry requires_grad.
inline double max_rel_grad_error(
    const std::function<scd::TensorPtr(scd::Graph&)>& build,
    const std::vector<scd::TensorPtr>& leaves, double h = 1e-5) {
  for (auto& leaf : leaves) leaf->zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    scd::Graph g;
    auto root = build(g);
    g.backward(root);
    for (auto& leaf : leaves) {
      auto gr = leaf->grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }
  auto eval = [&build]() {
    scd::Graph g;
    return build(g)->item();
  };
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto data = leaves[li]->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = eval();
      data[i] = saved - h;
      const double fm = eval();
      data[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double rel =
          std::fabs(analytic[li][i] - fd) / (std::fabs(fd) + 1e-8);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace testsupport
