#include "scd/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "scd/layers.hpp"
#include "scd/scd.hpp"
#include "scd/siamese.hpp"

namespace scd {

namespace {

TensorPtr random_tensor(Shape s, Rng& rng, bool requires_grad = true,
                        double lo = -1.0, double hi = 1.0) {
  auto t = Tensor::zeros(s, requires_grad);
  for (double& v : t->data()) v = rng.uniform(lo, hi);
  return t;
}

// Fixed positive coefficients keep per-element gradients away from 0 so
// the relative-error criterion stays conditioned.
TensorPtr probe_coeffs(Shape s, Rng& rng) {
  return random_tensor(s, rng, false, 0.5, 1.5);
}

double max_rel_grad_error(const std::function<TensorPtr(Graph&)>& build,
                          const std::vector<TensorPtr>& leaves, double h) {
  for (auto& leaf : leaves) leaf->zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    auto root = build(g);
    g.backward(root);
    for (auto& leaf : leaves) {
      auto gr = leaf->grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }
  auto eval = [&build]() {
    Graph g;
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
      const double rel = std::fabs(analytic[li][i] - fd) / (std::fabs(fd) + 1e-8);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

using CaseFn = std::function<double(std::uint64_t seed, double h)>;

double check_elementwise(const char* which, std::uint64_t seed, double h) {
  Rng rng(seed);
  auto a = random_tensor(Shape{1, 2, 3, 4}, rng);
  auto b = random_tensor(Shape{1, 2, 3, 4}, rng);
  const std::string op = which;
  if (op == "div" || op == "sqrt") {
    for (double& v : a->data()) v = rng.uniform(0.5, 2.0);
    for (double& v : b->data()) v = rng.uniform(0.5, 2.0);
  }
  if (op == "abs" || op == "relu") {
    // keep clear of the kink at 0
    for (double& v : a->data()) {
      if (std::fabs(v) < 1e-3) v = v < 0 ? -0.1 : 0.1;
    }
  }
  auto coeffs = probe_coeffs(a->shape(), rng);
  auto build = [&](Graph& g) -> TensorPtr {
    TensorPtr out;
    if (op == "add") out = add(g, a, b);
    else if (op == "sub") out = sub(g, a, b);
    else if (op == "mul") out = mul(g, a, b);
    else if (op == "div") out = scd::div(g, a, b);
    else if (op == "scale") out = scale(g, a, -1.75);
    else if (op == "add_const") out = add_const(g, a, 2.5);
    else if (op == "sqrt") out = scd::sqrt(g, a);
    else if (op == "abs") out = scd::abs(g, a);
    else if (op == "relu") out = relu(g, a);
    else if (op == "add_n") out = add_n(g, {a, b, a});
    else if (op == "reshape") out = reshape(g, a, Shape{1, 1, 6, 4});
    else out = a;
    if (out->shape() == coeffs->shape()) {
      return sum_all(g, mul(g, out, coeffs));
    }
    return sum_all(g, out);
  };
  std::vector<TensorPtr> leaves{a};
  if (op == "add" || op == "sub" || op == "mul" || op == "div" || op == "add_n") {
    leaves.push_back(b);
  }
  return max_rel_grad_error(build, leaves, h);
}

double check_sum_all(std::uint64_t seed, double h) {
  Rng rng(seed);
  auto a = random_tensor(Shape{2, 2, 3, 3}, rng);
  auto build = [&](Graph& g) { return scale(g, sum_all(g, a), 1.25); };
  return max_rel_grad_error(build, {a}, h);
}

double check_slice_channel(std::uint64_t seed, double h) {
  Rng rng(seed);
  auto a = random_tensor(Shape{2, 3, 3, 3}, rng);
  auto coeffs = probe_coeffs(Shape{1, 1, 3, 3}, rng);
  auto build = [&](Graph& g) {
    auto s0 = slice_channel(g, a, 0, 1);
    auto s1 = slice_channel(g, a, 1, 2);
    return sum_all(g, mul(g, add(g, s0, s1), coeffs));
  };
  return max_rel_grad_error(build, {a}, h);
}

double check_conv(std::uint64_t seed, double h) {
  Rng rng(seed);
  ConvLayer conv(2, 3, 3, 2);
  conv.init_params(rng);
  for (double& v : conv.bias()->data()) v = rng.uniform(-0.2, 0.2);
  auto input = random_tensor(Shape{2, 2, 7, 7}, rng);
  auto coeffs = probe_coeffs(Shape{2, 3, 3, 3}, rng);
  auto build = [&](Graph& g) {
    return sum_all(g, mul(g, conv.forward(g, input), coeffs));
  };
  return max_rel_grad_error(build, {input, conv.weights(), conv.bias()}, h);
}

double check_maxpool(std::uint64_t seed, double h) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, 91, attempt));
    auto input = random_tensor(Shape{1, 2, 6, 6}, rng);
    // non-degenerate: every window's max separated by > 1e-3
    bool ok = true;
    for (int c = 0; c < 2 && ok; ++c) {
      for (int oy = 0; oy < 2 && ok; ++oy) {
        for (int ox = 0; ox < 2 && ok; ++ox) {
          double best = -1e300, second = -1e300;
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const double v = input->at(0, c, oy * 2 + ky, ox * 2 + kx);
              if (v > best) {
                second = best;
                best = v;
              } else if (v > second) {
                second = v;
              }
            }
          }
          if (best - second < 1e-3) ok = false;
        }
      }
    }
    if (!ok) continue;
    Rng crng(derive_seed(seed, 92));
    auto coeffs = probe_coeffs(Shape{1, 2, 2, 2}, crng);
    auto build = [&](Graph& g) {
      return sum_all(g, mul(g, maxpool(g, input, 3, 2), coeffs));
    };
    return max_rel_grad_error(build, {input}, h);
  }
}

double check_batchnorm(std::uint64_t seed, double h) {
  Rng rng(seed);
  BatchNormLayer bn(2);
  for (double& v : bn.gamma()->data()) v = rng.uniform(0.5, 1.5);
  for (double& v : bn.beta()->data()) v = rng.uniform(-0.5, 0.5);
  auto input = random_tensor(Shape{2, 2, 4, 4}, rng);
  auto coeffs = probe_coeffs(input->shape(), rng);
  auto build = [&](Graph& g) {
    return sum_all(g, mul(g, bn.forward(g, input, true), coeffs));
  };
  return max_rel_grad_error(build, {input, bn.gamma(), bn.beta()}, h);
}

double check_cross_correlate(std::uint64_t seed, double h) {
  Rng rng(seed);
  auto exemplar = random_tensor(Shape{2, 2, 3, 3}, rng);
  auto search = random_tensor(Shape{2, 2, 6, 6}, rng);
  auto coeffs = probe_coeffs(Shape{2, 1, 4, 4}, rng);
  auto build = [&](Graph& g) {
    return sum_all(g, mul(g, cross_correlate(g, exemplar, search), coeffs));
  };
  return max_rel_grad_error(build, {exemplar, search}, h);
}

double check_ncc(std::uint64_t seed, double h) {
  Rng rng(seed);
  auto a = random_tensor(Shape{1, 1, 5, 5}, rng);
  auto b = random_tensor(Shape{1, 1, 5, 5}, rng);
  auto build = [&](Graph& g) { return ncc(g, a, b, 1e-8); };
  return max_rel_grad_error(build, {a, b}, h);
}

double check_pair_margin_loss(std::uint64_t seed, double h) {
  const double eps = 0.3;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, 93, attempt));
    const double p = rng.uniform(-0.95, 0.95);
    // probe away from the kinks at |p| = eps and p = 0
    if (std::fabs(std::fabs(p) - eps) < 1e-3 || std::fabs(p) < 1e-3) continue;
    auto t = Tensor::scalar(p, true);
    auto build = [&](Graph& g) { return pair_margin_loss(g, t, eps); };
    return max_rel_grad_error(build, {t}, h);
  }
}

double check_layer_scd_loss(std::uint64_t seed, double h) {
  ScdConfig cfg;
  cfg.epsilon = 0.3;
  cfg.layers = {1};
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, 94, attempt));
    auto features = random_tensor(Shape{1, 4, 5, 5}, rng);
    // reject draws whose pair correlations sit on a kink
    bool ok = true;
    const std::int64_t plane = 25;
    for (int m = 0; m < 4 && ok; ++m) {
      for (int n = m + 1; n < 4 && ok; ++n) {
        const double* pm = features->data().data() + m * plane;
        const double* pn = features->data().data() + n * plane;
        double dot = 0.0, nm = 0.0, nn = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
          dot += pm[i] * pn[i];
          nm += pm[i] * pm[i];
          nn += pn[i] * pn[i];
        }
        const double p = dot / (std::sqrt(nm * nn) + cfg.denom_stabilizer);
        if (std::fabs(std::fabs(p) - cfg.epsilon) < 1e-3 || std::fabs(p) < 1e-3) {
          ok = false;
        }
      }
    }
    if (!ok) continue;
    auto build = [&](Graph& g) {
      Rng pair_rng(seed);
      return layer_scd_loss(g, features, cfg, pair_rng);
    };
    return max_rel_grad_error(build, {features}, h);
  }
}

double check_task_loss(std::uint64_t seed, double h) {
  Rng rng(seed);
  ScoreMap sm;
  sm.score = random_tensor(Shape{2, 1, 5, 5}, rng);
  for (int b = 0; b < 2; ++b) {
    auto grid = make_labels(5, 5, 1 + b, 2, 1.0);
    sm.labels.insert(sm.labels.end(), grid.labels.begin(), grid.labels.end());
    sm.weights.insert(sm.weights.end(), grid.weights.begin(), grid.weights.end());
  }
  auto build = [&](Graph& g) { return task_loss(g, sm); };
  return max_rel_grad_error(build, {sm.score}, h);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(int seeds_per_op, double h,
                                                 double tolerance) {
  std::vector<std::pair<std::string, CaseFn>> cases;
  for (const char* op : {"add", "sub", "mul", "div", "scale", "add_const",
                         "sqrt", "abs", "relu", "add_n", "reshape"}) {
    cases.emplace_back(op, [op](std::uint64_t seed, double hh) {
      return check_elementwise(op, seed, hh);
    });
  }
  cases.emplace_back("sum_all", check_sum_all);
  cases.emplace_back("slice_channel", check_slice_channel);
  cases.emplace_back("conv", check_conv);
  cases.emplace_back("maxpool", check_maxpool);
  cases.emplace_back("batchnorm", check_batchnorm);
  cases.emplace_back("cross_correlate", check_cross_correlate);
  cases.emplace_back("ncc", check_ncc);
  cases.emplace_back("pair_margin_loss", check_pair_margin_loss);
  cases.emplace_back("layer_scd_loss", check_layer_scd_loss);
  cases.emplace_back("task_loss", check_task_loss);

  std::vector<GradCheckResult> results;
  for (const auto& [name, fn] : cases) {
    GradCheckResult r;
    r.op = name;
    r.tolerance = tolerance;
    for (int s = 1; s <= seeds_per_op; ++s) {
      r.worst_rel_err =
          std::max(r.worst_rel_err, fn(derive_seed(2026, 7, std::uint64_t(s)), h));
    }
    r.passed = r.worst_rel_err < tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

}  // namespace scd
