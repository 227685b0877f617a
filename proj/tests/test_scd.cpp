#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "scd/scd.hpp"
#include "support/grad_check.hpp"

using namespace scd;
using testsupport::max_rel_grad_error;

namespace {

TensorPtr random_map(Shape s, Rng& rng, bool requires_grad = true) {
  auto t = Tensor::zeros(s, requires_grad);
  for (double& v : t->data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

double ncc_value(const TensorPtr& a, const TensorPtr& b, double delta) {
  Graph g;
  return ncc(g, a, b, delta)->item();
}

}  // namespace

TEST_CASE("ncc fixed values") {
  Rng rng(3);
  auto a = random_map(Shape{1, 1, 4, 4}, rng, false);
  CHECK(ncc_value(a, a, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  auto em = Tensor::from_data(Shape{1, 1, 1, 2}, {1.0, 0.0});
  auto en = Tensor::from_data(Shape{1, 1, 1, 2}, {0.0, 1.0});
  CHECK(ncc_value(em, en, 0.0) == 0.0);

  auto om = Tensor::from_data(Shape{1, 1, 1, 2}, {1.0, 2.0});
  auto on = Tensor::from_data(Shape{1, 1, 1, 2}, {2.0, 1.0});
  CHECK(std::fabs(ncc_value(om, on, 0.0) - 0.8) < 1e-12);

  Graph g;
  CHECK_THROWS_AS(ncc(g, om, Tensor::zeros(Shape{1, 1, 1, 3}), 0.0), ShapeError);
}

TEST_CASE("ncc gradient vs finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto a = random_map(Shape{1, 1, 5, 5}, rng);
    auto b = random_map(Shape{1, 1, 5, 5}, rng);
    auto build = [&](Graph& g) { return ncc(g, a, b, 1e-8); };
    CHECK(max_rel_grad_error(build, {a, b}) < 1e-5);
  }
}

TEST_CASE("ncc range, sign and scale invariance properties") {
  Rng rng(99);
  double max_abs = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    auto a = random_map(Shape{1, 1, 2, 3}, rng, false);
    auto b = random_map(Shape{1, 1, 2, 3}, rng, false);
    const double p = ncc_value(a, b, 0.0);
    max_abs = std::max(max_abs, std::fabs(p));
    CHECK(std::fabs(p) <= 1.0 + 1e-9);
  }
  CHECK(max_abs > 0.1);  // draws were not degenerate

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng r2(seed);
    auto a = random_map(Shape{1, 1, 3, 3}, r2, false);
    auto b = random_map(Shape{1, 1, 3, 3}, r2, false);
    auto neg = Tensor::zeros(a->shape());
    for (std::size_t i = 0; i < a->data().size(); ++i) {
      neg->data()[i] = -a->data()[i];
    }
    CHECK(ncc_value(a, a, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ncc_value(a, neg, 0.0) == doctest::Approx(-1.0).epsilon(1e-12));

    // symmetry
    CHECK(ncc_value(a, b, 0.0) == doctest::Approx(ncc_value(b, a, 0.0)).epsilon(1e-14));

    // scale invariance up to sign
    const double lam = r2.uniform(0.1, 4.0) * (r2.uniform() < 0.5 ? -1.0 : 1.0);
    const double mu = r2.uniform(0.1, 4.0) * (r2.uniform() < 0.5 ? -1.0 : 1.0);
    auto la = Tensor::zeros(a->shape());
    auto mb = Tensor::zeros(b->shape());
    for (std::size_t i = 0; i < a->data().size(); ++i) {
      la->data()[i] = lam * a->data()[i];
      mb->data()[i] = mu * b->data()[i];
    }
    const double sign = (lam * mu) > 0 ? 1.0 : -1.0;
    CHECK(std::fabs(ncc_value(la, mb, 0.0) - sign * ncc_value(a, b, 0.0)) < 1e-12);
  }
}

TEST_CASE("pair_margin_loss values and gradient") {
  auto eval = [](double p, double eps, double* grad_out = nullptr) {
    auto t = Tensor::scalar(p, true);
    Graph g;
    auto loss = pair_margin_loss(g, t, eps);
    if (grad_out) {
      t->zero_grad();
      g.backward(loss);
      *grad_out = t->grad()[0];
    }
    return loss->item();
  };

  double grad = 0.0;
  CHECK(eval(0.8, 0.3, &grad) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(grad == doctest::Approx(2.0 * (0.8 - 0.3)).epsilon(1e-12));
  CHECK(eval(-0.8, 0.3, &grad) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(grad == doctest::Approx(-2.0 * (0.8 - 0.3)).epsilon(1e-12));
  CHECK(eval(0.2, 0.3, &grad) == 0.0);
  CHECK(grad == 0.0);
  // |p| == eps sits exactly on the margin: zero loss, zero gradient
  CHECK(eval(0.3, 0.3, &grad) == 0.0);
  CHECK(grad == 0.0);
}

TEST_CASE("sample_pairs returns the full universe when it fits") {
  Rng rng(7);
  auto sample = sample_pairs(32, 1000, rng);
  CHECK(sample.pairs.size() == 496);
  std::set<std::pair<int, int>> seen(sample.pairs.begin(), sample.pairs.end());
  CHECK(seen.size() == 496);
  for (const auto& [m, n] : sample.pairs) {
    CHECK(m < n);
    CHECK(m >= 0);
    CHECK(n < 32);
  }

  auto forced = sample_pairs(2, 17, rng);
  REQUIRE(forced.pairs.size() == 1);
  CHECK(forced.pairs[0] == std::pair<int, int>{0, 1});

  CHECK_THROWS_AS(sample_pairs(1, 10, rng), std::invalid_argument);
}

TEST_CASE("sample_pairs uniformity over 10000 seeded draws") {
  // C=64 -> universe 2016, budget 1000
  std::map<std::pair<int, int>, int> counts;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    Rng rng(derive_seed(123, 55, std::uint64_t(d)));
    auto sample = sample_pairs(64, 1000, rng);
    CHECK(sample.pairs.size() == 1000);
    std::set<std::pair<int, int>> seen(sample.pairs.begin(), sample.pairs.end());
    CHECK(seen.size() == 1000);
    for (const auto& pr : sample.pairs) counts[pr]++;
  }
  const double expected = double(draws) * 1000.0 / 2016.0;
  CHECK(counts.size() == 2016);
  for (const auto& [pr, c] : counts) {
    CHECK(double(c) >= 0.25 * expected);
    CHECK(double(c) <= 4.0 * expected);
  }
}

TEST_CASE("sample_pairs is deterministic for a fixed seed") {
  Rng a(42);
  Rng b(42);
  auto sa = sample_pairs(20, 50, a);
  auto sb = sample_pairs(20, 50, b);
  CHECK(sa.pairs == sb.pairs);
}

TEST_CASE("layer_scd_loss on orthogonal channels is zero") {
  // 4 channels, 4 pixels, mutually orthogonal indicator maps
  auto features = Tensor::zeros(Shape{1, 4, 2, 2});
  for (int c = 0; c < 4; ++c) {
    features->at(0, c, c / 2, c % 2) = 1.0 + 0.5 * c;
  }
  ScdConfig cfg;
  cfg.epsilon = 0.3;
  cfg.layers = {1};
  cfg.denom_stabilizer = 0.0;
  Rng rng(1);
  Graph g;
  CHECK(layer_scd_loss(g, features, cfg, rng)->item() == 0.0);
}

TEST_CASE("layer_scd_loss with identical channels hits the margin fully") {
  auto features = Tensor::zeros(Shape{2, 3, 2, 2});
  Rng rng(8);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      const double v = rng.uniform(0.5, 1.5);
      for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 3; ++c) features->at(b, c, y, x) = v;
      }
    }
  }
  ScdConfig cfg;
  cfg.epsilon = 0.3;
  cfg.layers = {1};
  cfg.denom_stabilizer = 0.0;
  Graph g;
  Rng rng2(2);
  const double loss = layer_scd_loss(g, features, cfg, rng2)->item();
  CHECK(loss == doctest::Approx(0.49).epsilon(1e-12));
}

TEST_CASE("layer_scd_loss hand-built pair losses average to 29/300") {
  // three unit channels with pairwise cosines 0.8, 0.3, 0.5, built by
  // Cholesky so the margin losses are exactly {0.25, 0, 0.04}
  const double c01 = 0.8, c02 = 0.3, c12 = 0.5;
  double u1[3] = {1.0, 0.0, 0.0};
  double u2[3] = {c01, std::sqrt(1.0 - c01 * c01), 0.0};
  double u3[3];
  u3[0] = c02;
  u3[1] = (c12 - c01 * c02) / u2[1];
  u3[2] = std::sqrt(1.0 - u3[0] * u3[0] - u3[1] * u3[1]);

  auto features = Tensor::zeros(Shape{1, 3, 1, 3});
  for (int i = 0; i < 3; ++i) {
    features->at(0, 0, 0, i) = u1[i];
    features->at(0, 1, 0, i) = u2[i];
    features->at(0, 2, 0, i) = u3[i];
  }
  ScdConfig cfg;
  cfg.epsilon = 0.3;
  cfg.layers = {1};
  cfg.denom_stabilizer = 0.0;
  Graph g;
  Rng rng(4);
  const double loss = layer_scd_loss(g, features, cfg, rng)->item();
  CHECK(loss == doctest::Approx(29.0 / 300.0).epsilon(1e-12));
}

TEST_CASE("layer_scd_loss gradient vs finite differences on 1x4x5x5") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng data_rng(seed * 17);
    auto features = random_map(Shape{1, 4, 5, 5}, data_rng);
    ScdConfig cfg;
    cfg.epsilon = 0.3;
    cfg.layers = {1};
    auto build = [&](Graph& g) {
      Rng rng(seed);  // same pair draw for every evaluation
      return layer_scd_loss(g, features, cfg, rng);
    };
    CHECK(max_rel_grad_error(build, {features}) < 1e-4);
  }
}

TEST_CASE("layer_scd_loss requires at least two channels") {
  ScdConfig cfg;
  Rng rng(1);
  Graph g;
  CHECK_THROWS_AS(layer_scd_loss(g, Tensor::zeros(Shape{1, 1, 3, 3}), cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("layer_scd_loss is deterministic given the seed") {
  Rng data_rng(5);
  auto features = random_map(Shape{2, 8, 4, 4}, data_rng, false);
  ScdConfig cfg;
  cfg.pair_budget = 10;
  auto run = [&](std::uint64_t seed) {
    Graph g;
    Rng rng(seed);
    return layer_scd_loss(g, features, cfg, rng)->item();
  };
  CHECK(run(31) == run(31));
}

TEST_CASE("combined_loss arithmetic") {
  ScdConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = 2.0;
  cfg.layers = {3, 5};

  Graph g;
  auto task = Tensor::scalar(0.7, true);
  std::map<int, TensorPtr> per_layer{
      {3, Tensor::scalar(0.05, true)},
      {5, Tensor::scalar(0.15, true)},
  };
  auto combined = combined_loss(g, task, per_layer, cfg);
  CHECK(combined.values.combined == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(combined.values.task_loss == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(combined.values.scd_per_layer.at(3) == doctest::Approx(0.05));
  CHECK(combined.values.scd_per_layer.at(5) == doctest::Approx(0.15));

  ScdConfig beta0 = cfg;
  beta0.beta = 0.0;
  Graph g2;
  auto c2 = combined_loss(g2, Tensor::scalar(0.7, true), per_layer, beta0);
  CHECK(c2.values.combined == doctest::Approx(0.7).epsilon(1e-12));

  Graph g3;
  std::map<int, TensorPtr> zeros{
      {3, Tensor::scalar(0.0, true)},
      {5, Tensor::scalar(0.0, true)},
  };
  auto c3 = combined_loss(g3, Tensor::scalar(0.7, true), zeros, cfg);
  CHECK(c3.values.combined == doctest::Approx(0.7).epsilon(1e-12));

  Graph g4;
  std::map<int, TensorPtr> wrong{{3, Tensor::scalar(0.05, true)}};
  CHECK_THROWS_AS(combined_loss(g4, Tensor::scalar(0.7, true), wrong, cfg),
                  std::invalid_argument);
}

TEST_CASE("scd config validation") {
  ScdConfig bad;
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ScdConfig{};
  bad.pair_budget = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ScdConfig{};
  bad.layers.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ScdConfig{};
  bad.denom_stabilizer = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ScdConfig ok;
  CHECK_NOTHROW(ok.validate());
}
