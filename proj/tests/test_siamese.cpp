#include <doctest.h>

#include <cmath>

#include "scd/siamese.hpp"
#include "support/grad_check.hpp"

using namespace scd;
using testsupport::max_rel_grad_error;

namespace {

TensorPtr random_tensor(Shape s, Rng& rng, bool requires_grad = true) {
  auto t = Tensor::zeros(s, requires_grad);
  for (double& v : t->data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("embedding on the 127/255 preset reaches 17x17x32 and 49x49x32") {
  SiameseModel model(EmbeddingConfig::table1());
  Rng rng(1);
  model.init_params(rng);
  Graph g;
  auto exemplar = model.embed(g, Tensor::zeros(Shape{1, 3, 127, 127}), false);
  CHECK(exemplar.features->shape() == Shape{1, 32, 17, 17});
  auto search = model.embed(g, Tensor::zeros(Shape{1, 3, 255, 255}), false);
  CHECK(search.features->shape() == Shape{1, 32, 49, 49});
  CHECK(model.total_stride() == 4);
}

TEST_CASE("desk embedding shapes agree with infer_shapes") {
  auto cfg = EmbeddingConfig::desk();
  SiameseModel model(cfg);
  Rng rng(2);
  model.init_params(rng);
  auto expected = infer_shapes(cfg, 32, 32);
  Graph g;
  auto out = model.embed(g, Tensor::zeros(Shape{2, 3, 32, 32}), false);
  CHECK(out.features->shape().h == expected.back().h);
  CHECK(out.features->shape().w == expected.back().w);
  CHECK(out.features->shape().c == expected.back().c);
}

TEST_CASE("embed exposes pre-batchnorm conv outputs at the taps") {
  auto cfg = EmbeddingConfig::desk();
  SiameseModel model(cfg);
  Rng rng(3);
  model.init_params(rng);
  Graph g;
  auto input = random_tensor(Shape{1, 3, 32, 32}, rng, false);
  auto out = model.embed(g, input, true, {2, 3});
  REQUIRE(out.taps.count(2) == 1);
  REQUIRE(out.taps.count(3) == 1);
  CHECK(out.taps.at(2)->shape().c == 16);
  // conv3 has batch norm after it; the tap must differ from the final
  // normalized features yet share the conv output values
  CHECK(out.taps.at(3).get() != out.features.get());

  CHECK_THROWS_AS(model.embed(g, input, true, {9}), std::invalid_argument);
}

TEST_CASE("weight sharing is exact between branches") {
  SiameseModel model(EmbeddingConfig::desk());
  Rng rng(5);
  model.init_params(rng);
  // both branches read the same parameter tensors: same objects
  auto params_a = model.parameters();
  auto params_b = model.parameters();
  REQUIRE(params_a.size() == params_b.size());
  for (std::size_t i = 0; i < params_a.size(); ++i) {
    CHECK(params_a[i].tensor.get() == params_b[i].tensor.get());
  }
}

TEST_CASE("cross_correlate geometry") {
  Rng rng(11);
  auto exemplar = random_tensor(Shape{1, 2, 17, 17}, rng, false);
  auto search = random_tensor(Shape{1, 2, 49, 49}, rng, false);
  Graph g;
  auto score = cross_correlate(g, exemplar, search);
  CHECK(score->shape() == Shape{1, 1, 33, 33});

  CHECK_THROWS_AS(cross_correlate(g, random_tensor(Shape{1, 3, 5, 5}, rng, false), search),
                  ShapeError);
  CHECK_THROWS_AS(cross_correlate(g, search, exemplar), ShapeError);
}

TEST_CASE("delta exemplar sweeps out the search map") {
  Rng rng(13);
  auto search = random_tensor(Shape{1, 1, 6, 6}, rng, false);
  auto delta = Tensor::zeros(Shape{1, 1, 3, 3});
  delta->at(0, 0, 0, 0) = 1.0;
  Graph g;
  auto score = cross_correlate(g, delta, search);
  CHECK(score->shape() == Shape{1, 1, 4, 4});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(score->at(0, 0, y, x) == search->at(0, 0, y, x));
    }
  }
}

TEST_CASE("cross_correlate gradients match finite differences") {
  Rng rng(17);
  auto exemplar = random_tensor(Shape{2, 2, 3, 3}, rng);
  auto search = random_tensor(Shape{2, 2, 6, 6}, rng);
  auto coeffs = Tensor::zeros(Shape{2, 1, 4, 4});
  for (double& v : coeffs->data()) v = rng.uniform(0.5, 1.5);
  auto build = [&](Graph& g) {
    return sum_all(g, mul(g, cross_correlate(g, exemplar, search), coeffs));
  };
  CHECK(max_rel_grad_error(build, {exemplar, search}) < 1e-4);
}

TEST_CASE("self-match peaks at the true offset") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto patch = random_tensor(Shape{1, 2, 5, 5}, rng, false);
    auto padded = Tensor::zeros(Shape{1, 2, 12, 12});
    const int oy = int(rng.uniform_int(8));
    const int ox = int(rng.uniform_int(8));
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
          padded->at(0, c, oy + y, ox + x) = patch->at(0, c, y, x);
        }
      }
    }
    Graph g;
    auto score = cross_correlate(g, patch, padded);
    double best = -1e300;
    int by = -1, bx = -1;
    for (int y = 0; y < score->shape().h; ++y) {
      for (int x = 0; x < score->shape().w; ++x) {
        if (score->at(0, 0, y, x) > best) {
          best = score->at(0, 0, y, x);
          by = y;
          bx = x;
        }
      }
    }
    CHECK(by == oy);
    CHECK(bx == ox);
  }
}

TEST_CASE("make_labels degenerate radii") {
  auto grid = make_labels(9, 9, 4, 4, 0.0);
  int positives = 0;
  for (double l : grid.labels) {
    if (l > 0) ++positives;
  }
  CHECK(positives == 1);
  CHECK(grid.labels[4 * 9 + 4] == 1.0);

  CHECK_THROWS_AS(make_labels(5, 5, 2, 2, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_labels(5, 5, 7, 2, 1.0), std::invalid_argument);
}

TEST_CASE("make_labels 33x33 radius-2 disk has 13 positives") {
  auto grid = make_labels(33, 33, 16, 16, 2.0);
  int positives = 0;
  for (double l : grid.labels) {
    if (l > 0) ++positives;
  }
  CHECK(positives == 13);

  // weights: balanced and normalized per sample
  double pos_mass = 0.0, neg_mass = 0.0, total = 0.0;
  for (std::size_t i = 0; i < grid.labels.size(); ++i) {
    CHECK(grid.weights[i] >= 0.0);
    total += grid.weights[i];
    (grid.labels[i] > 0 ? pos_mass : neg_mass) += grid.weights[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pos_mass == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(neg_mass == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("task_loss limits") {
  auto grid = make_labels(5, 5, 2, 2, 1.0);

  ScoreMap sm;
  sm.score = Tensor::zeros(Shape{1, 1, 5, 5}, true);
  sm.labels = grid.labels;
  sm.weights = grid.weights;
  {
    Graph g;
    CHECK(task_loss(g, sm)->item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // strongly correct scores drive the loss toward 0
  for (std::size_t i = 0; i < grid.labels.size(); ++i) {
    sm.score->data()[i] = 50.0 * grid.labels[i];
  }
  {
    Graph g;
    CHECK(task_loss(g, sm)->item() < 1e-10);
  }
}

TEST_CASE("task_loss rejects single-class grids") {
  ScoreMap sm;
  sm.score = Tensor::zeros(Shape{1, 1, 2, 2}, true);
  sm.labels = {1.0, 1.0, 1.0, 1.0};
  sm.weights = {0.25, 0.25, 0.25, 0.25};
  Graph g;
  CHECK_THROWS_AS(task_loss(g, sm), std::invalid_argument);
}

TEST_CASE("task_loss gradient vs finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto grid = make_labels(4, 5, 2, 2, 1.0);
    ScoreMap sm;
    sm.score = random_tensor(Shape{2, 1, 4, 5}, rng);
    auto grid2 = make_labels(4, 5, 1, 3, 1.0);
    sm.labels = grid.labels;
    sm.labels.insert(sm.labels.end(), grid2.labels.begin(), grid2.labels.end());
    sm.weights = grid.weights;
    sm.weights.insert(sm.weights.end(), grid2.weights.begin(), grid2.weights.end());
    auto build = [&](Graph& g) { return task_loss(g, sm); };
    CHECK(max_rel_grad_error(build, {sm.score}) < 1e-5);
  }
}

TEST_CASE("one gradient step on the matching loss decreases it") {
  Rng rng(23);
  SiameseModel model(EmbeddingConfig::desk());
  model.init_params(rng);
  auto exemplar = random_tensor(Shape{2, 3, 32, 32}, rng, false);
  auto search = random_tensor(Shape{2, 3, 64, 64}, rng, false);

  auto run = [&](bool update) {
    Graph g;
    auto ef = model.embed(g, exemplar, true);
    auto sf = model.embed(g, search, true);
    auto score = cross_correlate(g, ef.features, sf.features);
    ScoreMap sm;
    sm.score = score;
    const int sh = score->shape().h, sw = score->shape().w;
    for (int b = 0; b < 2; ++b) {
      auto grid = make_labels(sh, sw, sh / 2, sw / 2, 1.0);
      sm.labels.insert(sm.labels.end(), grid.labels.begin(), grid.labels.end());
      sm.weights.insert(sm.weights.end(), grid.weights.begin(), grid.weights.end());
    }
    auto loss = task_loss(g, sm);
    if (update) {
      for (auto& p : model.parameters()) p.tensor->zero_grad();
      g.backward(loss);
      for (auto& p : model.parameters()) {
        auto d = p.tensor->data();
        auto gr = p.tensor->grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= 0.05 * gr[i];
      }
    }
    return loss->item();
  };
  const double before = run(true);
  const double after = run(false);
  CHECK(after < before);
}
