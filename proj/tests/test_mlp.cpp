#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "gentact/mlp.hpp"
#include "gentact/rng.hpp"

using namespace gentact;

namespace {

// Central-difference gradient of the batch loss with respect to every
// parameter, compared against backprop. Relative error uses the usual
// symmetric normalization so dead-unit zeros compare cleanly.
double max_rel_grad_error(MlpModel& model, const std::vector<std::vector<double>>& xs,
                          const std::vector<Vec3>& ys, const DropoutMasks* masks) {
  MlpGradients grads(model);
  MlpBatchPass::loss_and_grad(model, xs, ys, masks, grads);
  const double h = 1e-6;
  double worst = 0.0;
  auto check = [&](std::vector<double>& param, const std::vector<double>& analytic) {
    for (size_t i = 0; i < param.size(); ++i) {
      double saved = param[i];
      param[i] = saved + h;
      double up = MlpBatchPass::loss(model, xs, ys, masks);
      param[i] = saved - h;
      double down = MlpBatchPass::loss(model, xs, ys, masks);
      param[i] = saved;
      double fd = (up - down) / (2.0 * h);
      double denom = std::max(std::abs(analytic[i]) + std::abs(fd), 1e-8);
      worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
  };
  for (size_t l = 0; l < model.layer_count(); ++l) {
    check(model.weights()[l], grads.weights[l]);
    check(model.biases()[l], grads.biases[l]);
  }
  return worst;
}

// Random batch for a given model.
void random_batch(const MlpModel& model, int batch, Rng& rng,
                  std::vector<std::vector<double>>& xs, std::vector<Vec3>& ys) {
  xs.assign(batch, std::vector<double>(model.input_dim()));
  ys.assign(batch, Vec3{});
  for (auto& x : xs)
    for (auto& v : x) v = rng.normal(0.0, 1.0);
  for (auto& y : ys) y = {rng.normal(0.0, 0.2), rng.normal(0.0, 0.2), rng.normal(0.0, 0.2)};
}

// Fresh biases keep preactivations away from the rectifier kink at exactly
// zero (a dropped-out hidden layer would otherwise leave the next layer's
// preactivation at its zero-initialized bias, where one-sided derivatives
// differ and finite differences are ill-defined).
void randomize_biases(MlpModel& model, Rng& rng) {
  for (auto& layer : model.biases())
    for (auto& b : layer) b = rng.normal(0.0, 0.1);
}

// Two-input, one-hidden-layer network with hand-picked parameters so the
// forward pass can be verified by hand.
MlpModel hand_model() {
  Rng rng(1);
  MlpModel m(2, {2}, rng);
  m.weights()[0] = {1.0, 0.0,   // hidden unit 0: x0
                    0.0, -1.0}; // hidden unit 1: -x1
  m.biases()[0] = {0.0, 0.5};
  m.weights()[1] = {1.0, 0.0,
                    0.0, 1.0,
                    1.0, 1.0};
  m.biases()[1] = {0.0, 0.0, 1.0};
  return m;
}

}  // namespace

TEST_CASE("network construction sizes and initialization") {
  Rng rng(42);
  MlpModel m(5, {4, 6}, rng);
  REQUIRE(m.sizes() == std::vector<int>{5, 4, 6, 3});
  REQUIRE(m.input_dim() == 5);
  REQUIRE(m.output_dim() == 3);
  REQUIRE(m.layer_count() == 3);
  REQUIRE(m.weights()[0].size() == 20);
  REQUIRE(m.weights()[1].size() == 24);
  REQUIRE(m.weights()[2].size() == 18);
  for (const auto& layer : m.biases())
    for (double b : layer) REQUIRE(b == 0.0);

  // Weights are randomized, not constant.
  double lo = m.weights()[0][0], hi = lo;
  for (double w : m.weights()[0]) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  REQUIRE(hi > lo);

  // Fan-in scaling: with a wide layer the sample stddev should sit near
  // sqrt(2 / fan_in).
  Rng rng2(7);
  MlpModel wide(100, {200}, rng2);
  const auto& w0 = wide.weights()[0];
  double mean = 0.0;
  for (double w : w0) mean += w;
  mean /= w0.size();
  double var = 0.0;
  for (double w : w0) var += (w - mean) * (w - mean);
  var /= w0.size();
  REQUIRE(std::sqrt(var) == Catch::Approx(std::sqrt(2.0 / 100.0)).epsilon(0.05));

  REQUIRE_THROWS_AS(MlpModel(0, {4}, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(MlpModel(5, {0}, rng), std::invalid_argument);
}

TEST_CASE("forward pass matches hand computation") {
  MlpModel m = hand_model();

  // x = (2, -1): hidden pre-activations (2, 1.5), both positive.
  Vec3 out = m.forward({2.0, -1.0});
  REQUIRE(out.x == Catch::Approx(2.0));
  REQUIRE(out.y == Catch::Approx(1.5));
  REQUIRE(out.z == Catch::Approx(4.5));

  // x = (-3, 2): hidden pre-activations (-3, -1.5), both rectified to zero.
  Vec3 dead = m.forward({-3.0, 2.0});
  REQUIRE(dead.x == 0.0);
  REQUIRE(dead.y == 0.0);
  REQUIRE(dead.z == 1.0);

  // Inference is deterministic: repeated calls agree bitwise.
  Vec3 again = m.forward({2.0, -1.0});
  REQUIRE(out.x == again.x);
  REQUIRE(out.y == again.y);
  REQUIRE(out.z == again.z);

  REQUIRE_THROWS_AS(m.forward({1.0}), DimensionMismatchError);
  REQUIRE_THROWS_AS(m.forward({1.0, 2.0, 3.0}), DimensionMismatchError);
}

TEST_CASE("batch loss is mean squared error over all output components") {
  MlpModel m = hand_model();
  Vec3 out = m.forward({2.0, -1.0});
  // Shift each target component one unit away: every squared residual is 1,
  // and the normalizer is batch * 3, so the loss is exactly 1.
  std::vector<std::vector<double>> xs = {{2.0, -1.0}};
  std::vector<Vec3> ys = {{out.x - 1.0, out.y + 1.0, out.z - 1.0}};
  REQUIRE(MlpBatchPass::loss(m, xs, ys, nullptr) == Catch::Approx(1.0));

  // Two-sample batch, second sample on target: loss halves.
  xs.push_back({2.0, -1.0});
  ys.push_back(out);
  REQUIRE(MlpBatchPass::loss(m, xs, ys, nullptr) == Catch::Approx(0.5));

  std::vector<Vec3> short_ys = {ys[0]};
  REQUIRE_THROWS_AS(MlpBatchPass::loss(m, xs, short_ys, nullptr),
                    std::invalid_argument);
}

TEST_CASE("backprop gradients match central finite differences") {
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    Rng rng(seed);
    MlpModel m(5, {4}, rng);
    randomize_biases(m, rng);
    std::vector<std::vector<double>> xs;
    std::vector<Vec3> ys;
    random_batch(m, 3, rng, xs, ys);
    REQUIRE(max_rel_grad_error(m, xs, ys, nullptr) < 1e-5);
  }
}

TEST_CASE("backprop gradients match finite differences under fixed dropout") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    Rng rng(seed);
    MlpModel m(5, {4, 4}, rng);
    randomize_biases(m, rng);
    std::vector<std::vector<double>> xs;
    std::vector<Vec3> ys;
    random_batch(m, 3, rng, xs, ys);
    DropoutMasks masks = make_dropout_masks(m, 3, 0.4, rng);
    REQUIRE(max_rel_grad_error(m, xs, ys, &masks) < 1e-5);
  }
}

TEST_CASE("dropout masks scale kept units and drop the configured fraction") {
  Rng rng(5);
  MlpModel m(3, {50}, rng);

  DropoutMasks off = make_dropout_masks(m, 4, 0.0, rng);
  REQUIRE(off.size() == 1);
  REQUIRE(off[0].size() == 200);
  for (double v : off[0]) REQUIRE(v == 1.0);

  DropoutMasks half = make_dropout_masks(m, 200, 0.5, rng);
  int zeros = 0;
  for (double v : half[0]) {
    REQUIRE((v == 0.0 || v == Catch::Approx(2.0)));
    if (v == 0.0) ++zeros;
  }
  double frac = static_cast<double>(zeros) / half[0].size();
  REQUIRE(frac == Catch::Approx(0.5).margin(0.02));

  REQUIRE_THROWS_AS(make_dropout_masks(m, 4, 1.0, rng), std::invalid_argument);
  REQUIRE_THROWS_AS(make_dropout_masks(m, 4, -0.1, rng), std::invalid_argument);
}

TEST_CASE("masked loss scales kept activations by the inverted rate") {
  // One hidden unit, identity-ish wiring: masking the unit with keep scale
  // 1/(1-p) must multiply its contribution exactly.
  Rng rng(3);
  MlpModel m(1, {1}, rng);
  m.weights()[0] = {1.0};
  m.biases()[0] = {0.0};
  m.weights()[1] = {1.0, 0.0, 0.0};
  m.biases()[1] = {0.0, 0.0, 0.0};

  std::vector<std::vector<double>> xs = {{2.0}};
  std::vector<Vec3> ys = {{0.0, 0.0, 0.0}};
  // Unmasked: output (2, 0, 0), loss 4/3.
  REQUIRE(MlpBatchPass::loss(m, xs, ys, nullptr) == Catch::Approx(4.0 / 3.0));
  // Kept with rate 0.5: activation doubles, output (4, 0, 0), loss 16/3.
  DropoutMasks keep = {{2.0}};
  REQUIRE(MlpBatchPass::loss(m, xs, ys, &keep) == Catch::Approx(16.0 / 3.0));
  // Dropped: output zero, loss 0.
  DropoutMasks drop = {{0.0}};
  REQUIRE(MlpBatchPass::loss(m, xs, ys, &drop) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("adam first step moves parameters by roughly the learning rate") {
  Rng rng(9);
  MlpModel m(1, {}, rng);  // single affine layer, three outputs
  double w0 = m.weights()[0][0];
  double w1 = m.weights()[0][1];

  AdamOptimizer opt(m, 0.01);
  MlpGradients grads(m);
  grads.weights[0][0] = 0.37;  // any positive gradient
  opt.step(m, grads);

  // Bias-corrected first step: update = lr * g / (|g| + eps) ~ lr * sign(g).
  REQUIRE(m.weights()[0][0] == Catch::Approx(w0 - 0.01).epsilon(1e-6));
  // Zero gradient leaves the parameter untouched.
  REQUIRE(m.weights()[0][1] == w1);

  REQUIRE_THROWS_AS(AdamOptimizer(m, 0.0), std::invalid_argument);
}

TEST_CASE("training fits a linear map and reduces the loss") {
  Rng data_rng(77);
  const double A[3][4] = {{0.5, -0.2, 0.1, 0.3},
                          {-0.1, 0.4, 0.2, -0.3},
                          {0.2, 0.1, -0.4, 0.1}};
  std::vector<std::vector<double>> features;
  std::vector<Vec3> targets;
  std::vector<int> subset;
  for (int i = 0; i < 256; ++i) {
    std::vector<double> x(4);
    for (auto& v : x) v = data_rng.normal(0.0, 1.0);
    Vec3 y{0, 0, 0};
    for (int c = 0; c < 4; ++c) {
      y.x += A[0][c] * x[c];
      y.y += A[1][c] * x[c];
      y.z += A[2][c] * x[c];
    }
    features.push_back(std::move(x));
    targets.push_back(y);
    subset.push_back(i);
  }

  Rng init_rng(101);
  MlpModel m(4, {16}, init_rng);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.dropout_rate = 0.05;
  Rng train_rng(2024);
  auto losses = train_mlp(m, features, targets, subset, cfg, train_rng);

  REQUIRE(losses.size() == 60);
  REQUIRE(losses.back() < 0.25 * losses.front());
  // The loss trend is downward even if individual epochs wobble.
  double first_quarter = 0.0, last_quarter = 0.0;
  for (int i = 0; i < 15; ++i) first_quarter += losses[i];
  for (int i = 45; i < 60; ++i) last_quarter += losses[i];
  REQUIRE(last_quarter < first_quarter);
  REQUIRE(m.finite());
}

TEST_CASE("training is deterministic for a fixed seed") {
  std::vector<std::vector<double>> features;
  std::vector<Vec3> targets;
  std::vector<int> subset;
  Rng data_rng(55);
  for (int i = 0; i < 64; ++i) {
    features.push_back({data_rng.normal(0, 1), data_rng.normal(0, 1)});
    targets.push_back({features.back()[0], -features.back()[1], 0.5});
    subset.push_back(i);
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;

  auto train_once = [&](std::uint64_t seed) {
    Rng init(seed);
    MlpModel m(2, {8}, init);
    Rng tr(seed + 1);
    train_mlp(m, features, targets, subset, cfg, tr);
    return m;
  };
  MlpModel a = train_once(123);
  MlpModel b = train_once(123);
  MlpModel c = train_once(124);

  bool identical = true, differs = false;
  for (size_t l = 0; l < a.layer_count(); ++l) {
    for (size_t i = 0; i < a.weights()[l].size(); ++i) {
      if (a.weights()[l][i] != b.weights()[l][i]) identical = false;
      if (a.weights()[l][i] != c.weights()[l][i]) differs = true;
    }
  }
  REQUIRE(identical);
  REQUIRE(differs);
}

TEST_CASE("training only touches the requested subset") {
  // Poison every sample outside the subset; training must never read them.
  std::vector<std::vector<double>> features;
  std::vector<Vec3> targets;
  double nan = std::numeric_limits<double>::quiet_NaN();
  Rng data_rng(31);
  for (int i = 0; i < 40; ++i) {
    if (i % 2 == 0) {
      features.push_back({data_rng.normal(0, 1), data_rng.normal(0, 1)});
      targets.push_back({0.1, 0.2, 0.3});
    } else {
      features.push_back({nan, nan});
      targets.push_back({nan, nan, nan});
    }
  }
  std::vector<int> evens;
  for (int i = 0; i < 40; i += 2) evens.push_back(i);

  Rng init(8);
  MlpModel m(2, {4}, init);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  Rng tr(9);
  REQUIRE_NOTHROW(train_mlp(m, features, targets, evens, cfg, tr));
  REQUIRE(m.finite());
}

TEST_CASE("training reports divergence as a dedicated error") {
  std::vector<std::vector<double>> features = {{1.0, 1.0}};
  std::vector<Vec3> targets = {{0.0, 0.0, 0.0}};
  std::vector<int> subset = {0};

  Rng init(4);
  MlpModel m(2, {4}, init);
  m.weights().back()[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  Rng tr(5);
  REQUIRE_THROWS_AS(train_mlp(m, features, targets, subset, cfg, tr),
                    NonFiniteLossError);

  Rng init2(4);
  MlpModel ok(2, {4}, init2);
  REQUIRE_THROWS_AS(
      train_mlp(ok, features, targets, std::vector<int>{}, cfg, tr),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      train_mlp(ok, features, targets, std::vector<int>{7}, cfg, tr),
      std::invalid_argument);
}
