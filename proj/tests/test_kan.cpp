#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "kantrust/errors.hpp"
#include "kantrust/interpret.hpp"
#include "kantrust/kan.hpp"
#include "kantrust/random.hpp"
#include "oracles.hpp"

using namespace kantrust;
using kan::KanModel;

namespace {

std::vector<FeatureVector> random_features(Rng& rng, std::size_t n) {
  std::vector<FeatureVector> out(n);
  for (auto& fv : out) {
    fv = {rng.uniform(), rng.uniform(), rng.uniform(0.01, 1), rng.uniform(0.01, 1), rng.uniform(0.25, 1),
          static_cast<double>(rng.below(80)), 0.0};
    fv[kFeatScale] = fv[kFeatW] * fv[kFeatH];
  }
  return out;
}

KanModel random_model(Rng& rng, int hidden, int grid, int degree, std::span<const FeatureVector> data) {
  KanModel m(hidden, grid, degree);
  for (double& c : m.coeffs()) c = rng.uniform(-1.0, 1.0);
  for (double& w : m.out_weights()) w = rng.uniform(-1.0, 1.0);
  m.bias() = rng.uniform(-0.5, 0.5);
  m.normalizer() = fit_normalizer(data);
  return m;
}

}  // namespace

TEST_CASE("forward: zero model") {
  KanModel m;
  const auto r = kan::forward(m, {0.1, 0.2, 0.3, 0.4, 0.5, 6.0, 0.12});
  CHECK(r.prediction == 0.0);
  CHECK(r.hidden.size() == 16);
  for (double h : r.hidden) CHECK(h == 0.0);
}

TEST_CASE("forward: one unit with constant edges predicts bias + 7c") {
  KanModel m;
  const double c = 0.3;
  m.out_weights()[4] = 1.0;
  m.bias() = 0.25;
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    for (double& v : m.edge_coeffs(4, k)) v = c;
  }
  Rng rng(1);
  for (const auto& fv : random_features(rng, 20)) {
    CHECK(kan::predict(m, fv) == doctest::Approx(0.25 + 7 * c).epsilon(1e-14));
  }
}

TEST_CASE("forward: non-finite input rejected") {
  KanModel m;
  FeatureVector fv{0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 0.25};
  fv[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kan::forward(m, fv), ValidationError);
}

TEST_CASE("property: forward equals the explicit double sum") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = random_features(rng, 30);
    const auto m = random_model(rng, 1 + static_cast<int>(rng.below(16)), 1 + static_cast<int>(rng.below(6)),
                                static_cast<int>(rng.below(4)), data);
    for (const auto& fv : random_features(rng, 20)) {
      const auto r = kan::forward(m, fv);
      REQUIRE(std::abs(r.prediction - static_cast<double>(oracle::predict(m, fv))) < 1e-12);
      double h_total = 0.0;
      for (int j = 0; j < m.hidden(); ++j) {
        double h = 0.0;
        for (std::size_t k = 0; k < kNumFeatures; ++k) {
          h += static_cast<double>(oracle::edge(m, j, k, oracle::normalize(m.normalizer(), k, fv[k])));
        }
        REQUIRE(std::abs(r.hidden[static_cast<std::size_t>(j)] - h) < 1e-12);
        h_total += m.out_weights()[static_cast<std::size_t>(j)] * h;
      }
      (void)h_total;
    }
  }
}

TEST_CASE("gradients") {
  Rng rng(3);
  const auto data = random_features(rng, 20);
  std::vector<double> targets(data.size());
  for (auto& t : targets) t = rng.uniform();

  SUBCASE("zero output weights zero every edge gradient") {
    auto m = random_model(rng, 4, 3, 3, data);
    std::fill(m.out_weights().begin(), m.out_weights().end(), 0.0);
    const auto g = kan::gradients(m, data, targets);
    for (double v : g.coeffs) CHECK(v == 0.0);
  }

  SUBCASE("perfect fit gives zero gradients") {
    const auto m = random_model(rng, 4, 3, 3, data);
    const auto preds = kan::predict(m, data);
    const auto g = kan::gradients(m, data, preds);
    CHECK(g.loss == 0.0);
    CHECK(g.bias == 0.0);
    for (double v : g.coeffs) CHECK(v == 0.0);
    for (double v : g.out_weights) CHECK(v == 0.0);
  }

  SUBCASE("finite differences, h = 1e-6") {
    auto m = random_model(rng, 3, 3, 3, data);
    const auto g = kan::gradients(m, data, targets);
    const double h = 1e-6;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const auto lp = oracle::mse(m, data, targets);
      param = saved - h;
      const auto lm = oracle::mse(m, data, targets);
      param = saved;
      const double fd = static_cast<double>((lp - lm) / (2 * h));
      const double scale = std::max(std::abs(fd), std::abs(analytic));
      if (scale < 1e-12) return;
      REQUIRE(std::abs(analytic - fd) / scale < 1e-5);
    };
    for (std::size_t i = 0; i < m.coeffs().size(); ++i) check(m.coeffs()[i], g.coeffs[i]);
    for (std::size_t i = 0; i < m.out_weights().size(); ++i) check(m.out_weights()[i], g.out_weights[i]);
    check(m.bias(), g.bias);
  }

  CHECK_THROWS_AS(kan::gradients(KanModel{}, std::vector<FeatureVector>{}, std::vector<double>{}), ValidationError);
}

TEST_CASE("train: constant target is absorbed") {
  Rng rng(4);
  const auto data = random_features(rng, 400);
  const std::vector<double> targets(data.size(), 0.7);
  kan::TrainConfig cfg;
  cfg.epochs = 200;
  const auto result = kan::train(data, targets, cfg);
  CHECK(result.history.val_mse.size() == 200);
  CHECK(result.history.val_mse.back() < 1e-6);
}

TEST_CASE("train: target = conf reaches R2 >= 0.99") {
  Rng rng(5);
  const auto data = random_features(rng, 1000);
  std::vector<double> targets;
  for (const auto& fv : data) targets.push_back(fv[kFeatConf]);

  // A hand-built passthrough model represents the target exactly: one unit
  // whose conf edge interpolates the identity (Greville abscissae as
  // coefficients), scaled back to raw units.
  KanModel pass;
  pass.normalizer() = fit_normalizer(data);
  const auto& kv = pass.knots();
  auto conf_edge = pass.edge_coeffs(0, kFeatConf);
  for (int i = 0; i < pass.num_basis(); ++i) {
    double g = 0.0;
    for (int r = 1; r <= pass.degree(); ++r) g += kv.knots()[static_cast<std::size_t>(i + r)];
    conf_edge[static_cast<std::size_t>(i)] = g / pass.degree();
  }
  pass.out_weights()[0] = pass.normalizer().max()[kFeatConf] - pass.normalizer().min()[kFeatConf];
  pass.bias() = pass.normalizer().min()[kFeatConf];
  const auto pass_metrics = interpret::regression_metrics(kan::predict(pass, data), targets);
  CHECK(pass_metrics.r2.value() > 1.0 - 1e-12);

  kan::TrainConfig cfg;
  const auto result = kan::train(data, targets, cfg);
  const auto metrics = interpret::regression_metrics(kan::predict(result.model, data), targets);
  CHECK(metrics.r2.value() >= 0.99);
  CHECK(result.history.val_mse.back() < result.history.val_mse.front());
}

TEST_CASE("train: input checks and divergence") {
  Rng rng(6);
  const auto data = random_features(rng, 50);
  std::vector<double> targets(data.size(), 0.5);
  kan::TrainConfig cfg;
  cfg.epochs = 3;
  CHECK_THROWS_AS(kan::train(std::span(data).first(9), std::span(targets).first(9), cfg), ValidationError);
  auto bad = targets;
  bad[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(kan::train(data, bad, cfg), ValidationError);

  auto wild = cfg;
  wild.learning_rate = 1e300;
  for (auto& t : targets) t = rng.uniform(-1e200, 1e200);
  try {
    kan::train(data, targets, wild);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("train: determinism and normalizer fitted on the training split") {
  Rng rng(7);
  const auto data = random_features(rng, 200);
  std::vector<double> targets;
  for (const auto& fv : data) targets.push_back(fv[kFeatConf]);
  kan::TrainConfig cfg;
  cfg.epochs = 5;
  const auto a = kan::train(data, targets, cfg);
  const auto b = kan::train(data, targets, cfg);
  CHECK(kan::save_model(a.model) == kan::save_model(b.model));

  cfg.seed = 43;
  const auto c = kan::train(data, targets, cfg);
  CHECK(kan::save_model(a.model) != kan::save_model(c.model));

  // The normalizer spans a subset of the data, so some sample lies outside it.
  const auto full = fit_normalizer(data);
  bool narrower = false;
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    CHECK(a.model.normalizer().min()[k] >= full.min()[k]);
    CHECK(a.model.normalizer().max()[k] <= full.max()[k]);
    narrower = narrower || a.model.normalizer().min()[k] > full.min()[k] ||
               a.model.normalizer().max()[k] < full.max()[k];
  }
  CHECK(narrower);
}

TEST_CASE("property: additivity across features") {
  Rng rng(8);
  const auto data = random_features(rng, 40);
  const auto m = random_model(rng, 16, 5, 3, data);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    auto zeroed = m;
    for (int j = 0; j < m.hidden(); ++j) {
      for (double& c : zeroed.edge_coeffs(j, k)) c = 0.0;
    }
    for (const auto& fv : data) {
      const double t = m.normalizer().normalize(k, fv[k]);
      double expected = 0.0;
      for (int j = 0; j < m.hidden(); ++j) expected += m.out_weights()[static_cast<std::size_t>(j)] * m.edge_value(j, k, t);
      REQUIRE(std::abs((kan::predict(m, fv) - kan::predict(zeroed, fv)) - expected) < 1e-12);
    }
  }
}

TEST_CASE("save/load") {
  Rng rng(9);
  const auto data = random_features(rng, 30);
  auto m = random_model(rng, 16, 5, 3, data);
  m.seed() = 1234;
  m.target() = "trust_label";
  m.calibration().val_rmse = 0.0123;
  m.calibration().conf_bin_edges = {0.25, 0.4, 0.6, 0.8, 0.9, 0.99};
  m.calibration().conf_bin_r2 = {0.5, std::nullopt, 0.9, 0.95, 0.6};
  const auto bytes = kan::save_model(m);
  CHECK(bytes.substr(0, 8) == "KANTRUST");

  const auto loaded = kan::load_model(bytes);
  CHECK(loaded == m);
  double max_diff = 0.0;
  for (const auto& fv : random_features(rng, 1000)) {
    max_diff = std::max(max_diff, std::abs(kan::predict(m, fv) - kan::predict(loaded, fv)));
  }
  CHECK(max_diff == 0.0);

  CHECK_THROWS_AS(kan::load_model(bytes.substr(0, bytes.size() / 2)), ValidationError);
  CHECK_THROWS_AS(kan::load_model(bytes.substr(0, bytes.size() - 1)), ValidationError);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(kan::load_model(wrong_magic), doctest::Contains("magic"), ValidationError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_WITH_AS(kan::load_model(flipped), doctest::Contains("checksum"), ValidationError);
  auto version = bytes;
  version[8] = 9;
  CHECK_THROWS_WITH_AS(kan::load_model(version), doctest::Contains("version"), ValidationError);
}
