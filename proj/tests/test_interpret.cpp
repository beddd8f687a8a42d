#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "kantrust/errors.hpp"
#include "kantrust/interpret.hpp"
#include "kantrust/random.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"

using namespace kantrust;
using namespace kantrust::interpret;
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

KanModel random_model(Rng& rng, std::span<const FeatureVector> data, int hidden = 16) {
  KanModel m(hidden, 5, 3);
  for (double& c : m.coeffs()) c = rng.uniform(-1.0, 1.0);
  for (double& w : m.out_weights()) w = rng.uniform(-1.0, 1.0);
  m.bias() = rng.uniform(-0.5, 0.5);
  m.normalizer() = fit_normalizer(data);
  return m;
}

// Unit 0 carries the identity spline of feature k (Greville coefficients).
KanModel passthrough_model(std::span<const FeatureVector> data, std::size_t k) {
  KanModel m;
  m.normalizer() = fit_normalizer(data);
  auto c = m.edge_coeffs(0, k);
  for (int i = 0; i < m.num_basis(); ++i) {
    double g = 0.0;
    for (int r = 1; r <= m.degree(); ++r) g += m.knots().knots()[static_cast<std::size_t>(i + r)];
    c[static_cast<std::size_t>(i)] = g / m.degree();
  }
  m.out_weights()[0] = 1.0;
  return m;
}

}  // namespace

TEST_CASE("partial_dependence") {
  Rng rng(1);
  const auto data = random_features(rng, 80);

  SUBCASE("zeroed feature column gives a flat curve") {
    auto m = random_model(rng, data);
    for (int j = 0; j < m.hidden(); ++j) {
      for (double& c : m.edge_coeffs(j, kFeatW)) c = 0.0;
    }
    const auto curve = partial_dependence(m, data, kFeatW, 16);
    CHECK(curve.delta == 0.0);
    for (double v : curve.values) CHECK(v == doctest::Approx(curve.values.front()).epsilon(1e-14));
  }

  SUBCASE("brute-force oracle, G = 64") {
    for (int trial = 0; trial < 3; ++trial) {
      const auto m = random_model(rng, data);
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const auto curve = partial_dependence(m, data, k, 64);
        REQUIRE(curve.grid.size() == 64);
        const auto naive = oracle::pdp(m, data, k, curve.grid);
        for (std::size_t g = 0; g < 64; ++g) REQUIRE(std::abs(curve.values[g] - naive[g]) < 1e-12);
        CHECK(curve.delta == curve.values.back() - curve.values.front());
        const auto [lo, hi] = std::minmax_element(curve.values.begin(), curve.values.end());
        CHECK(std::abs(curve.delta) <= *hi - *lo);
        for (std::size_t g = 1; g < 64; ++g) CHECK(curve.grid[g] > curve.grid[g - 1]);
      }
    }
  }

  SUBCASE("degenerate feature") {
    auto flat = data;
    for (auto& fv : flat) fv[kFeatCls] = 3.0;
    const auto m = random_model(rng, flat);
    const auto curve = partial_dependence(m, flat, kFeatCls, 64);
    CHECK(curve.grid.size() == 1);
    CHECK(curve.delta == 0.0);
    CHECK(monotonicity(curve).score == 0.0);
  }

  CHECK_THROWS_AS(partial_dependence(KanModel{}, std::vector<FeatureVector>{}, 0, 64), ValidationError);
  CHECK_THROWS_AS(partial_dependence(KanModel{}, data, 0, 1), ValidationError);
}

TEST_CASE("spline activation stats") {
  Rng rng(2);
  const auto data = random_features(rng, 50);
  KanModel zero;
  zero.normalizer() = fit_normalizer(data);
  for (double v : spline_activation_stats(zero, data)) CHECK(v == 0.0);

  KanModel one = zero;
  for (double& c : one.edge_coeffs(3, kFeatH)) c = -0.8;
  const auto stats = spline_activation_stats(one, data);
  CHECK(stats[kFeatH] == doctest::Approx(0.8 / 16).epsilon(1e-13));
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (k != kFeatH) CHECK(stats[k] == 0.0);
  }
}

TEST_CASE("saliency") {
  Rng rng(3);
  const auto wide = random_features(rng, 200);
  KanModel zero;
  zero.normalizer() = fit_normalizer(wide);
  for (double v : saliency(zero, wide)) CHECK(v == 0.0);

  SUBCASE("finite-difference estimate of the same mean") {
    auto m = random_model(rng, wide);
    // Evaluation points strictly inside the fitted range, away from knots.
    std::vector<FeatureVector> inner;
    for (const auto& fv : random_features(rng, 60)) {
      bool ok = true;
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const double t = m.normalizer().normalize(k, fv[k]);
        ok = ok && t > 0.01 && t < 0.99 && std::abs(t * 5 - std::round(t * 5)) > 1e-3;
      }
      if (ok) inner.push_back(fv);
    }
    REQUIRE(inner.size() > 10);
    const auto sal = saliency(m, inner);
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const double h = 1e-6 * (m.normalizer().max()[k] - m.normalizer().min()[k]);
      double acc = 0.0;
      for (auto fv : inner) {
        const double x = fv[k];
        fv[k] = x + h;
        const double up = static_cast<double>(oracle::predict(m, fv));
        fv[k] = x - h;
        const double down = static_cast<double>(oracle::predict(m, fv));
        acc += std::abs((up - down) / (2 * h));
      }
      const double fd = acc / static_cast<double>(inner.size());
      CHECK(std::abs(sal[k] - fd) <= 1e-4 * fd);
    }
  }

  SUBCASE("passthrough on conf concentrates saliency") {
    const auto m = passthrough_model(wide, kFeatConf);
    const auto sal = saliency(m, wide);
    const double range = m.normalizer().max()[kFeatConf] - m.normalizer().min()[kFeatConf];
    CHECK(sal[kFeatConf] == doctest::Approx(1.0 / range).epsilon(1e-10));
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      if (k != kFeatConf) CHECK(sal[k] == 0.0);
    }
  }
}

TEST_CASE("edge importance") {
  KanModel m;
  auto e = m.edge_coeffs(2, kFeatY);
  e[0] = 3.0;
  e[1] = 4.0;
  const auto em = edge_importance(m);
  CHECK(em.at(2, kFeatY) == 5.0);
  CHECK(em.at(0, kFeatY) == 0.0);
  CHECK(em.column_sums()[kFeatY] == 5.0);
  m.out_weights()[2] = -0.5;
  CHECK(edge_importance(m, true).at(2, kFeatY) == 2.5);
}

TEST_CASE("reference edge matrix column sums equal reference edge totals") {
  EdgeImportanceMatrix em(16);
  for (int j = 0; j < 16; ++j) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) em.at(j, k) = reference::kEdgeImportance[static_cast<std::size_t>(j)][k];
  }
  const auto sums = em.column_sums();
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    CHECK(std::abs(sums[k] - reference::kInfluence[k].edge_importance) < 5e-5);
  }
}

TEST_CASE("node stats") {
  Rng rng(4);
  const auto data = random_features(rng, 300);

  SUBCASE("zero output weight means zero importance") {
    auto m = random_model(rng, data);
    m.out_weights()[5] = 0.0;
    const auto nodes = node_stats(m, data);
    CHECK(nodes[5].importance == 0.0);
    CHECK(nodes[5].activation > 0.0);
  }

  SUBCASE("increasing spline on one feature") {
    KanModel m;
    m.normalizer() = fit_normalizer(data);
    auto c = m.edge_coeffs(7, kFeatH);
    for (int i = 0; i < m.num_basis(); ++i) c[static_cast<std::size_t>(i)] = 0.1 * i + 0.02 * i * i;
    m.out_weights()[7] = 2.0;
    const auto nodes = node_stats(m, data);
    CHECK(nodes[7].top_feature == kFeatH);
    CHECK(nodes[7].correlation_defined);
    std::vector<double> hj;
    std::vector<double> xh;
    for (const auto& fv : data) {
      hj.push_back(kan::forward(m, fv).hidden[7]);
      xh.push_back(fv[kFeatH]);
    }
    CHECK(nodes[7].correlation == doctest::Approx(*pearson(hj, xh)).epsilon(1e-12));
    CHECK(nodes[7].correlation > 0.9);
    // Units with no signal have undefined correlation.
    CHECK_FALSE(nodes[0].correlation_defined);
    CHECK(nodes[0].correlation == 0.0);
  }

  SUBCASE("correlation bounded, top feature maximizes |corr|") {
    const auto m = random_model(rng, data);
    const auto nodes = node_stats(m, data);
    for (int j = 0; j < m.hidden(); ++j) {
      const auto& n = nodes[static_cast<std::size_t>(j)];
      CHECK(std::abs(n.correlation) <= 1.0);
      std::vector<double> hj;
      for (const auto& fv : data) hj.push_back(kan::forward(m, fv).hidden[static_cast<std::size_t>(j)]);
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        std::vector<double> xk;
        for (const auto& fv : data) xk.push_back(fv[k]);
        CHECK(std::abs(pearson(hj, xk).value_or(0.0)) <= std::abs(n.correlation) + 1e-15);
      }
    }
  }
}

TEST_CASE("influence reproduces the reference table from its raw columns") {
  std::array<FeatureMetrics, kNumFeatures> raw{};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    const auto& row = reference::kInfluence[k];
    raw[k] = {row.spline_activation, row.saliency, row.pdp_delta, row.edge_importance};
  }
  const auto table = influence_from_metrics(raw);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    CHECK(std::abs(table[k].influence - reference::kInfluence[k].influence) < 1e-4);
  }
  CHECK(table[kFeatConf].influence == doctest::Approx(0.52001).epsilon(1e-3));
  CHECK(table[kFeatCls].influence == doctest::Approx(0.52559).epsilon(1e-3));
  CHECK(table[kFeatH].influence == doctest::Approx(0.00371).epsilon(3e-2));
}

TEST_CASE("influence properties") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<FeatureMetrics, kNumFeatures> raw{};
    for (auto& r : raw) r = {rng.uniform(0, 4), rng.uniform(0, 1e-3), rng.uniform(-1, 1), rng.uniform(0, 20)};
    const auto base = influence_from_metrics(raw);
    for (const auto& row : base) REQUIRE((row.influence >= 0.0 && row.influence <= 1.0));

    // Positive affine rescaling of one column leaves influence unchanged.
    auto scaled = raw;
    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.uniform(-5.0, 5.0);
    for (auto& r : scaled) r.edge_importance = a * r.edge_importance + b;
    const auto again = influence_from_metrics(scaled);
    for (std::size_t k = 0; k < kNumFeatures; ++k) REQUIRE(std::abs(again[k].influence - base[k].influence) < 1e-12);

    // A feature that is the maximum of every column scores 1.
    const std::size_t top = rng.below(kNumFeatures);
    raw[top] = {10, 1, 2, 100};
    REQUIRE(influence_from_metrics(raw)[top].influence == 1.0);
  }

  std::array<FeatureMetrics, kNumFeatures> flat{};
  for (const auto& row : influence_from_metrics(flat)) CHECK(row.influence == 0.5);
}

TEST_CASE("regression metrics") {
  const std::vector<double> y = {0.1, 0.4, 0.35, 0.8, 0.9};
  const auto perfect = regression_metrics(y, y);
  CHECK(perfect.r2 == 1.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 5.0;
  const auto mean_pred = regression_metrics(std::vector<double>(5, mean), y);
  CHECK(std::abs(*mean_pred.r2) < 1e-12);

  CHECK_FALSE(regression_metrics(std::vector<double>{1.0}, std::vector<double>{2.0}).r2.has_value());
  const auto constant = regression_metrics(std::vector<double>{0.1, 0.3}, std::vector<double>{0.2, 0.2});
  CHECK_FALSE(constant.r2.has_value());
  CHECK(constant.mae == doctest::Approx(0.1));
  CHECK(constant.rmse == doctest::Approx(0.1));
}

TEST_CASE("quantile binning") {
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(quantile_edges(v, 5) == std::vector<double>{1, 2, 4, 6, 8, 10});
  CHECK(bin_of(std::vector<double>{1, 2, 4, 6, 8, 10}, 10) == 4);
  CHECK(bin_of(std::vector<double>{1, 2, 4, 6, 8, 10}, 0.5) == 0);
  CHECK(bin_of(std::vector<double>{1, 2, 4, 6, 8, 10}, 4) == 2);

  // Low-cardinality column with a heavy head: duplicate edges merge.
  std::vector<double> cls;
  for (int i = 0; i < 30; ++i) cls.push_back(0);
  for (int i = 0; i < 30; ++i) cls.push_back(1 + i);
  for (int i = 0; i < 40; ++i) cls.push_back(40 + i);
  CHECK(quantile_edges(cls, 5) == std::vector<double>{0, 0, 10, 30, 59, 79});
  std::vector<FeatureVector> data(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) data[i].fill(0.5), data[i][kFeatCls] = cls[i];
  std::vector<double> targets(cls.size());
  Rng rng(6);
  for (auto& t : targets) t = rng.uniform();
  const auto report = fidelity_from_predictions(data, targets, targets, 5);
  CHECK(report.bins[kFeatCls].size() == 4);
  CHECK(report.bins[kFeatCls].front().bin_index == 1);
  // constant column: everything in one bin with R2 from its own targets
  CHECK(report.bins[kFeatX].size() == 1);
}

TEST_CASE("fidelity accounting") {
  Rng rng(7);
  const auto data = random_features(rng, 500);
  const auto m = random_model(rng, data);
  std::vector<double> targets;
  for (const auto& fv : data) targets.push_back(fv[kFeatConf]);
  const auto report = fidelity_bins(m, data, targets, 5);
  CHECK(report.overall.n == 500);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    std::size_t total = 0;
    for (const auto& b : report.bins[k]) {
      total += b.metrics.n;
      CHECK(b.metrics.rmse >= b.metrics.mae);
      CHECK(b.metrics.mae >= 0.0);
      if (b.metrics.r2) CHECK(*b.metrics.r2 <= 1.0);
      CHECK(b.lo <= b.hi);
    }
    CHECK(total == 500);
  }
  const auto perfect = fidelity_from_predictions(data, targets, targets, 5);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    for (const auto& b : perfect.bins[k]) {
      CHECK(b.metrics.r2.value_or(1.0) == 1.0);
      CHECK(b.metrics.mae == 0.0);
    }
  }
  CHECK_THROWS_AS(fidelity_bins(m, std::span(data).first(3), std::span(targets).first(3), 5), ValidationError);
}

TEST_CASE("monotonicity") {
  PdpCurve up;
  for (int g = 0; g < 10; ++g) {
    up.grid.push_back(g);
    up.values.push_back(std::exp(0.3 * g));
  }
  auto r = monotonicity(up);
  CHECK(r.score == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.direction == Direction::kPositive);
  CHECK(r.strength == Strength::kStrong);

  PdpCurve down = up;
  std::reverse(down.values.begin(), down.values.end());
  r = monotonicity(down);
  CHECK(r.score == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(r.direction == Direction::kNegative);
  CHECK(r.strength == Strength::kStrong);

  PdpCurve flat = up;
  std::fill(flat.values.begin(), flat.values.end(), 2.0);
  r = monotonicity(flat);
  CHECK(r.score == 0.0);
  CHECK(r.direction == Direction::kFlat);
  CHECK(r.strength == Strength::kWeak);

  for (const auto& row : reference::kMonotonicity) {
    const auto l = label_monotonicity(row.score);
    CHECK(direction_name(l.direction) == row.direction);
    CHECK(strength_name(l.strength) == row.strength);
  }
}

TEST_CASE("spearman handles ties with average ranks") {
  const std::vector<double> a = {1, 2, 2, 3};
  const std::vector<double> b = {10, 20, 20, 30};
  CHECK(*spearman(a, b) == doctest::Approx(1.0));
  CHECK_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
}
