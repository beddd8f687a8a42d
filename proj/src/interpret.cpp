#include "kantrust/interpret.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "kantrust/errors.hpp"

namespace kantrust::interpret {

namespace {

constexpr int kMaxSpan = 11;

void require_data(std::span<const FeatureVector> data, std::string_view what) {
  if (data.empty()) throw ValidationError(std::string(what) + ": empty dataset");
}

// sum_j w_j * s_{j,k}(t) for normalized t.
double feature_contribution(const kan::KanModel& m, std::size_t k, double t) {
  std::array<double, kMaxSpan> vals{};
  const int first = spline::basis_nonzero(m.knots(), t, vals);
  const int span = m.degree() + 1;
  double acc = 0.0;
  for (int j = 0; j < m.hidden(); ++j) {
    const double* c = m.coeffs().data() + m.coeff_offset(j, k) + first;
    double s = 0.0;
    for (int r = 0; r < span; ++r) s += c[r] * vals[static_cast<std::size_t>(r)];
    acc += m.out_weights()[static_cast<std::size_t>(j)] * s;
  }
  return acc;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> out(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t r = i; r <= j; ++r) out[idx[r]] = avg;
    i = j + 1;
  }
  return out;
}

double minmax_normalized(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.5; }

}  // namespace

PdpCurve partial_dependence(const kan::KanModel& m, std::span<const FeatureVector> data, std::size_t feature_index,
                            int points) {
  require_data(data, "partial_dependence");
  if (points < 2) throw ValidationError("partial_dependence: need at least 2 grid points");
  if (feature_index >= kNumFeatures) throw ValidationError("partial_dependence: feature index out of range");
  const std::size_t k = feature_index;
  const Normalizer& norm = m.normalizer();

  double lo = data.front()[k];
  double hi = lo;
  for (const auto& fv : data) {
    lo = std::min(lo, fv[k]);
    hi = std::max(hi, fv[k]);
  }

  // The model is additive across features, so overriding feature k shifts
  // every prediction by contribution_k(new) - contribution_k(old).
  const std::vector<double> preds = kan::predict(m, data);
  double base = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    base += preds[n] - feature_contribution(m, k, norm.normalize(k, data[n][k]));
  }
  base /= static_cast<double>(data.size());

  PdpCurve curve;
  curve.feature_index = k;
  if (!(hi > lo)) {
    curve.grid = {lo};
    curve.values = {base + feature_contribution(m, k, norm.normalize(k, lo))};
    curve.delta = 0.0;
    return curve;
  }
  const auto g_count = static_cast<std::size_t>(points);
  curve.grid.resize(g_count);
  curve.values.resize(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    const double v = g + 1 == g_count ? hi : lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(g_count - 1);
    curve.grid[g] = v;
    curve.values[g] = base + feature_contribution(m, k, norm.normalize(k, v));
  }
  curve.delta = curve.values.back() - curve.values.front();
  return curve;
}

PerFeature spline_activation_stats(const kan::KanModel& m, std::span<const FeatureVector> data) {
  require_data(data, "spline_activation_stats");
  PerFeature out{};
  std::array<double, kMaxSpan> vals{};
  const int span = m.degree() + 1;
  for (const auto& fv : data) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const int first = spline::basis_nonzero(m.knots(), m.normalizer().normalize(k, fv[k]), vals);
      for (int j = 0; j < m.hidden(); ++j) {
        const double* c = m.coeffs().data() + m.coeff_offset(j, k) + first;
        double s = 0.0;
        for (int r = 0; r < span; ++r) s += c[r] * vals[static_cast<std::size_t>(r)];
        out[k] += std::abs(s);
      }
    }
  }
  const double denom = static_cast<double>(data.size()) * static_cast<double>(m.hidden());
  for (double& v : out) v /= denom;
  return out;
}

PerFeature saliency(const kan::KanModel& m, std::span<const FeatureVector> data) {
  require_data(data, "saliency");
  const Normalizer& norm = m.normalizer();
  PerFeature out{};
  std::array<double, kMaxSpan> vals{};
  const int span = m.degree() + 1;
  if (m.degree() < 1) return out;  // piecewise-constant edges: zero almost everywhere
  for (const auto& fv : data) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      // Clamped inputs outside the fitted range have zero derivative.
      if (norm.degenerate(k) || fv[k] < norm.min()[k] || fv[k] > norm.max()[k]) continue;
      const int first = spline::basis_derivative_nonzero(m.knots(), norm.normalize(k, fv[k]), vals);
      double grad = 0.0;
      for (int j = 0; j < m.hidden(); ++j) {
        const double* c = m.coeffs().data() + m.coeff_offset(j, k) + first;
        double s = 0.0;
        for (int r = 0; r < span; ++r) s += c[r] * vals[static_cast<std::size_t>(r)];
        grad += m.out_weights()[static_cast<std::size_t>(j)] * s;
      }
      out[k] += std::abs(grad * norm.scale_factor(k));
    }
  }
  for (double& v : out) v /= static_cast<double>(data.size());
  return out;
}

PerFeature EdgeImportanceMatrix::column_sums() const {
  PerFeature out{};
  for (int j = 0; j < hidden_; ++j) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) out[k] += at(j, k);
  }
  return out;
}

EdgeImportanceMatrix edge_importance(const kan::KanModel& m, bool scale_by_output_weight) {
  EdgeImportanceMatrix em(m.hidden());
  for (int j = 0; j < m.hidden(); ++j) {
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      double sq = 0.0;
      for (double c : m.edge_coeffs(j, k)) sq += c * c;
      double norm = std::sqrt(sq);
      if (scale_by_output_weight) norm *= std::abs(m.out_weights()[static_cast<std::size_t>(j)]);
      em.at(j, k) = norm;
    }
  }
  return em;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2 || b.size() != n) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::nullopt;
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

std::vector<NodeStat> node_stats(const kan::KanModel& m, std::span<const FeatureVector> data) {
  require_data(data, "node_stats");
  const std::size_t n = data.size();
  const auto hidden = static_cast<std::size_t>(m.hidden());

  // Column-major hidden activations and raw features.
  std::vector<std::vector<double>> h(hidden, std::vector<double>(n));
  std::array<std::vector<double>, kNumFeatures> x;
  for (auto& col : x) col.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fr = kan::forward(m, data[i]);
    for (std::size_t j = 0; j < hidden; ++j) h[j][i] = fr.hidden[j];
    for (std::size_t k = 0; k < kNumFeatures; ++k) x[k][i] = data[i][k];
  }

  std::vector<NodeStat> out(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    NodeStat& s = out[j];
    const auto& hj = h[j];
    double abs_sum = 0.0;
    double sum = 0.0;
    for (double v : hj) {
      abs_sum += std::abs(v);
      sum += v;
    }
    s.activation = abs_sum / static_cast<double>(n);
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (double v : hj) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    s.importance = std::abs(m.out_weights()[j]) * std::sqrt(var);

    if (n < 3) continue;
    double best = -1.0;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const auto r = pearson(hj, x[k]);
      if (r && std::abs(*r) > best) {
        best = std::abs(*r);
        s.top_feature = k;
        s.correlation = *r;
        s.correlation_defined = true;
      }
    }
  }
  return out;
}

InfluenceTable influence_from_metrics(const std::array<FeatureMetrics, kNumFeatures>& metrics) {
  using Getter = double FeatureMetrics::*;
  constexpr std::array<Getter, 4> columns = {&FeatureMetrics::spline_activation, &FeatureMetrics::saliency,
                                             &FeatureMetrics::pdp_delta, &FeatureMetrics::edge_importance};
  InfluenceTable table{};
  for (std::size_t k = 0; k < kNumFeatures; ++k) table[k].raw = metrics[k];
  for (Getter col : columns) {
    double lo = metrics[0].*col;
    double hi = lo;
    for (const auto& fm : metrics) {
      lo = std::min(lo, fm.*col);
      hi = std::max(hi, fm.*col);
    }
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      table[k].influence += minmax_normalized(metrics[k].*col, lo, hi);
    }
  }
  for (auto& row : table) row.influence /= static_cast<double>(columns.size());
  return table;
}

InfluenceTable influence_table(const FeatureStats& fs, const EdgeImportanceMatrix& em) {
  const PerFeature edge_totals = em.column_sums();
  std::array<FeatureMetrics, kNumFeatures> metrics{};
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    metrics[k] = {fs.spline_activation[k], fs.saliency[k], fs.pdp_delta[k], edge_totals[k]};
  }
  return influence_from_metrics(metrics);
}

RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ValidationError("regression_metrics: size mismatch");
  RegressionMetrics out;
  out.n = targets.size();
  if (out.n == 0) return out;
  const double nn = static_cast<double>(out.n);
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / nn;
  double abs_sum = 0.0;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < out.n; ++i) {
    const double e = predictions[i] - targets[i];
    abs_sum += std::abs(e);
    ss_res += e * e;
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  out.mae = abs_sum / nn;
  out.rmse = std::sqrt(ss_res / nn);
  if (out.n >= 2 && ss_tot > 0.0) out.r2 = 1.0 - ss_res / ss_tot;
  return out;
}

std::vector<double> quantile_edges(std::span<const double> values, int n_bins) {
  if (values.empty()) throw ValidationError("quantile_edges: empty input");
  if (n_bins < 1) throw ValidationError("quantile_edges: n_bins must be >= 1");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const auto bins = static_cast<std::size_t>(n_bins);
  std::vector<double> edges(bins + 1);
  edges.front() = sorted.front();
  edges.back() = sorted.back();
  for (std::size_t i = 1; i < bins; ++i) {
    const std::size_t rank = std::max<std::size_t>(1, (i * n + bins - 1) / bins);  // ceil(i*n/bins)
    edges[i] = sorted[rank - 1];
  }
  return edges;
}

std::size_t bin_of(std::span<const double> edges, double v) {
  if (edges.size() < 2) return 0;
  const auto lower = edges.first(edges.size() - 1);
  const auto it = std::upper_bound(lower.begin(), lower.end(), v);
  return it == lower.begin() ? 0 : static_cast<std::size_t>(it - lower.begin()) - 1;
}

FidelityReport fidelity_from_predictions(std::span<const FeatureVector> data, std::span<const double> predictions,
                                         std::span<const double> targets, int n_bins) {
  if (data.size() != targets.size() || predictions.size() != targets.size()) {
    throw ValidationError("fidelity: data, predictions and targets must have equal length");
  }
  if (n_bins < 1 || data.size() < static_cast<std::size_t>(n_bins)) {
    throw ValidationError("fidelity: need at least n_bins samples");
  }
  FidelityReport report;
  report.overall = regression_metrics(predictions, targets);
  const auto bins = static_cast<std::size_t>(n_bins);
  std::vector<double> column(data.size());
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    for (std::size_t i = 0; i < data.size(); ++i) column[i] = data[i][k];
    report.edges[k] = quantile_edges(column, n_bins);
    std::vector<std::vector<double>> bin_pred(bins);
    std::vector<std::vector<double>> bin_target(bins);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t b = bin_of(report.edges[k], column[i]);
      bin_pred[b].push_back(predictions[i]);
      bin_target[b].push_back(targets[i]);
    }
    for (std::size_t b = 0; b < bins; ++b) {
      if (bin_target[b].empty()) continue;
      report.bins[k].push_back(
          {b, report.edges[k][b], report.edges[k][b + 1], regression_metrics(bin_pred[b], bin_target[b])});
    }
  }
  return report;
}

FidelityReport fidelity_bins(const kan::KanModel& m, std::span<const FeatureVector> data,
                             std::span<const double> targets, int n_bins) {
  const auto preds = kan::predict(m, data);
  return fidelity_from_predictions(data, preds, targets, n_bins);
}

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::kPositive:
      return "Positive";
    case Direction::kNegative:
      return "Negative";
    case Direction::kFlat:
      break;
  }
  return "Flat/Weak";
}

std::string_view strength_name(Strength s) {
  switch (s) {
    case Strength::kStrong:
      return "Strong";
    case Strength::kModerate:
      return "Moderate";
    case Strength::kWeak:
      break;
  }
  return "Weak";
}

Monotonicity label_monotonicity(double score) {
  Monotonicity out;
  out.score = score;
  const double a = std::abs(score);
  if (!(a >= 0.05)) return out;
  out.direction = score > 0.0 ? Direction::kPositive : Direction::kNegative;
  out.strength = a < 0.30 ? Strength::kWeak : (a < 0.70 ? Strength::kModerate : Strength::kStrong);
  return out;
}

Monotonicity monotonicity(const PdpCurve& curve) {
  if (curve.grid.size() != curve.values.size()) throw ValidationError("monotonicity: malformed curve");
  const bool constant = std::all_of(curve.values.begin(), curve.values.end(),
                                    [&](double v) { return v == curve.values.front(); });
  if (constant) return label_monotonicity(0.0);
  if (curve.grid.size() < 3) throw ValidationError("monotonicity: curve needs at least 3 points");
  return label_monotonicity(spearman(curve.grid, curve.values).value_or(0.0));
}

InterpretReport analyze(const kan::KanModel& m, std::span<const FeatureVector> data, std::span<const double> targets,
                        const AnalyzeOptions& opts) {
  require_data(data, "analyze");
  InterpretReport r;
  r.feature_stats.spline_activation = spline_activation_stats(m, data);
  r.feature_stats.saliency = saliency(m, data);
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    r.pdp[k] = partial_dependence(m, data, k, opts.pdp_points);
    r.feature_stats.pdp_delta[k] = r.pdp[k].delta;
    r.monotonicity[k] = monotonicity(r.pdp[k]);
  }
  r.nodes = node_stats(m, data);
  r.edges = edge_importance(m, opts.scale_edges_by_weight);
  r.influence = influence_table(r.feature_stats, r.edges);
  r.fidelity = fidelity_bins(m, data, targets, opts.fidelity_bins);
  return r;
}

}  // namespace kantrust::interpret
