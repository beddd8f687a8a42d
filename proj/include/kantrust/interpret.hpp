#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kantrust/interchange.hpp"
#include "kantrust/kan.hpp"

namespace kantrust::interpret {

inline constexpr int kDefaultPdpPoints = 64;
inline constexpr int kDefaultFidelityBins = 5;

using PerFeature = std::array<double, kNumFeatures>;

// Mean prediction while feature `feature_index` sweeps `grid` (raw units) and
// all other features keep their dataset values.
struct PdpCurve {
  std::size_t feature_index = 0;
  std::vector<double> grid;
  std::vector<double> values;
  double delta = 0.0;
};

// Throws ValidationError on empty data or points < 2. A feature that is
// constant in `data` yields a one-point curve with delta 0.
PdpCurve partial_dependence(const kan::KanModel& m, std::span<const FeatureVector> data, std::size_t feature_index,
                            int points = kDefaultPdpPoints);

// mean over samples and hidden units of |s_{j,k}(x_k)|.
PerFeature spline_activation_stats(const kan::KanModel& m, std::span<const FeatureVector> data);

// mean over samples of |d pred / d x_k|, x_k in raw units.
PerFeature saliency(const kan::KanModel& m, std::span<const FeatureVector> data);

struct FeatureStats {
  PerFeature spline_activation{};
  PerFeature saliency{};
  PerFeature pdp_delta{};
};

class EdgeImportanceMatrix {
 public:
  EdgeImportanceMatrix() = default;
  explicit EdgeImportanceMatrix(int hidden) : hidden_(hidden), values_(static_cast<std::size_t>(hidden) * kNumFeatures) {}

  int hidden() const { return hidden_; }
  double& at(int j, std::size_t k) { return values_[static_cast<std::size_t>(j) * kNumFeatures + k]; }
  double at(int j, std::size_t k) const { return values_[static_cast<std::size_t>(j) * kNumFeatures + k]; }
  PerFeature column_sums() const;

 private:
  int hidden_ = 0;
  std::vector<double> values_;
};

// L2 norm of each edge's coefficients, optionally multiplied by |w_j|.
EdgeImportanceMatrix edge_importance(const kan::KanModel& m, bool scale_by_output_weight = false);

struct NodeStat {
  double activation = 0.0;  // mean |h_j|
  double importance = 0.0;  // |w_j| * std(h_j)
  std::size_t top_feature = 0;
  double correlation = 0.0;
  bool correlation_defined = false;
};

std::vector<NodeStat> node_stats(const kan::KanModel& m, std::span<const FeatureVector> data);

// Pearson correlation; nullopt when either side has zero variance or n < 2.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
// Spearman correlation with average ranks for ties; nullopt as for pearson.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

struct FeatureMetrics {
  double spline_activation = 0.0;
  double saliency = 0.0;
  double pdp_delta = 0.0;
  double edge_importance = 0.0;
};

struct InfluenceRow {
  FeatureMetrics raw;
  double influence = 0.0;
};

using InfluenceTable = std::array<InfluenceRow, kNumFeatures>;

// Each metric column is min-max normalized across features (a constant column
// contributes 0.5); influence is the mean of the four normalized values.
InfluenceTable influence_from_metrics(const std::array<FeatureMetrics, kNumFeatures>& metrics);
InfluenceTable influence_table(const FeatureStats& fs, const EdgeImportanceMatrix& em);

struct RegressionMetrics {
  std::size_t n = 0;
  std::optional<double> r2;  // undefined for n < 2 or constant targets
  double mae = 0.0;
  double rmse = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets);

// Nearest-rank empirical quantile edges: n_bins + 1 values from min to max.
std::vector<double> quantile_edges(std::span<const double> values, int n_bins);
// Largest bin index i < edges.size()-1 with edges[i] <= v (0 below the range).
// Samples on a repeated edge fall in the last bin sharing it, so duplicate
// edges leave earlier bins empty.
std::size_t bin_of(std::span<const double> edges, double v);

struct FidelityBin {
  std::size_t bin_index = 0;
  double lo = 0.0;
  double hi = 0.0;
  RegressionMetrics metrics;
};

struct FidelityReport {
  RegressionMetrics overall;
  std::array<std::vector<double>, kNumFeatures> edges;
  // Non-empty bins only, in bin order.
  std::array<std::vector<FidelityBin>, kNumFeatures> bins;
};

FidelityReport fidelity_from_predictions(std::span<const FeatureVector> data, std::span<const double> predictions,
                                         std::span<const double> targets, int n_bins = kDefaultFidelityBins);
FidelityReport fidelity_bins(const kan::KanModel& m, std::span<const FeatureVector> data,
                             std::span<const double> targets, int n_bins = kDefaultFidelityBins);

enum class Direction { kPositive, kNegative, kFlat };
enum class Strength { kWeak, kModerate, kStrong };

std::string_view direction_name(Direction d);
std::string_view strength_name(Strength s);

struct Monotonicity {
  double score = 0.0;
  Direction direction = Direction::kFlat;
  Strength strength = Strength::kWeak;
};

// Labels: |s| < 0.05 flat; otherwise sign gives direction and
// |s| < 0.30 weak, < 0.70 moderate, else strong.
Monotonicity label_monotonicity(double score);
// Spearman rank correlation of the curve's grid against its values.
Monotonicity monotonicity(const PdpCurve& curve);

struct AnalyzeOptions {
  int pdp_points = kDefaultPdpPoints;
  int fidelity_bins = kDefaultFidelityBins;
  bool scale_edges_by_weight = false;
};

struct InterpretReport {
  FeatureStats feature_stats;
  std::array<PdpCurve, kNumFeatures> pdp;
  std::vector<NodeStat> nodes;
  EdgeImportanceMatrix edges;
  InfluenceTable influence{};
  FidelityReport fidelity;
  std::array<Monotonicity, kNumFeatures> monotonicity{};
};

InterpretReport analyze(const kan::KanModel& m, std::span<const FeatureVector> data, std::span<const double> targets,
                        const AnalyzeOptions& opts = {});

}  // namespace kantrust::interpret
