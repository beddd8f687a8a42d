#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kantrust/interchange.hpp"
#include "kantrust/spline.hpp"

namespace kantrust::kan {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Fidelity summary attached to a trained model; consumed by trust scoring.
struct TrustCalibration {
  std::optional<double> val_rmse;
  // Quantile edges of the conf feature (n_bins + 1 values) and the R^2 of each
  // bin on the training data; nullopt where R^2 is undefined or the bin empty.
  std::vector<double> conf_bin_edges;
  std::vector<std::optional<double>> conf_bin_r2;

  friend bool operator==(const TrustCalibration&, const TrustCalibration&) = default;
};

// Spline-edge layer (kNumFeatures -> hidden) followed by a linear output:
//
//   pred(x) = bias + sum_j w_j * sum_k s_{j,k}(normalize_k(x_k))
//
// Edge coefficients are stored flat, index ((j * kNumFeatures) + k) * num_basis + i.
class KanModel {
 public:
  KanModel() : KanModel(16, 5, 3) {}
  // Zero-initialized model. Throws std::invalid_argument on bad shapes.
  KanModel(int hidden, int grid, int degree);

  int hidden() const { return hidden_; }
  int grid() const { return knots_.grid(); }
  int degree() const { return knots_.degree(); }
  int num_basis() const { return knots_.num_basis(); }
  const spline::KnotVector& knots() const { return knots_; }

  std::size_t coeff_offset(int j, std::size_t k) const {
    return (static_cast<std::size_t>(j) * kNumFeatures + k) * static_cast<std::size_t>(num_basis());
  }
  std::span<double> edge_coeffs(int j, std::size_t k) {
    return {coeffs_.data() + coeff_offset(j, k), static_cast<std::size_t>(num_basis())};
  }
  std::span<const double> edge_coeffs(int j, std::size_t k) const {
    return {coeffs_.data() + coeff_offset(j, k), static_cast<std::size_t>(num_basis())};
  }
  spline::SplineEdge edge(int j, std::size_t k) const;

  std::vector<double>& coeffs() { return coeffs_; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  std::vector<double>& out_weights() { return out_weights_; }
  const std::vector<double>& out_weights() const { return out_weights_; }
  double& bias() { return bias_; }
  double bias() const { return bias_; }

  Normalizer& normalizer() { return normalizer_; }
  const Normalizer& normalizer() const { return normalizer_; }

  std::array<std::string, kNumFeatures>& feature_names() { return feature_names_; }
  const std::array<std::string, kNumFeatures>& feature_names() const { return feature_names_; }
  // True when the stored names equal kFeatureNames in order.
  bool has_canonical_features() const;

  std::uint64_t& seed() { return seed_; }
  std::uint64_t seed() const { return seed_; }
  std::string& target() { return target_; }
  const std::string& target() const { return target_; }
  TrustCalibration& calibration() { return calibration_; }
  const TrustCalibration& calibration() const { return calibration_; }

  // s_{j,k}(t) for an already-normalized t.
  double edge_value(int j, std::size_t k, double t) const;

  friend bool operator==(const KanModel&, const KanModel&) = default;

 private:
  int hidden_ = 0;
  spline::KnotVector knots_;
  std::vector<double> coeffs_;
  std::vector<double> out_weights_;
  double bias_ = 0.0;
  Normalizer normalizer_;
  std::array<std::string, kNumFeatures> feature_names_;
  std::uint64_t seed_ = 0;
  std::string target_ = "conf";
  TrustCalibration calibration_;
};

struct ForwardResult {
  double prediction = 0.0;
  std::vector<double> hidden;
};

// Forward pass on raw features (normalized internally). Throws
// ValidationError on non-finite input.
ForwardResult forward(const KanModel& m, const FeatureVector& fv);
// Forward pass on features already mapped to [0,1].
ForwardResult forward_normalized(const KanModel& m, const FeatureVector& normalized);

double predict(const KanModel& m, const FeatureVector& fv);
std::vector<double> predict(const KanModel& m, std::span<const FeatureVector> data);

// Gradient of the mean squared error over a batch.
struct Gradients {
  std::vector<double> coeffs;
  std::vector<double> out_weights;
  double bias = 0.0;
  double loss = 0.0;
};

Gradients gradients(const KanModel& m, std::span<const FeatureVector> features, std::span<const double> targets);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-2;
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  double l2_penalty = 0.0;
  int hidden = 16;
  int grid = 5;
  int degree = 3;
  std::string target = "conf";
};

struct TrainHistory {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
};

struct TrainResult {
  KanModel model;
  TrainHistory history;
};

// Adam on MSE with a seeded train/validation split; the normalizer is fitted
// on the training split only. Throws ValidationError on bad input and
// NumericalError (naming the epoch) if the loss becomes non-finite.
TrainResult train(std::span<const FeatureVector> features, std::span<const double> targets, const TrainConfig& cfg);

// "KANTRUST" binary container with a trailing CRC-32.
std::string save_model(const KanModel& m);
KanModel load_model(std::string_view bytes);

void save_model_file(const KanModel& m, const std::string& path);
KanModel load_model_file(const std::string& path);

}  // namespace kantrust::kan
