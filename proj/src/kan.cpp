#include "kantrust/kan.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include "kantrust/errors.hpp"
#include "kantrust/random.hpp"

namespace kantrust::kan {

namespace {

constexpr int kMaxBasisSpan = 11;

// Nonzero basis values of every feature for one normalized sample.
struct SampleBasis {
  std::array<int, kNumFeatures> first{};
  std::array<std::array<double, kMaxBasisSpan>, kNumFeatures> values{};
};

void compute_basis(const KanModel& m, const FeatureVector& normalized, SampleBasis& out) {
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    out.first[k] = spline::basis_nonzero(m.knots(), normalized[k], out.values[k]);
  }
}

// Fills hidden (size m.hidden()) and returns the prediction.
double forward_cached(const KanModel& m, const SampleBasis& b, std::span<double> hidden) {
  const int span = m.degree() + 1;
  const double* coeffs = m.coeffs().data();
  double pred = m.bias();
  for (int j = 0; j < m.hidden(); ++j) {
    double h = 0.0;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const double* c = coeffs + m.coeff_offset(j, k) + b.first[k];
      const auto& v = b.values[k];
      for (int r = 0; r < span; ++r) h += c[r] * v[r];
    }
    hidden[static_cast<std::size_t>(j)] = h;
    pred += m.out_weights()[static_cast<std::size_t>(j)] * h;
  }
  return pred;
}

void check_finite(const FeatureVector& fv) {
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (!std::isfinite(fv[k])) {
      throw ValidationError("non-finite input for feature " + std::string(kFeatureNames[k]));
    }
  }
}

// Accumulates the MSE gradient of the samples `idx` into g (which must be
// zeroed and sized to the model). Returns the mean squared error.
double accumulate_gradients(const KanModel& m, std::span<const FeatureVector> normalized, std::span<const double> targets,
                            std::span<const std::size_t> idx, Gradients& g) {
  const int span = m.degree() + 1;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  std::vector<double> hidden(static_cast<std::size_t>(m.hidden()));
  SampleBasis b;
  double sse = 0.0;
  for (std::size_t n : idx) {
    compute_basis(m, normalized[n], b);
    const double pred = forward_cached(m, b, hidden);
    const double resid = pred - targets[n];
    sse += resid * resid;
    const double dpred = 2.0 * resid * inv_n;
    g.bias += dpred;
    for (int j = 0; j < m.hidden(); ++j) {
      const auto ju = static_cast<std::size_t>(j);
      g.out_weights[ju] += dpred * hidden[ju];
      const double dh = dpred * m.out_weights()[ju];
      if (dh == 0.0) continue;
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        double* gc = g.coeffs.data() + m.coeff_offset(j, k) + b.first[k];
        const auto& v = b.values[k];
        for (int r = 0; r < span; ++r) gc[r] += dh * v[r];
      }
    }
  }
  return sse * inv_n;
}

double mean_squared_error(const KanModel& m, std::span<const FeatureVector> normalized, std::span<const double> targets,
                          std::span<const std::size_t> idx) {
  std::vector<double> hidden(static_cast<std::size_t>(m.hidden()));
  SampleBasis b;
  double sse = 0.0;
  for (std::size_t n : idx) {
    compute_basis(m, normalized[n], b);
    const double resid = forward_cached(m, b, hidden) - targets[n];
    sse += resid * resid;
  }
  return sse / static_cast<double>(idx.size());
}

// Adam state over one flat parameter block.
struct AdamBlock {
  std::vector<double> m1;
  std::vector<double> m2;

  explicit AdamBlock(std::size_t n) : m1(n, 0.0), m2(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr, double bc1, double bc2) {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * grad[i];
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
};

// ---- binary encoding -------------------------------------------------------

constexpr std::string_view kMagic = "KANTRUST";

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ValidationError("model file is truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

// ---- KanModel ----------------------------------------------------------------

KanModel::KanModel(int hidden, int grid, int degree) : hidden_(hidden), knots_(spline::make_knots(grid, degree)) {
  if (hidden < 1) throw std::invalid_argument("kan: hidden width must be >= 1");
  if (degree + 1 > kMaxBasisSpan) throw std::invalid_argument("kan: degree too large");
  coeffs_.assign(static_cast<std::size_t>(hidden) * kNumFeatures * static_cast<std::size_t>(num_basis()), 0.0);
  out_weights_.assign(static_cast<std::size_t>(hidden), 0.0);
  for (std::size_t k = 0; k < kNumFeatures; ++k) feature_names_[k] = std::string(kFeatureNames[k]);
}

spline::SplineEdge KanModel::edge(int j, std::size_t k) const {
  auto c = edge_coeffs(j, k);
  return {knots_, std::vector<double>(c.begin(), c.end())};
}

bool KanModel::has_canonical_features() const {
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    if (feature_names_[k] != kFeatureNames[k]) return false;
  }
  return true;
}

double KanModel::edge_value(int j, std::size_t k, double t) const { return spline::eval(knots_, edge_coeffs(j, k), t); }

// ---- inference ---------------------------------------------------------------

ForwardResult forward_normalized(const KanModel& m, const FeatureVector& normalized) {
  check_finite(normalized);
  SampleBasis b;
  compute_basis(m, normalized, b);
  ForwardResult r;
  r.hidden.resize(static_cast<std::size_t>(m.hidden()));
  r.prediction = forward_cached(m, b, r.hidden);
  return r;
}

ForwardResult forward(const KanModel& m, const FeatureVector& fv) {
  check_finite(fv);
  return forward_normalized(m, m.normalizer().normalize(fv));
}

double predict(const KanModel& m, const FeatureVector& fv) { return forward(m, fv).prediction; }

std::vector<double> predict(const KanModel& m, std::span<const FeatureVector> data) {
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<double> hidden(static_cast<std::size_t>(m.hidden()));
  SampleBasis b;
  for (const auto& fv : data) {
    check_finite(fv);
    compute_basis(m, m.normalizer().normalize(fv), b);
    out.push_back(forward_cached(m, b, hidden));
  }
  return out;
}

Gradients gradients(const KanModel& m, std::span<const FeatureVector> features, std::span<const double> targets) {
  if (features.empty()) throw ValidationError("gradients: empty batch");
  if (features.size() != targets.size()) throw ValidationError("gradients: feature/target count mismatch");
  std::vector<FeatureVector> normalized;
  normalized.reserve(features.size());
  for (const auto& fv : features) {
    check_finite(fv);
    normalized.push_back(m.normalizer().normalize(fv));
  }
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Gradients g;
  g.coeffs.assign(m.coeffs().size(), 0.0);
  g.out_weights.assign(m.out_weights().size(), 0.0);
  g.loss = accumulate_gradients(m, normalized, targets, idx, g);
  return g;
}

// ---- training ----------------------------------------------------------------

TrainResult train(std::span<const FeatureVector> features, std::span<const double> targets, const TrainConfig& cfg) {
  if (features.size() != targets.size()) throw ValidationError("train: feature/target count mismatch");
  if (features.size() < 10) {
    throw ValidationError("train: need at least 10 samples, got " + std::to_string(features.size()));
  }
  if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("train: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("train: learning rate must be > 0");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw ValidationError("train: val fraction must be in (0,1)");
  if (!(cfg.l2_penalty >= 0.0)) throw ValidationError("train: l2 penalty must be >= 0");
  for (std::size_t n = 0; n < targets.size(); ++n) {
    if (!std::isfinite(targets[n])) throw ValidationError("train: non-finite target at sample " + std::to_string(n));
  }

  Rng rng(cfg.seed);
  const std::size_t n_total = features.size();
  std::vector<std::size_t> order(n_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n_total)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_total - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  KanModel m(cfg.hidden, cfg.grid, cfg.degree);
  m.seed() = cfg.seed;
  m.target() = cfg.target;
  {
    std::vector<FeatureVector> train_features;
    train_features.reserve(train_idx.size());
    for (std::size_t n : train_idx) train_features.push_back(features[n]);
    m.normalizer() = fit_normalizer(train_features);
  }
  std::vector<FeatureVector> normalized;
  normalized.reserve(n_total);
  for (const auto& fv : features) normalized.push_back(m.normalizer().normalize(fv));

  for (double& c : m.coeffs()) c = rng.uniform(-0.1, 0.1);
  const double w_bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  for (double& w : m.out_weights()) w = rng.uniform(-w_bound, w_bound);
  double target_sum = 0.0;
  for (std::size_t n : train_idx) target_sum += targets[n];
  m.bias() = target_sum / static_cast<double>(train_idx.size());

  AdamBlock adam_coeffs(m.coeffs().size());
  AdamBlock adam_weights(m.out_weights().size());
  AdamBlock adam_bias(1);
  Gradients g;
  std::int64_t step = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(train_idx));
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t stop = std::min(train_idx.size(), start + batch);
      g.coeffs.assign(m.coeffs().size(), 0.0);
      g.out_weights.assign(m.out_weights().size(), 0.0);
      g.bias = 0.0;
      accumulate_gradients(m, normalized, targets, std::span(train_idx).subspan(start, stop - start), g);
      if (cfg.l2_penalty > 0.0) {
        for (std::size_t i = 0; i < g.coeffs.size(); ++i) g.coeffs[i] += 2.0 * cfg.l2_penalty * m.coeffs()[i];
        for (std::size_t i = 0; i < g.out_weights.size(); ++i) {
          g.out_weights[i] += 2.0 * cfg.l2_penalty * m.out_weights()[i];
        }
      }
      ++step;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
      adam_coeffs.step(m.coeffs(), g.coeffs, cfg.learning_rate, bc1, bc2);
      adam_weights.step(m.out_weights(), g.out_weights, cfg.learning_rate, bc1, bc2);
      adam_bias.step(std::span<double>(&m.bias(), 1), std::span<const double>(&g.bias, 1), cfg.learning_rate, bc1, bc2);
    }
    const double train_mse = mean_squared_error(m, normalized, targets, train_idx);
    const double val_mse = mean_squared_error(m, normalized, targets, val_idx);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
    }
    result.history.train_mse.push_back(train_mse);
    result.history.val_mse.push_back(val_mse);
  }
  m.calibration().val_rmse = std::sqrt(result.history.val_mse.back());
  result.model = std::move(m);
  return result;
}

// ---- persistence -------------------------------------------------------------

std::string save_model(const KanModel& m) {
  Writer w;
  w.raw(kMagic);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(kNumFeatures));
  w.u32(static_cast<std::uint32_t>(m.hidden()));
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.grid()));
  w.u32(static_cast<std::uint32_t>(m.degree()));
  for (const auto& name : m.feature_names()) w.str(name);
  w.str(m.target());
  w.u64(m.seed());
  for (double v : m.normalizer().min()) w.f64(v);
  for (double v : m.normalizer().max()) w.f64(v);
  for (double v : m.coeffs()) w.f64(v);
  for (double v : m.out_weights()) w.f64(v);
  w.f64(m.bias());

  const auto& cal = m.calibration();
  w.u8(cal.val_rmse ? 1 : 0);
  w.f64(cal.val_rmse.value_or(0.0));
  w.u32(static_cast<std::uint32_t>(cal.conf_bin_edges.size()));
  for (double v : cal.conf_bin_edges) w.f64(v);
  w.u32(static_cast<std::uint32_t>(cal.conf_bin_r2.size()));
  for (const auto& r2 : cal.conf_bin_r2) {
    w.u8(r2 ? 1 : 0);
    w.f64(r2.value_or(0.0));
  }
  const std::uint32_t crc = crc_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

KanModel load_model(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ValidationError("not a model file (bad magic header)");
  }
  Reader r(bytes.substr(kMagic.size()));
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw ValidationError("unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t inputs = r.u32();
  const std::uint32_t hidden = r.u32();
  const std::uint32_t outputs = r.u32();
  const std::uint32_t grid = r.u32();
  const std::uint32_t degree = r.u32();
  if (inputs != kNumFeatures || outputs != 1 || hidden < 1 || hidden > 4096 || grid < 1 || grid > 4096 ||
      degree + 1 > static_cast<std::uint32_t>(kMaxBasisSpan)) {
    throw ValidationError("model file has an unsupported architecture");
  }
  KanModel m(static_cast<int>(hidden), static_cast<int>(grid), static_cast<int>(degree));
  for (auto& name : m.feature_names()) name = r.str();
  m.target() = r.str();
  m.seed() = r.u64();
  FeatureVector lo{};
  FeatureVector hi{};
  for (double& v : lo) v = r.f64();
  for (double& v : hi) v = r.f64();
  m.normalizer() = Normalizer(lo, hi);
  for (double& v : m.coeffs()) v = r.f64();
  for (double& v : m.out_weights()) v = r.f64();
  m.bias() = r.f64();

  auto& cal = m.calibration();
  const bool has_rmse = r.u8() != 0;
  const double rmse = r.f64();
  if (has_rmse) cal.val_rmse = rmse;
  const std::uint32_t n_edges = r.u32();
  if (n_edges > 1'000'000) throw ValidationError("model file is corrupt (calibration size)");
  cal.conf_bin_edges.resize(n_edges);
  for (double& v : cal.conf_bin_edges) v = r.f64();
  const std::uint32_t n_r2 = r.u32();
  if (n_r2 > 1'000'000) throw ValidationError("model file is corrupt (calibration size)");
  for (std::uint32_t i = 0; i < n_r2; ++i) {
    const bool has = r.u8() != 0;
    const double v = r.f64();
    cal.conf_bin_r2.push_back(has ? std::optional<double>(v) : std::nullopt);
  }

  const std::size_t payload = kMagic.size() + r.pos();
  const std::uint32_t stored = r.u32();
  if (stored != crc_of(bytes.substr(0, payload))) throw ValidationError("model file checksum mismatch");
  if (kMagic.size() + r.pos() != bytes.size()) throw ValidationError("model file has trailing bytes");
  return m;
}

void save_model_file(const KanModel& m, const std::string& path) { write_file_atomic(path, save_model(m)); }

KanModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_model(bytes);
}

}  // namespace kantrust::kan
