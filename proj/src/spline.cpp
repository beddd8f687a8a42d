#include "kantrust/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kantrust::spline {

namespace {

constexpr int kMaxDegree = 10;

// Nonzero basis functions of degree p on span s (Cox-de Boor, triangular
// scheme). Writes p+1 values N_{s-p..s, p}(t) into out.
void basis_funs(const std::vector<double>& u, int s, double t, int p, double* out) {
  std::array<double, kMaxDegree + 1> left{};
  std::array<double, kMaxDegree + 1> right{};
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - u[s + 1 - j];
    right[j] = u[s + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? out[r] / denom : 0.0;
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

void check_coeffs(const KnotVector& kv, std::size_t n) {
  if (n != static_cast<std::size_t>(kv.num_basis())) {
    throw std::invalid_argument("spline: expected " + std::to_string(kv.num_basis()) + " coefficients, got " +
                                std::to_string(n));
  }
}

}  // namespace

KnotVector make_knots(int grid, int degree) {
  if (grid < 1) throw std::invalid_argument("spline: grid must be >= 1, got " + std::to_string(grid));
  if (degree < 0 || degree > kMaxDegree) {
    throw std::invalid_argument("spline: degree must be in [0," + std::to_string(kMaxDegree) + "], got " +
                                std::to_string(degree));
  }
  KnotVector kv;
  kv.grid_ = grid;
  kv.degree_ = degree;
  kv.knots_.reserve(static_cast<std::size_t>(grid + 2 * degree + 1));
  for (int i = 0; i <= degree; ++i) kv.knots_.push_back(0.0);
  for (int i = 1; i < grid; ++i) kv.knots_.push_back(static_cast<double>(i) / grid);
  for (int i = 0; i <= degree; ++i) kv.knots_.push_back(1.0);
  return kv;
}

int KnotVector::find_span(double t) const {
  const int lo = degree_;
  const int hi = degree_ + grid_ - 1;
  if (!(t > 0.0)) return lo;
  if (t >= 1.0) return hi;
  int s = lo + static_cast<int>(std::floor(t * grid_));
  s = std::clamp(s, lo, hi);
  while (s > lo && t < knots_[s]) --s;
  while (s < hi && t >= knots_[s + 1]) ++s;
  return s;
}

int basis_nonzero(const KnotVector& kv, double t, std::span<double> out) {
  const int p = kv.degree();
  t = std::clamp(t, 0.0, 1.0);
  const int s = kv.find_span(t);
  basis_funs(kv.knots(), s, t, p, out.data());
  return s - p;
}

std::vector<double> basis(const KnotVector& kv, double t) {
  std::vector<double> out(static_cast<std::size_t>(kv.num_basis()), 0.0);
  std::array<double, kMaxDegree + 1> local{};
  const int first = basis_nonzero(kv, t, local);
  for (int r = 0; r <= kv.degree(); ++r) out[static_cast<std::size_t>(first + r)] = local[r];
  return out;
}

int basis_derivative_nonzero(const KnotVector& kv, double t, std::span<double> out) {
  const int p = kv.degree();
  if (p < 1) throw std::invalid_argument("spline: derivative of a degree-0 basis is not representable");
  t = std::clamp(t, 0.0, 1.0);
  const int s = kv.find_span(t);
  const auto& u = kv.knots();

  // lower[r] = N_{s-p+1+r, p-1}(t), r = 0..p-1
  std::array<double, kMaxDegree + 1> lower{};
  basis_funs(u, s, t, p - 1, lower.data());

  // N'_{i,p} = p * (N_{i,p-1} / (u_{i+p} - u_i) - N_{i+1,p-1} / (u_{i+p+1} - u_{i+1}))
  const int first = s - p;
  for (int r = 0; r <= p; ++r) {
    const int i = first + r;
    const double a = r >= 1 ? lower[r - 1] : 0.0;
    const double b = r <= p - 1 ? lower[r] : 0.0;
    const double da = u[i + p] - u[i];
    const double db = u[i + p + 1] - u[i + 1];
    double v = 0.0;
    if (da != 0.0) v += a / da;
    if (db != 0.0) v -= b / db;
    out[static_cast<std::size_t>(r)] = p * v;
  }
  return first;
}

std::vector<double> basis_derivative(const KnotVector& kv, double t) {
  std::vector<double> out(static_cast<std::size_t>(kv.num_basis()), 0.0);
  std::array<double, kMaxDegree + 1> local{};
  const int first = basis_derivative_nonzero(kv, t, local);
  for (int r = 0; r <= kv.degree(); ++r) out[static_cast<std::size_t>(first + r)] = local[r];
  return out;
}

double eval(const KnotVector& kv, std::span<const double> coeffs, double t) {
  check_coeffs(kv, coeffs.size());
  std::array<double, kMaxDegree + 1> local{};
  const int first = basis_nonzero(kv, t, local);
  double acc = 0.0;
  for (int r = 0; r <= kv.degree(); ++r) acc += coeffs[static_cast<std::size_t>(first + r)] * local[r];
  return acc;
}

double eval_derivative(const KnotVector& kv, std::span<const double> coeffs, double t) {
  check_coeffs(kv, coeffs.size());
  std::array<double, kMaxDegree + 1> local{};
  const int first = basis_derivative_nonzero(kv, t, local);
  double acc = 0.0;
  for (int r = 0; r <= kv.degree(); ++r) acc += coeffs[static_cast<std::size_t>(first + r)] * local[r];
  return acc;
}

double eval_edge(const SplineEdge& e, double t) { return eval(e.knots, e.coeffs, t); }

double eval_edge_derivative(const SplineEdge& e, double t) { return eval_derivative(e.knots, e.coeffs, t); }

}  // namespace kantrust::spline
