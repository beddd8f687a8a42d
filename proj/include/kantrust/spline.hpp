#pragma once

#include <span>
#include <vector>

namespace kantrust::spline {

// Clamped uniform knot vector on [0,1]: degree+1 zeros, grid-1 uniformly
// spaced interior knots, degree+1 ones.
class KnotVector {
 public:
  KnotVector() = default;

  int grid() const { return grid_; }
  int degree() const { return degree_; }
  int num_basis() const { return grid_ + degree_; }
  const std::vector<double>& knots() const { return knots_; }

  // Index i of the knot span [knots[i], knots[i+1]) containing t; t = 1 maps
  // to the last non-empty span.
  int find_span(double t) const;

  friend bool operator==(const KnotVector&, const KnotVector&) = default;

 private:
  friend KnotVector make_knots(int grid, int degree);

  int grid_ = 0;
  int degree_ = 0;
  std::vector<double> knots_;
};

// Throws std::invalid_argument when grid < 1 or degree < 0.
KnotVector make_knots(int grid, int degree);

// All num_basis() basis values at t (t is clamped into [0,1]).
std::vector<double> basis(const KnotVector& kv, double t);

// Writes the degree+1 potentially nonzero basis values at t into `out`
// and returns the index of the first one. Allocation-free hot path.
int basis_nonzero(const KnotVector& kv, double t, std::span<double> out);

// Derivatives of all basis functions at t. Requires degree >= 1.
std::vector<double> basis_derivative(const KnotVector& kv, double t);

// Same as basis_nonzero, for the derivatives. Requires degree >= 1.
int basis_derivative_nonzero(const KnotVector& kv, double t, std::span<double> out);

// Evaluates sum_i coeffs[i] * B_i(t).
double eval(const KnotVector& kv, std::span<const double> coeffs, double t);
double eval_derivative(const KnotVector& kv, std::span<const double> coeffs, double t);

// A single univariate spline edge of a KAN layer.
struct SplineEdge {
  KnotVector knots;
  std::vector<double> coeffs;
};

// Both throw std::invalid_argument on a coefficient-count mismatch.
double eval_edge(const SplineEdge& e, double t);
double eval_edge_derivative(const SplineEdge& e, double t);

}  // namespace kantrust::spline
