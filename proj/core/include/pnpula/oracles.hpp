#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "pnpula/forward.hpp"
#include "pnpula/gmm.hpp"

namespace pnpula {

// Independent reference computations used by the validation suite. None of
// them shares code paths with the closed forms they check.

struct QuadratureGrid {
  double low = -8.0;
  double high = 8.0;
  int n = 400;  // midpoints per axis
};

// E[x | z] for z = x + N(0, eps I), x ~ prior, by midpoint quadrature of
// x p(x) N(z; x, eps I) on a square grid. 2D only.
Vector quadrature_mmse(const GaussianMixture& prior, double eps, const Vector& z,
                       const QuadratureGrid& grid = {});

struct ImportanceEstimate {
  Vector mean;
  Vector std_error;  // delta-method standard error of the self-normalized mean
  double ess = 0.0;
};

// Self-normalized importance sampling of E[x | y] with a Gaussian proposal
// centered at the least-squares solution, covariance inflation^2 sigma^2 (A^T A)^-1.
// Requires A^T A invertible.
ImportanceEstimate importance_posterior_mean(const GaussianMixture& prior,
                                             const LinearForwardModel& fwd, const Vector& y,
                                             std::size_t n, std::uint64_t seed,
                                             double inflation = 2.0);

// Minimum over all n! permutations of the correctly rounded cost sum. n <= 9.
double brute_force_assignment_cost(std::span<const double> cost, std::size_t n);

// Central differences with step h per coordinate.
Vector central_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                   double h);

}  // namespace pnpula
