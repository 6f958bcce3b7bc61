#pragma once

#include "pnpula/linalg.hpp"

namespace pnpula {

// y = A x + n with n ~ N(0, sigma^2 I_m). A is m x d.
class LinearForwardModel {
 public:
  LinearForwardModel(Matrix a, double sigma);

  // A(s) = s * I_d.
  static LinearForwardModel scaled_identity(int dimension, double scale, double sigma);

  const Matrix& matrix() const { return a_; }
  double sigma() const { return sigma_; }
  int input_dimension() const { return static_cast<int>(a_.cols()); }
  int output_dimension() const { return static_cast<int>(a_.rows()); }

  // A^T A / sigma^2, cached.
  const Matrix& normal_matrix() const { return normal_; }

 private:
  Matrix a_;
  double sigma_;
  Matrix normal_;
};

// grad_x log p(y|x) = A^T (y - A x) / sigma^2.
Vector likelihood_score(const LinearForwardModel& fwd, const Vector& y, const Vector& x);

// log p(y|x) up to the x-independent normalizer: -||y - A x||^2 / (2 sigma^2).
double log_likelihood(const LinearForwardModel& fwd, const Vector& y, const Vector& x);

// L = lambda_max(A^T A) / sigma^2.
double lipschitz_constant(const LinearForwardModel& fwd);

// m = lambda_min(A^T A) / sigma^2; exactly 0 for rank-deficient A.
double concavity_constant(const LinearForwardModel& fwd);

// ||A1 - A2||_2 (Euclidean operator norm). Throws DimensionError on shape mismatch.
double operator_distance(const Matrix& a1, const Matrix& a2);

}  // namespace pnpula
