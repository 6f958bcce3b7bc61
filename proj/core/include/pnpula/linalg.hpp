#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <span>
#include <string_view>

namespace pnpula {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Relative eigenvalue floor for SPD checks: lambda_min > kSpdTolerance * lambda_max.
inline constexpr double kSpdTolerance = 1e-12;

// Symmetric within `tol` (absolute, entrywise) and positive definite in the
// scale-invariant sense above.
bool is_spd(const Matrix& m, double symmetry_tol = 1e-10);

// Throws DegenerateModelError naming `what` when `m` is not SPD.
void require_spd(const Matrix& m, std::string_view what);

// Cholesky factorization that throws DegenerateModelError instead of
// silently returning a bad factor.
Eigen::LLT<Matrix> checked_llt(const Matrix& m, std::string_view what);

// Extreme eigenvalues of a symmetric matrix (dense eigendecomposition).
double max_symmetric_eigenvalue(const Matrix& m);
double min_symmetric_eigenvalue(const Matrix& m);

// Operator norm induced by the Euclidean norm.
double spectral_norm(const Matrix& m);

bool all_finite(const Vector& v);

// log(sum_i exp(v_i)) with a max-shift; -inf for empty or all -inf input.
double log_sum_exp(std::span<const double> values);

// Correctly rounded sum of finite values (Shewchuk partials), so the result
// does not depend on summation order.
double exact_sum(std::span<const double> values);

}  // namespace pnpula
