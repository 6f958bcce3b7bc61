#include "pnpula/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pnpula/errors.hpp"

namespace pnpula {

bool is_spd(const Matrix& m, double symmetry_tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if (((m - m.transpose()).cwiseAbs().array() > symmetry_tol).any()) return false;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return false;
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  return hi > 0.0 && lo > kSpdTolerance * hi;
}

void require_spd(const Matrix& m, std::string_view what) {
  if (!is_spd(m)) {
    throw DegenerateModelError(std::string(what) + " is not symmetric positive definite");
  }
}

Eigen::LLT<Matrix> checked_llt(const Matrix& m, std::string_view what) {
  require_spd(m, what);
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DegenerateModelError("Cholesky factorization failed for " + std::string(what));
  }
  return llt;
}

double max_symmetric_eigenvalue(const Matrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

double min_symmetric_eigenvalue(const Matrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Matrix gram = m.transpose() * m;
  return std::sqrt(std::max(0.0, max_symmetric_eigenvalue(gram)));
}

bool all_finite(const Vector& v) { return v.allFinite(); }

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (const double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  // Add the partials from the top, then fix half-way rounding using the sign
  // of the next partial.
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace pnpula
