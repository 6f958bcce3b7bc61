#include "pnpula/forward.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "pnpula/errors.hpp"

namespace pnpula {

LinearForwardModel::LinearForwardModel(Matrix a, double sigma) : a_(std::move(a)), sigma_(sigma) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
    throw ConfigError("forward model: sigma must be positive and finite");
  }
  if (a_.size() == 0) throw DimensionError("forward model: empty matrix");
  if (!a_.allFinite()) throw ConfigError("forward model: matrix has non-finite entries");
  normal_ = a_.transpose() * a_ / (sigma_ * sigma_);
}

LinearForwardModel LinearForwardModel::scaled_identity(int dimension, double scale, double sigma) {
  return LinearForwardModel(scale * Matrix::Identity(dimension, dimension), sigma);
}

namespace {

void check_dims(const LinearForwardModel& fwd, const Vector& y, const Vector& x) {
  if (x.size() != fwd.input_dimension() || y.size() != fwd.output_dimension()) {
    throw DimensionError("likelihood: expected x in R^" + std::to_string(fwd.input_dimension()) +
                         " and y in R^" + std::to_string(fwd.output_dimension()));
  }
}

}  // namespace

Vector likelihood_score(const LinearForwardModel& fwd, const Vector& y, const Vector& x) {
  check_dims(fwd, y, x);
  const double inv_var = 1.0 / (fwd.sigma() * fwd.sigma());
  return fwd.matrix().transpose() * (y - fwd.matrix() * x) * inv_var;
}

double log_likelihood(const LinearForwardModel& fwd, const Vector& y, const Vector& x) {
  check_dims(fwd, y, x);
  return -(y - fwd.matrix() * x).squaredNorm() / (2.0 * fwd.sigma() * fwd.sigma());
}

double lipschitz_constant(const LinearForwardModel& fwd) {
  return std::max(0.0, max_symmetric_eigenvalue(fwd.normal_matrix()));
}

double concavity_constant(const LinearForwardModel& fwd) {
  const Matrix& n = fwd.normal_matrix();
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(n, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  // Round-off on a singular A^T A can leave a tiny signed residue.
  if (lo <= 1e-14 * std::max(hi, 1e-300)) return 0.0;
  return lo;
}

double operator_distance(const Matrix& a1, const Matrix& a2) {
  if (a1.rows() != a2.rows() || a1.cols() != a2.cols()) {
    throw DimensionError("operator_distance: shapes " + std::to_string(a1.rows()) + "x" +
                         std::to_string(a1.cols()) + " and " + std::to_string(a2.rows()) + "x" +
                         std::to_string(a2.cols()) + " differ");
  }
  return spectral_norm(a1 - a2);
}

}  // namespace pnpula
