#include "pnpula/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "pnpula/errors.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

// log N(x; mu, cov) for each component, written out from the Cholesky factor.
struct GaussianTerm {
  double log_weight;
  Vector mean;
  Eigen::LLT<Matrix> llt;
  double log_norm;
};

std::vector<GaussianTerm> gaussian_terms(const GaussianMixture& m) {
  std::vector<GaussianTerm> out;
  const double d = m.dimension();
  for (const auto& c : m.components()) {
    if (c.weight <= 0.0) continue;
    Eigen::LLT<Matrix> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw DegenerateModelError("oracle: covariance not SPD");
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    out.push_back({std::log(c.weight), c.mean, llt,
                   -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det)});
  }
  return out;
}

double log_mixture(const std::vector<GaussianTerm>& terms, const Vector& x) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> v(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Vector r = terms[i].llt.matrixL().solve(x - terms[i].mean);
    v[i] = terms[i].log_weight + terms[i].log_norm - 0.5 * r.squaredNorm();
    best = std::max(best, v[i]);
  }
  double s = 0.0;
  for (const double t : v) s += std::exp(t - best);
  return best + std::log(s);
}

}  // namespace

Vector quadrature_mmse(const GaussianMixture& prior, double eps, const Vector& z,
                       const QuadratureGrid& grid) {
  if (prior.dimension() != 2 || z.size() != 2) {
    throw DimensionError("quadrature_mmse: only 2D is supported");
  }
  if (!(eps > 0.0) || grid.n < 2 || !(grid.high > grid.low)) {
    throw ConfigError("quadrature_mmse: bad eps or grid");
  }
  const auto terms = gaussian_terms(prior);
  const double h = (grid.high - grid.low) / grid.n;
  const std::size_t n = static_cast<std::size_t>(grid.n);
  std::vector<double> logw(n * n);
  Vector x(2);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    x[0] = grid.low + (static_cast<double>(i) + 0.5) * h;
    for (std::size_t j = 0; j < n; ++j) {
      x[1] = grid.low + (static_cast<double>(j) + 0.5) * h;
      const double lw = log_mixture(terms, x) - 0.5 * (z - x).squaredNorm() / eps;
      logw[i * n + j] = lw;
      best = std::max(best, lw);
    }
  }
  double mass = 0.0, m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = grid.low + (static_cast<double>(i) + 0.5) * h;
    for (std::size_t j = 0; j < n; ++j) {
      const double x1 = grid.low + (static_cast<double>(j) + 0.5) * h;
      const double w = std::exp(logw[i * n + j] - best);
      mass += w;
      m0 += w * x0;
      m1 += w * x1;
    }
  }
  Vector out(2);
  out << m0 / mass, m1 / mass;
  return out;
}

ImportanceEstimate importance_posterior_mean(const GaussianMixture& prior,
                                             const LinearForwardModel& fwd, const Vector& y,
                                             std::size_t n, std::uint64_t seed, double inflation) {
  if (n < 2) throw InsufficientDataError("importance_posterior_mean: need n >= 2");
  const Matrix& a = fwd.matrix();
  const int d = prior.dimension();
  const Matrix ata = a.transpose() * a;
  Eigen::LLT<Matrix> ata_llt(ata);
  if (ata_llt.info() != Eigen::Success || ata.determinant() <= 0.0) {
    throw DegenerateModelError("importance_posterior_mean: A^T A is singular");
  }
  const Vector center = ata_llt.solve(a.transpose() * y);
  const Matrix prop_cov = inflation * inflation * fwd.sigma() * fwd.sigma() * ata_llt.solve(Matrix::Identity(d, d));
  const Eigen::LLT<Matrix> prop_llt(prop_cov);
  const Matrix prop_l = prop_llt.matrixL();

  const auto terms = gaussian_terms(prior);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> logw(n);
  Matrix xs(d, static_cast<Eigen::Index>(n));
  Vector u(d);
  const double s2 = fwd.sigma() * fwd.sigma();
  for (std::size_t k = 0; k < n; ++k) {
    for (int j = 0; j < d; ++j) u[j] = normal(rng);
    const Vector x = center + prop_l * u;
    xs.col(static_cast<Eigen::Index>(k)) = x;
    const double log_lik = -0.5 * (y - a * x).squaredNorm() / s2;
    const double log_prop = -0.5 * u.squaredNorm();  // up to a constant
    logw[k] = log_mixture(terms, x) + log_lik - log_prop;
  }
  const double best = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(n);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = std::exp(logw[k] - best);
    sum += w[k];
    sum_sq += w[k] * w[k];
  }
  ImportanceEstimate est;
  est.mean = Vector::Zero(d);
  for (std::size_t k = 0; k < n; ++k) est.mean += (w[k] / sum) * xs.col(static_cast<Eigen::Index>(k));
  Vector var = Vector::Zero(d);
  for (std::size_t k = 0; k < n; ++k) {
    const double wk = w[k] / sum;
    var += (wk * wk) * (xs.col(static_cast<Eigen::Index>(k)) - est.mean).array().square().matrix();
  }
  est.std_error = var.array().sqrt().matrix();
  est.ess = sum * sum / sum_sq;
  return est;
}

double brute_force_assignment_cost(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("brute_force_assignment_cost: size mismatch");
  if (n > 9) throw BudgetError("brute_force_assignment_cost: n > 9");
  if (n == 0) return 0.0;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> chosen(n);
  double best = std::numeric_limits<double>::infinity();
  do {
    for (std::size_t i = 0; i < n; ++i) chosen[i] = cost[i * n + perm[i]];
    best = std::min(best, exact_sum(chosen));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Vector central_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                   double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace pnpula
