#include "pnpula/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "pnpula/errors.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2 pi)

double safe_log(double w) {
  return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
}

// log N(x; mu, Sigma) given the Cholesky factor of Sigma.
double log_normal(const Vector& x, const Vector& mu, const Eigen::LLT<Matrix>& llt) {
  const Vector diff = x - mu;
  const Vector z = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + log_det + static_cast<double>(x.size()) * kLogTwoPi);
}

void normalize_log_weights(std::vector<double>& log_w) {
  const double lse = log_sum_exp(log_w);
  for (double& v : log_w) v = std::exp(v - lse);
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("GaussianMixture: no components");
  dimension_ = static_cast<int>(components_.front().mean.size());
  if (dimension_ <= 0) throw DimensionError("GaussianMixture: zero-dimensional component");
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    const std::string tag = "GaussianMixture component " + std::to_string(i);
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw ConfigError(tag + ": weight must be finite and >= 0");
    }
    if (c.mean.size() != dimension_ || c.covariance.rows() != dimension_ ||
        c.covariance.cols() != dimension_) {
      throw DimensionError(tag + ": dimension mismatch");
    }
    if (!c.mean.allFinite()) throw ConfigError(tag + ": non-finite mean");
    require_spd(c.covariance, tag + " covariance");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("GaussianMixture: weights sum to " + format_double(total) + ", not 1");
  }
}

Vector GaussianMixture::mean() const {
  Vector m = Vector::Zero(dimension_);
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Matrix GaussianMixture::covariance() const {
  const Vector m = mean();
  Matrix second = Matrix::Zero(dimension_, dimension_);
  for (const auto& c : components_) {
    second += c.weight * (c.covariance + c.mean * c.mean.transpose());
  }
  return second - m * m.transpose();
}

GaussianMixture GaussianMixture::smoothed(double eps) const {
  if (!(eps > 0.0)) throw ConfigError("smoothed: eps must be > 0");
  auto comps = components_;
  for (auto& c : comps) c.covariance += eps * Matrix::Identity(dimension_, dimension_);
  return GaussianMixture(std::move(comps));
}

GaussianMixture crossed_ridges_mixture() {
  Matrix s1(2, 2), s2(2, 2);
  s1 << 2.0, 0.5, 0.5, 0.15;
  s2 << 0.15, 0.5, 0.5, 2.0;
  return GaussianMixture({{0.5, Vector::Zero(2), s1}, {0.5, Vector::Zero(2), s2}});
}

double gmm_log_density(const GaussianMixture& mixture, const Vector& x) {
  if (x.size() != mixture.dimension()) throw DimensionError("gmm_log_density: dimension mismatch");
  std::vector<double> terms;
  terms.reserve(mixture.size());
  for (const auto& c : mixture.components()) {
    const auto llt = checked_llt(c.covariance, "mixture covariance");
    terms.push_back(safe_log(c.weight) + log_normal(x, c.mean, llt));
  }
  return log_sum_exp(terms);
}

Vector gmm_score(const GaussianMixture& mixture, const Vector& x) {
  if (x.size() != mixture.dimension()) throw DimensionError("gmm_score: dimension mismatch");
  std::vector<double> log_r;
  std::vector<Vector> grads;
  for (const auto& c : mixture.components()) {
    const auto llt = checked_llt(c.covariance, "mixture covariance");
    log_r.push_back(safe_log(c.weight) + log_normal(x, c.mean, llt));
    grads.push_back(-llt.solve(x - c.mean));
  }
  normalize_log_weights(log_r);
  Vector g = Vector::Zero(x.size());
  for (std::size_t i = 0; i < grads.size(); ++i) g += log_r[i] * grads[i];
  return g;
}

SampleSet gmm_sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("gmm_sample: n must be >= 1");
  std::vector<Matrix> factors;
  std::vector<double> weights;
  for (const auto& c : mixture.components()) {
    factors.push_back(checked_llt(c.covariance, "mixture covariance").matrixL().toDenseMatrix());
    weights.push_back(c.weight);
  }
  Rng rng = make_rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal;
  const int d = mixture.dimension();
  RowMatrix pts(static_cast<Eigen::Index>(n), d);
  Vector z(d);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = pick(rng);
    for (int j = 0; j < d; ++j) z[j] = normal(rng);
    pts.row(static_cast<Eigen::Index>(k)) = (mixture[i].mean + factors[i] * z).transpose();
  }
  nlohmann::json meta = {{"source", "gmm_sample"}, {"seed", seed}, {"n", n}};
  return SampleSet(std::move(pts), {}, std::move(meta));
}

Vector PosteriorMixture::mean() const {
  Vector m = Vector::Zero(components.front().mean.size());
  for (const auto& c : components) m += c.weight * c.mean;
  return m;
}

Matrix PosteriorMixture::covariance() const {
  const Vector m = mean();
  const auto d = m.size();
  Matrix second = Matrix::Zero(d, d);
  for (const auto& c : components) {
    second += c.weight * (c.precision.inverse() + c.mean * c.mean.transpose());
  }
  return second - m * m.transpose();
}

double PosteriorMixture::log_density(const Vector& x) const {
  std::vector<double> terms;
  for (const auto& c : components) {
    const Eigen::LLT<Matrix> llt(c.precision);
    const Vector z = llt.matrixU() * (x - c.mean);
    const double log_det_prec = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    terms.push_back(safe_log(c.weight) - 0.5 * z.squaredNorm() + 0.5 * log_det_prec -
                    0.5 * static_cast<double>(x.size()) * kLogTwoPi);
  }
  return log_sum_exp(terms);
}

std::size_t PosteriorMixture::dominant_component(const Vector& x) const {
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    const Eigen::LLT<Matrix> llt(c.precision);
    const Vector z = llt.matrixU() * (x - c.mean);
    const double log_det_prec = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double v = safe_log(c.weight) - 0.5 * z.squaredNorm() + 0.5 * log_det_prec;
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

PosteriorMixture gmm_posterior(const GaussianMixture& mixture, const LinearForwardModel& fwd,
                               const Vector& y) {
  const int d = mixture.dimension();
  if (fwd.input_dimension() != d || y.size() != fwd.output_dimension()) {
    throw DimensionError("gmm_posterior: forward model / observation dimensions do not match prior");
  }
  const double inv_var = 1.0 / (fwd.sigma() * fwd.sigma());
  const Matrix& ata = fwd.normal_matrix();  // A^T A / sigma^2
  const Vector aty = fwd.matrix().transpose() * y * inv_var;
  const double var = fwd.sigma() * fwd.sigma();

  PosteriorMixture post;
  std::vector<double> log_a;
  for (const auto& c : mixture.components()) {
    const auto prior_llt = checked_llt(c.covariance, "prior covariance");
    const Matrix prior_prec = prior_llt.solve(Matrix::Identity(d, d));
    Matrix prec = prior_prec + ata;
    prec = 0.5 * (prec + prec.transpose());
    const auto post_llt = checked_llt(prec, "posterior precision");
    const Vector prior_lin = prior_prec * c.mean;
    const Vector m = post_llt.solve(prior_lin + aty);

    // det(sigma^2 I + L^T A^T A L), with Sigma = L L^T standing in for Sigma^{1/2}.
    const Matrix l = prior_llt.matrixL();
    Matrix inner = var * Matrix::Identity(d, d) + l.transpose() * (ata * var) * l;
    inner = 0.5 * (inner + inner.transpose());
    const auto inner_llt = checked_llt(inner, "posterior evidence matrix");
    const double log_det_inner =
        2.0 * inner_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

    log_a.push_back(safe_log(c.weight) + 0.5 * m.dot(prec * m) - 0.5 * c.mean.dot(prior_lin) -
                    0.5 * log_det_inner);
    post.components.push_back({0.0, m, prec});
  }
  normalize_log_weights(log_a);
  for (std::size_t i = 0; i < log_a.size(); ++i) post.components[i].weight = log_a[i];
  return post;
}

ExactMmseDenoiser::ExactMmseDenoiser(const GaussianMixture& prior, double eps)
    : eps_(eps), dimension_(prior.dimension()) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("denoiser: eps must be > 0");
  const Matrix id = Matrix::Identity(dimension_, dimension_);
  for (const auto& c : prior.components()) {
    const auto prior_llt = checked_llt(c.covariance, "prior covariance");
    const Matrix prior_prec = prior_llt.solve(id);
    Matrix shrink_prec = prior_prec + id / eps;
    shrink_prec = 0.5 * (shrink_prec + shrink_prec.transpose());
    const Matrix shrink = checked_llt(shrink_prec, "denoiser precision").solve(id);
    const auto smoothed_llt = checked_llt(c.covariance + eps * id, "smoothed covariance");
    const double log_det =
        2.0 * smoothed_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    parts_.push_back(Part{safe_log(c.weight), c.mean, shrink, shrink * (prior_prec * c.mean),
                          smoothed_llt.solve(id),
                          -0.5 * (log_det + static_cast<double>(dimension_) * kLogTwoPi)});
  }
}

void ExactMmseDenoiser::log_terms(const Vector& x, std::vector<double>& out) const {
  out.resize(parts_.size());
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    const auto& p = parts_[i];
    const Vector diff = x - p.mean;
    out[i] = p.log_weight + p.log_normalizer - 0.5 * diff.dot(p.smoothed_inverse * diff);
  }
}

Vector ExactMmseDenoiser::operator()(const Vector& x) const {
  if (x.size() != dimension_) throw DimensionError("denoiser: dimension mismatch");
  std::vector<double> r;
  log_terms(x, r);
  normalize_log_weights(r);
  Vector out = Vector::Zero(dimension_);
  const double inv_eps = 1.0 / eps_;
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    if (r[i] == 0.0) continue;
    out += r[i] * (parts_[i].shrunk_offset + parts_[i].shrink * (x * inv_eps));
  }
  return out;
}

ExactMmseDenoiser::Decomposition ExactMmseDenoiser::decompose(const Vector& x) const {
  if (x.size() != dimension_) throw DimensionError("denoiser: dimension mismatch");
  Decomposition dec;
  log_terms(x, dec.responsibilities);
  normalize_log_weights(dec.responsibilities);
  for (const auto& p : parts_) dec.component_means.push_back(p.shrunk_offset + p.shrink * (x / eps_));
  return dec;
}

Vector exact_mmse_denoise(const GaussianMixture& mixture, double eps, const Vector& x) {
  return ExactMmseDenoiser(mixture, eps)(x);
}

Vector smoothed_prior_score(const GaussianMixture& mixture, double eps, const Vector& x) {
  return (exact_mmse_denoise(mixture, eps, x) - x) / eps;
}

Vector MismatchedDenoiser::operator()(const Vector& x) const {
  if (x.size() < 1) throw DimensionError("mismatched denoiser: empty input");
  if (x[0] > threshold_) return (*base_)(x);
  return Vector::Zero(x.size());
}

Vector mismatched_denoise(const MismatchedDenoiser& denoiser, const Vector& x) {
  return denoiser(x);
}

}  // namespace pnpula
