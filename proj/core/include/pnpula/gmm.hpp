#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "pnpula/forward.hpp"
#include "pnpula/linalg.hpp"
#include "pnpula/sample_set.hpp"

namespace pnpula {

struct GaussianComponent {
  double weight = 0.0;
  Vector mean;
  Matrix covariance;
};

// Finite Gaussian mixture prior p(x) = sum_i w_i N(x; mu_i, Sigma_i).
// Construction validates every invariant: weights >= 0 summing to 1 within
// 1e-12, shared dimension, symmetric positive definite covariances.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  int dimension() const { return dimension_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& operator[](std::size_t i) const { return components_[i]; }

  Vector mean() const;
  Matrix covariance() const;

  // Same mixture with every covariance replaced by Sigma_i + eps I.
  GaussianMixture smoothed(double eps) const;

 private:
  std::vector<GaussianComponent> components_;
  int dimension_ = 0;
};

// The two-component zero-mean 2D mixture with crossed elongated covariances
// used by the denoiser-mismatch experiment.
GaussianMixture crossed_ridges_mixture();

// log sum_i w_i N(x; mu_i, Sigma_i), evaluated with a max-shift.
double gmm_log_density(const GaussianMixture& mixture, const Vector& x);

// Analytic grad_x log p(x).
Vector gmm_score(const GaussianMixture& mixture, const Vector& x);

// n i.i.d. draws: categorical component by weight, then mu + L z with L the
// Cholesky factor. Deterministic in `seed`.
SampleSet gmm_sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed);

struct PosteriorComponent {
  double weight = 0.0;
  Vector mean;
  Matrix precision;
};

struct PosteriorMixture {
  std::vector<PosteriorComponent> components;

  Vector mean() const;
  Matrix covariance() const;
  double log_density(const Vector& x) const;
  // Index of the component with the largest responsibility at x.
  std::size_t dominant_component(const Vector& x) const;
};

// Closed-form p(x|y) for a Gaussian-mixture prior and linear Gaussian
// likelihood. Weights are normalized numerically (p(y) is never evaluated).
PosteriorMixture gmm_posterior(const GaussianMixture& mixture, const LinearForwardModel& fwd,
                               const Vector& y);

// Exact MMSE denoiser D*_eps(x) = E[x | x + n = z], n ~ N(0, eps I).
// `eps` is the noise VARIANCE. Per-component algebra is precomputed once.
class ExactMmseDenoiser {
 public:
  ExactMmseDenoiser(const GaussianMixture& prior, double eps);

  Vector operator()(const Vector& x) const;

  struct Decomposition {
    std::vector<Vector> component_means;  // n_i(x)
    std::vector<double> responsibilities; // w_i c_i(x) / sum_j w_j c_j(x)
  };
  Decomposition decompose(const Vector& x) const;

  double eps() const { return eps_; }
  int dimension() const { return dimension_; }
  std::size_t size() const { return parts_.size(); }

 private:
  struct Part {
    double log_weight;
    Vector mean;
    Matrix shrink;          // (Sigma^-1 + I/eps)^-1
    Vector shrunk_offset;   // shrink * Sigma^-1 * mu
    Matrix smoothed_inverse;  // (Sigma + eps I)^-1
    double log_normalizer;    // -0.5 log det(2 pi (Sigma + eps I))
  };
  void log_terms(const Vector& x, std::vector<double>& out) const;

  std::vector<Part> parts_;
  double eps_;
  int dimension_;
};

Vector exact_mmse_denoise(const GaussianMixture& mixture, double eps, const Vector& x);

// Tweedie: grad log p_eps(x) = (D*_eps(x) - x) / eps.
Vector smoothed_prior_score(const GaussianMixture& mixture, double eps, const Vector& x);

// D*_eps gated to zero where x[0] <= threshold.
class MismatchedDenoiser {
 public:
  MismatchedDenoiser(std::shared_ptr<const ExactMmseDenoiser> base, double threshold)
      : base_(std::move(base)), threshold_(threshold) {}

  Vector operator()(const Vector& x) const;

  double threshold() const { return threshold_; }
  const ExactMmseDenoiser& base() const { return *base_; }

 private:
  std::shared_ptr<const ExactMmseDenoiser> base_;
  double threshold_;
};

Vector mismatched_denoise(const MismatchedDenoiser& denoiser, const Vector& x);

}  // namespace pnpula
