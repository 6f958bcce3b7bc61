#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pnpula/linalg.hpp"
#include "pnpula/sample_set.hpp"

namespace pnpula {

using VectorField = std::function<Vector(const Vector&)>;

struct PseudometricReport {
  double value = 0.0;
  std::size_t n_points = 0;
  std::string integrating_distribution;  // "posterior-ref" or "prior"
};

// sqrt(mean_k ||f1(s_k) - f2(s_k)||^2) over the reference chain's samples.
PseudometricReport posterior_l2(const VectorField& f1, const VectorField& f2,
                                const SampleSet& reference_samples);

// Same quantity integrated against prior samples.
PseudometricReport prior_l2(const VectorField& f1, const VectorField& f2,
                            const SampleSet& prior_samples);

enum class TransportMethod { kExactAssignment, kSubsampleAverage };

std::string to_string(TransportMethod method);

struct TransportEstimate {
  double value = 0.0;
  TransportMethod method = TransportMethod::kExactAssignment;
  std::size_t n_used = 0;
  double std_error = 0.0;
};

// Largest cloud accepted by wasserstein1_exact.
inline constexpr std::size_t kMaxExactTransportSize = 4096;

// W1 between two equal-size empirical clouds: optimal assignment cost / n
// under Euclidean ground cost.
TransportEstimate wasserstein1_exact(const SampleSet& a, const SampleSet& b);

// Mean of wasserstein1_exact over `n_repeats` pairs of independent uniform
// subsamples (without replacement) of size n_sub; std_error is the standard
// error of that mean across repeats (0 when n_repeats == 1).
TransportEstimate wasserstein1_estimate(const SampleSet& a, const SampleSet& b, std::size_t n_sub,
                                        std::size_t n_repeats, std::uint64_t seed);

struct HistogramGrid {
  std::array<double, 2> low{};
  std::array<double, 2> high{};
  std::array<int, 2> bins{50, 50};
};

// Half the L1 distance between normalized 2D histograms. Points outside the
// grid share one overflow cell, so the result is always in [0, 1].
double tv_histogram(const SampleSet& a, const SampleSet& b, const HistogramGrid& grid);

Vector mmse_estimate(const SampleSet& samples);

// E||x||^2 - ||E x||^2.
double variance_estimate(const SampleSet& samples);

// Lower bound on the Lipschitz constant of f: the largest difference quotient
// over random pairs of domain samples and over near-coincident pairs
// (perturbation scale 1e-4) around random domain samples.
double lipschitz_estimate(const VectorField& f, const SampleSet& domain_samples,
                          std::size_t n_pairs, std::uint64_t seed);

double pearson_r(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of average ranks.
double spearman_r(std::span<const double> xs, std::span<const double> ys);

}  // namespace pnpula
