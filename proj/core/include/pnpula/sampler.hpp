#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "pnpula/forward.hpp"
#include "pnpula/linalg.hpp"
#include "pnpula/sample_set.hpp"

namespace pnpula {

// Euclidean ball {x : ||x - center|| <= radius}.
struct Ball {
  Vector center;
  double radius = 1.0;
};

// Axis-aligned box [low, high] (componentwise).
struct Box {
  Vector low;
  Vector high;
};

using ProjectionSet = std::variant<Ball, Box>;

// Throws ConfigError unless the set is nonempty, convex and compact.
void validate_projection_set(const ProjectionSet& set);

// Orthogonal projection onto S: radial clip for a ball, clamp for a box.
Vector project(const ProjectionSet& set, const Vector& x);

bool contains(const ProjectionSet& set, const Vector& x);

nlohmann::json to_json(const ProjectionSet& set);
ProjectionSet projection_set_from_json(const nlohmann::json& j, int dimension);

// Any map R^d -> R^d standing in for D_eps, with a label recorded in chain provenance.
struct Denoiser {
  std::string identity;
  std::function<Vector(const Vector&)> apply;
};

// Assembled PnP-ULA drift:
//   b(x) = grad log p(y|x) + (alpha/eps) (D(x) - x) + (1/lambda) (Pi_S(x) - x).
struct DriftConfig {
  double eps = 0.05;
  double alpha = 1.0;
  double lambda = 1.0;
  ProjectionSet projection = Ball{};
  Denoiser denoiser;

  void validate() const;
};

struct ChainParams {
  double delta = 0.05;
  std::uint64_t n_steps = 1;
  std::uint64_t burn_in = 0;
  std::uint64_t thinning = 1;
  std::uint64_t seed = 0;
  Vector x0;

  // Number of states recorded by run_chain.
  std::uint64_t kept() const;
  void validate() const;
};

nlohmann::json to_json(const ChainParams& params);

Vector drift(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
             const Vector& x);

// x + delta * b(x) + sqrt(2 delta) * noise. `noise` is a caller-supplied
// standard normal draw. Throws DivergenceError on a non-finite result.
Vector ula_step(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
                const Vector& x, double delta, const Vector& noise);

// Iterates ula_step n_steps times from x0 and records every `thinning`-th
// state after the first `burn_in` steps. The recorded step index is the
// 1-based iteration count. Meta carries the full parameter record plus
// `projection_active_steps` (steps whose pre-update state lay outside S).
SampleSet run_chain(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
                    const ChainParams& params);

// delta_bar = (1/3) (L + (M + 1)/eps + 1/lambda)^-1, with M the denoiser
// Lipschitz constant (analytic or estimated).
double max_step_size(const DriftConfig& config, const LinearForwardModel& fwd,
                     double denoiser_lipschitz);

struct RecommendedParams {
  double lambda;
  double delta;
};

// lambda = 1 / (2 (2/sigma^2 + alpha/eps^2)),
// delta  = 1 / (3 (1/sigma^2 + 1/lambda + alpha/eps^2)).
RecommendedParams recommended_params(double sigma, double alpha, double eps);

}  // namespace pnpula
