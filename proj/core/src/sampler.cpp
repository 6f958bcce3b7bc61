#include "pnpula/sampler.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pnpula/errors.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

constexpr double kDivergenceBound = 1e12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string forward_hash(const LinearForwardModel& fwd) {
  std::string bytes;
  bytes += std::to_string(fwd.output_dimension()) + "x" + std::to_string(fwd.input_dimension());
  for (Eigen::Index i = 0; i < fwd.matrix().rows(); ++i) {
    for (Eigen::Index j = 0; j < fwd.matrix().cols(); ++j) {
      bytes += "," + format_double(fwd.matrix()(i, j));
    }
  }
  bytes += ";" + format_double(fwd.sigma());
  return to_hex(fnv1a64(bytes));
}

nlohmann::json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

void validate_projection_set(const ProjectionSet& set) {
  std::visit(Overloaded{
                 [](const Ball& b) {
                   if (!(b.radius > 0.0) || !std::isfinite(b.radius) || !b.center.allFinite()) {
                     throw ConfigError("projection ball needs finite center and radius > 0");
                   }
                 },
                 [](const Box& b) {
                   if (b.low.size() != b.high.size() || b.low.size() == 0) {
                     throw ConfigError("projection box bounds have mismatched dimensions");
                   }
                   if (!b.low.allFinite() || !b.high.allFinite() ||
                       !(b.low.array() < b.high.array()).all()) {
                     throw ConfigError("projection box needs finite bounds with low < high");
                   }
                 }},
             set);
}

Vector project(const ProjectionSet& set, const Vector& x) {
  return std::visit(Overloaded{[&](const Ball& b) -> Vector {
                                 const Vector c = b.center.size() == 0 ? Vector::Zero(x.size())
                                                                       : b.center;
                                 if (c.size() != x.size()) {
                                   throw DimensionError("project: ball center dimension mismatch");
                                 }
                                 const Vector diff = x - c;
                                 const double r = diff.norm();
                                 if (r <= b.radius) return x;
                                 return c + diff * (b.radius / r);
                               },
                               [&](const Box& b) -> Vector {
                                 if (b.low.size() != x.size()) {
                                   throw DimensionError("project: box dimension mismatch");
                                 }
                                 return x.cwiseMax(b.low).cwiseMin(b.high);
                               }},
                    set);
}

bool contains(const ProjectionSet& set, const Vector& x) {
  return std::visit(Overloaded{[&](const Ball& b) {
                                 const Vector c = b.center.size() == 0 ? Vector::Zero(x.size())
                                                                       : b.center;
                                 return (x - c).norm() <= b.radius;
                               },
                               [&](const Box& b) {
                                 return (x.array() >= b.low.array()).all() &&
                                        (x.array() <= b.high.array()).all();
                               }},
                    set);
}

nlohmann::json to_json(const ProjectionSet& set) {
  return std::visit(Overloaded{[](const Ball& b) {
                                 return nlohmann::json{{"type", "ball"},
                                                       {"center", vector_json(b.center)},
                                                       {"radius", b.radius}};
                               },
                               [](const Box& b) {
                                 return nlohmann::json{{"type", "box"},
                                                       {"low", vector_json(b.low)},
                                                       {"high", vector_json(b.high)}};
                               }},
                    set);
}

ProjectionSet projection_set_from_json(const nlohmann::json& j, int dimension) {
  const auto to_vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  const std::string type = j.value("type", "ball");
  ProjectionSet set;
  if (type == "ball") {
    Ball b;
    b.radius = j.value("radius", 20.0);
    b.center = j.contains("center") && !j["center"].empty() ? to_vec(j["center"])
                                                             : Vector::Zero(dimension);
    set = b;
  } else if (type == "box") {
    if (!j.contains("low") || !j.contains("high")) throw ConfigError("box projection needs low/high");
    Box b;
    if (j["low"].is_number()) {
      b.low = Vector::Constant(dimension, j["low"].get<double>());
      b.high = Vector::Constant(dimension, j["high"].get<double>());
    } else {
      b.low = to_vec(j["low"]);
      b.high = to_vec(j["high"]);
    }
    set = b;
  } else {
    throw ConfigError("unknown projection type '" + type + "'");
  }
  validate_projection_set(set);
  return set;
}

void DriftConfig::validate() const {
  if (!(eps > 0.0) || !(alpha > 0.0) || !(lambda > 0.0)) {
    throw ConfigError("drift: eps, alpha and lambda must all be > 0");
  }
  validate_projection_set(projection);
  if (!denoiser.apply) throw ConfigError("drift: no denoiser supplied");
}

std::uint64_t ChainParams::kept() const {
  if (n_steps <= burn_in) return 0;
  return (n_steps - burn_in - 1) / thinning + 1;
}

void ChainParams::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("chain: delta must be > 0");
  if (n_steps == 0) throw ConfigError("chain: n_steps must be >= 1");
  if (thinning == 0) throw ConfigError("chain: thinning must be >= 1");
  if (burn_in >= n_steps) throw ConfigError("chain: burn_in must be < n_steps");
  if (x0.size() == 0 || !x0.allFinite()) throw ConfigError("chain: x0 must be a finite vector");
}

nlohmann::json to_json(const ChainParams& params) {
  return {{"delta", params.delta},     {"n_steps", params.n_steps},
          {"burn_in", params.burn_in}, {"thinning", params.thinning},
          {"seed", params.seed},       {"x0", vector_json(params.x0)}};
}

Vector drift(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
             const Vector& x) {
  Vector b = likelihood_score(fwd, y, x);
  const Vector dx = config.denoiser.apply(x);
  if (dx.size() != x.size()) throw DimensionError("drift: denoiser changed dimension");
  b += (config.alpha / config.eps) * (dx - x);
  b += (project(config.projection, x) - x) / config.lambda;
  return b;
}

Vector ula_step(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
                const Vector& x, double delta, const Vector& noise) {
  if (noise.size() != x.size()) throw DimensionError("ula_step: noise dimension mismatch");
  Vector next = x + delta * drift(config, fwd, y, x) + std::sqrt(2.0 * delta) * noise;
  if (!next.allFinite()) {
    throw DivergenceError("ula_step produced a non-finite state (delta=" + format_double(delta) +
                          ", eps=" + format_double(config.eps) +
                          ", alpha=" + format_double(config.alpha) +
                          ", lambda=" + format_double(config.lambda) + ")");
  }
  return next;
}

SampleSet run_chain(const DriftConfig& config, const LinearForwardModel& fwd, const Vector& y,
                    const ChainParams& params) {
  config.validate();
  params.validate();
  if (params.x0.size() != fwd.input_dimension()) {
    throw DimensionError("run_chain: x0 dimension does not match forward model");
  }
  const int d = static_cast<int>(params.x0.size());
  RowMatrix pts(static_cast<Eigen::Index>(params.kept()), d);
  std::vector<std::uint64_t> steps;
  steps.reserve(params.kept());

  Rng rng = make_rng(params.seed);
  std::normal_distribution<double> normal;
  Vector x = params.x0;
  Vector noise(d);
  std::uint64_t projection_active = 0;
  for (std::uint64_t k = 1; k <= params.n_steps; ++k) {
    for (int j = 0; j < d; ++j) noise[j] = normal(rng);
    if (!contains(config.projection, x)) ++projection_active;
    try {
      x = ula_step(config, fwd, y, x, params.delta, noise);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(k));
    }
    if (x.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("chain diverged at step " + std::to_string(k) +
                            " (|x| > 1e12, delta=" + format_double(params.delta) + ")");
    }
    if (k > params.burn_in && (k - params.burn_in - 1) % params.thinning == 0) {
      pts.row(static_cast<Eigen::Index>(steps.size())) = x.transpose();
      steps.push_back(k);
    }
  }

  nlohmann::json meta = {
      {"source", "run_chain"},
      {"chain", to_json(params)},
      {"drift",
       {{"eps", config.eps},
        {"alpha", config.alpha},
        {"lambda", config.lambda},
        {"projection", to_json(config.projection)},
        {"denoiser", config.denoiser.identity}}},
      {"observation", vector_json(y)},
      {"forward_hash", forward_hash(fwd)},
      {"projection_active_steps", projection_active},
  };
  return SampleSet(std::move(pts), std::move(steps), std::move(meta));
}

double max_step_size(const DriftConfig& config, const LinearForwardModel& fwd,
                     double denoiser_lipschitz) {
  const double l = lipschitz_constant(fwd);
  return 1.0 / (3.0 * (l + (denoiser_lipschitz + 1.0) / config.eps + 1.0 / config.lambda));
}

RecommendedParams recommended_params(double sigma, double alpha, double eps) {
  if (!(sigma > 0.0) || !(alpha > 0.0) || !(eps > 0.0)) {
    throw ConfigError("recommended_params: sigma, alpha and eps must be > 0");
  }
  const double prior_term = alpha / (eps * eps);
  const double inv_var = 1.0 / (sigma * sigma);
  const double lambda = 1.0 / (2.0 * (2.0 * inv_var + prior_term));
  const double delta = 1.0 / (3.0 * (inv_var + 1.0 / lambda + prior_term));
  return {lambda, delta};
}

}  // namespace pnpula
