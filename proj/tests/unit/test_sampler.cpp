#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "pnpula/errors.hpp"
#include "pnpula/gmm.hpp"
#include "pnpula/metrics.hpp"
#include "pnpula/rng.hpp"
#include "pnpula/sampler.hpp"

using namespace pnpula;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

Denoiser identity_denoiser() {
  return {"identity", [](const Vector& x) { return x; }};
}

Denoiser exact(const GaussianMixture& g, double eps) {
  auto d = std::make_shared<const ExactMmseDenoiser>(g, eps);
  return {"exact", [d](const Vector& x) { return (*d)(x); }};
}

GaussianMixture standard_normal() {
  return GaussianMixture({{1.0, Vector::Zero(2), Matrix::Identity(2, 2)}});
}

DriftConfig ridges_config() {
  DriftConfig c;
  c.eps = 0.05;
  c.alpha = 0.3;
  c.lambda = 0.0625;
  c.projection = Ball{Vector::Zero(2), 20.0};
  c.denoiser = exact(crossed_ridges_mixture(), 0.05);
  return c;
}

ChainParams ridges_chain(std::uint64_t seed) {
  ChainParams p;
  p.delta = 0.05;
  p.n_steps = 100000;
  p.seed = seed;
  p.x0 = Vector::Zero(2);
  return p;
}

// Conjugate setup: prior N(0, I), A = I, sigma = 1, alpha = 1.
DriftConfig conjugate_config(double eps) {
  DriftConfig c;
  c.eps = eps;
  c.alpha = 1.0;
  c.lambda = 1.0 / (2.0 * (2.0 + 1.0 / eps));
  c.projection = Ball{Vector::Zero(2), 20.0};
  c.denoiser = exact(standard_normal(), eps);
  return c;
}

}  // namespace

TEST(Project, Ball) {
  const ProjectionSet s = Ball{Vector::Zero(2), 1.0};
  EXPECT_EQ(project(s, v2(0.3, -0.4)), v2(0.3, -0.4));
  const Vector p = project(s, v2(3, 4));
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_NEAR(p[1], 0.8, 1e-15);
  EXPECT_TRUE(contains(s, p));
  const ProjectionSet shifted = Ball{v2(10, 0), 2.0};
  EXPECT_LT((project(shifted, v2(10, 5)) - v2(10, 2)).norm(), 1e-15);
}

TEST(Project, Box) {
  const ProjectionSet s = Box{v2(0, 0), v2(1, 1)};
  EXPECT_EQ(project(s, v2(-0.5, 0.7)), v2(0, 0.7));
  EXPECT_EQ(project(s, v2(0.2, 0.7)), v2(0.2, 0.7));
  EXPECT_EQ(project(s, v2(3, -2)), v2(1, 0));
}

TEST(Project, ValidatesSet) {
  EXPECT_THROW(validate_projection_set(Ball{Vector::Zero(2), 0.0}), ConfigError);
  EXPECT_THROW(validate_projection_set(Box{v2(0, 1), v2(1, 1)}), ConfigError);
  EXPECT_THROW(validate_projection_set(Box{v2(0, 0), Vector::Ones(3)}), ConfigError);
  EXPECT_NO_THROW(validate_projection_set(Box{v2(0, 0), v2(1, 1)}));
}

TEST(Project, JsonRoundTrip) {
  for (const ProjectionSet& s : {ProjectionSet(Ball{v2(1, 2), 3.5}), ProjectionSet(Box{v2(-1, 0), v2(2, 5)})}) {
    const auto back = projection_set_from_json(to_json(s), 2);
    EXPECT_EQ(to_json(back), to_json(s));
  }
  const auto def = projection_set_from_json(nlohmann::json{{"type", "ball"}, {"radius", 4}}, 3);
  EXPECT_EQ(std::get<Ball>(def).center, Vector::Zero(3));
  EXPECT_THROW(projection_set_from_json(nlohmann::json{{"type", "cone"}}, 2), ConfigError);
}

TEST(Drift, Examples) {
  // Score zero (x = y, A = I), identity denoiser, inside S: drift vanishes.
  DriftConfig c;
  c.eps = 0.1;
  c.lambda = 0.5;
  c.projection = Ball{Vector::Zero(2), 1.0};
  c.denoiser = identity_denoiser();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  EXPECT_EQ(drift(c, fwd, v2(0.2, 0.1), v2(0.2, 0.1)), Vector::Zero(2));

  // Outside the unit ball: (1/0.5) (Pi(x) - x) = (-2, 0).
  const Vector b = drift(c, fwd, v2(2, 0), v2(2, 0));
  EXPECT_NEAR(b[0], -2.0, 1e-15);
  EXPECT_EQ(b[1], 0.0);
}

TEST(Drift, DecompositionWithExactDenoiser) {
  DriftConfig c = ridges_config();
  c.alpha = 1.0;
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  const ExactMmseDenoiser den(crossed_ridges_mixture(), 0.05);
  for (const auto& x : {v2(0.5, 1), v2(-1, 3), v2(2, 2)}) {
    const Vector rest = drift(c, fwd, v2(0, 8), x) - likelihood_score(fwd, v2(0, 8), x);
    EXPECT_LT((rest - (den(x) - x) / 0.05).norm(), 1e-12);
  }
}

TEST(Drift, RejectsBadConfig) {
  DriftConfig c = ridges_config();
  c.eps = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ridges_config();
  c.denoiser.apply = nullptr;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ridges_config();
  c.denoiser = {"bad", [](const Vector&) { return Vector::Zero(3); }};
  EXPECT_THROW(drift(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 8), v2(0, 0)),
               DimensionError);
}

TEST(UlaStep, Examples) {
  DriftConfig c;
  c.eps = 0.1;
  c.projection = Ball{Vector::Zero(2), 10.0};
  c.denoiser = identity_denoiser();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  // Fixed point: zero drift and zero noise.
  EXPECT_EQ(ula_step(c, fwd, v2(1, 2), v2(1, 2), 0.3, Vector::Zero(2)), v2(1, 2));
  // Deterministic Euler step.
  const Vector x = v2(0.5, -0.5);
  const Vector b = drift(c, fwd, v2(1, 2), x);
  EXPECT_EQ(ula_step(c, fwd, v2(1, 2), x, 0.3, Vector::Zero(2)), Vector(x + 0.3 * b));
  // Noise enters with sqrt(2 delta).
  const Vector z = v2(1, -1);
  EXPECT_LT((ula_step(c, fwd, v2(1, 2), x, 0.3, z) - (x + 0.3 * b + std::sqrt(0.6) * z)).norm(),
            1e-15);
}

TEST(UlaStep, RidgesFirstStepByHand) {
  const DriftConfig c = ridges_config();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  // At x = 0: likelihood score (0, 8); the symmetric mixture's denoiser maps 0
  // to 0; the projection is inactive. So b = (0, 8).
  const Vector next = ula_step(c, fwd, v2(0, 8), Vector::Zero(2), 0.05, Vector::Zero(2));
  EXPECT_LT((next - v2(0, 0.4)).norm(), 1e-15);
  const Vector noisy = ula_step(c, fwd, v2(0, 8), Vector::Zero(2), 0.05, v2(1, 2));
  EXPECT_LT((noisy - (v2(0, 0.4) + std::sqrt(0.1) * v2(1, 2))).norm(), 1e-15);
}

TEST(UlaStep, NonFiniteStateThrows) {
  DriftConfig c;
  c.projection = Ball{Vector::Zero(2), 1.0};
  c.denoiser = {"nan", [](const Vector& x) { return Vector(x.array() * std::nan("")); }};
  try {
    ula_step(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 0), v2(0.1, 0.1), 0.25,
             Vector::Zero(2));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("delta=0.25"), std::string::npos);
  }
}

TEST(ChainParams, KeptAndValidation) {
  ChainParams p;
  p.x0 = Vector::Zero(2);
  p.n_steps = 100;
  p.burn_in = 10;
  p.thinning = 7;
  EXPECT_EQ(p.kept(), 13u);  // steps 11, 18, ..., 95
  EXPECT_LT(p.burn_in + p.thinning * (p.kept() - 1), p.n_steps);
  p.burn_in = 100;
  EXPECT_THROW(p.validate(), ConfigError);
  p.burn_in = 0;
  p.thinning = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p.thinning = 1;
  p.delta = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(RunChain, SingleStepEqualsUlaStep) {
  const DriftConfig c = ridges_config();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  ChainParams p = ridges_chain(77);
  p.n_steps = 1;
  const auto s = run_chain(c, fwd, v2(0, 8), p);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.steps()[0], 1u);
  // Replay the first normal draw of the chain's stream.
  Rng rng = make_rng(77);
  std::normal_distribution<double> n;
  Vector z(2);
  z[0] = n(rng);
  z[1] = n(rng);
  EXPECT_EQ(s.point(0), ula_step(c, fwd, v2(0, 8), Vector::Zero(2), 0.05, z));
}

TEST(RunChain, BurnInAndThinningSteps) {
  const DriftConfig c = ridges_config();
  ChainParams p = ridges_chain(5);
  p.n_steps = 50;
  p.burn_in = 9;
  p.thinning = 4;
  const auto s = run_chain(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 8), p);
  ASSERT_EQ(s.size(), p.kept());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.steps()[i], 10 + 4 * i);
  // Same trajectory as the unthinned chain at the recorded steps.
  ChainParams full = p;
  full.burn_in = 0;
  full.thinning = 1;
  const auto f = run_chain(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 8), full);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.point(i), f.point(s.steps()[i] - 1));
}

TEST(RunChain, Deterministic) {
  const DriftConfig c = ridges_config();
  ChainParams p = ridges_chain(9);
  p.n_steps = 2000;
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  EXPECT_EQ(run_chain(c, fwd, v2(0, 8), p), run_chain(c, fwd, v2(0, 8), p));
  ChainParams q = p;
  q.seed = 10;
  EXPECT_FALSE(run_chain(c, fwd, v2(0, 8), p).points() == run_chain(c, fwd, v2(0, 8), q).points());
}

TEST(RunChain, MetaRecordsParameters) {
  const DriftConfig c = ridges_config();
  ChainParams p = ridges_chain(9);
  p.n_steps = 10;
  const auto s = run_chain(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 8), p);
  const auto& m = s.meta();
  EXPECT_EQ(m["chain"]["seed"].get<std::uint64_t>(), 9u);
  EXPECT_EQ(m["chain"]["delta"].get<double>(), 0.05);
  EXPECT_EQ(m["drift"]["alpha"].get<double>(), 0.3);
  EXPECT_EQ(m["drift"]["denoiser"].get<std::string>(), "exact");
  EXPECT_EQ(m["drift"]["projection"]["radius"].get<double>(), 20.0);
  EXPECT_TRUE(m.contains("forward_hash"));
  EXPECT_EQ(m["observation"], nlohmann::json({0.0, 8.0}));
}

TEST(RunChain, DivergenceReportsStep) {
  DriftConfig c = ridges_config();
  ChainParams p = ridges_chain(1);
  p.delta = 5.0;
  p.n_steps = 10000;
  try {
    run_chain(c, LinearForwardModel::scaled_identity(2, 1, 1), v2(0, 8), p);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(RunChain, ConjugatePosterior) {
  // Posterior N(y/2, I/2). 2e5 retained samples, burn-in 5e4, thinning 20.
  const DriftConfig c = conjugate_config(1e-3);
  ChainParams p;
  p.delta = 1e-3;
  p.burn_in = 50000;
  p.thinning = 20;
  p.n_steps = p.burn_in + 200000 * p.thinning;
  p.seed = derive_seed(12345, 0, "unit-conjugate");
  p.x0 = Vector::Zero(2);
  const Vector y = v2(2, 4);
  const auto s = run_chain(c, LinearForwardModel::scaled_identity(2, 1, 1), y, p);
  ASSERT_EQ(s.size(), 200000u);
  const Vector mean = mmse_estimate(s);
  EXPECT_LT((mean - y / 2).cwiseAbs().maxCoeff(), 0.05);
  const Matrix centered = s.points().rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(s.size());
  EXPECT_LT((cov - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(RunChain, ConjugateStationarity) {
  // Start 200 chains at exact posterior draws; after 1e4 steps the ensemble
  // mean must still match the posterior mean.
  const DriftConfig c = conjugate_config(1e-3);
  const Vector y = v2(2, 4);
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  const GaussianMixture post({{1.0, y / 2, 0.5 * Matrix::Identity(2, 2)}});
  const auto starts = gmm_sample(post, 200, 31);
  RowMatrix finals(200, 2);
  for (std::size_t i = 0; i < 200; ++i) {
    ChainParams p;
    p.delta = 1e-3;
    p.n_steps = 10000;
    p.burn_in = 9999;
    p.seed = derive_seed(31, i, "restart");
    p.x0 = starts.point(i);
    finals.row(static_cast<Eigen::Index>(i)) = run_chain(c, fwd, y, p).row(0);
  }
  const Vector mean = mmse_estimate(SampleSet(finals, {}));
  // Ensemble standard error sqrt(0.5 / 200) = 0.05; allow 4 of them.
  EXPECT_LT((mean - y / 2).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_NEAR(variance_estimate(SampleSet(finals, {})), 1.0, 0.4);
}

TEST(RunChain, RidgesSetupReferenceChain) {
  const DriftConfig c = ridges_config();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  const Vector y = v2(0, 8);
  const auto s = run_chain(c, fwd, y, ridges_chain(derive_seed(12345, 0, "unit-ridges")));
  ASSERT_EQ(s.size(), 100000u);
  EXPECT_TRUE(s.points().allFinite());

  // Every posterior mode with closed-form weight above 1% receives more than
  // 1% of the samples; occupancy follows the closed-form weights.
  const auto post = gmm_posterior(crossed_ridges_mixture(), fwd, y);
  std::vector<double> occupancy(post.components.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) occupancy[post.dominant_component(s.point(i))] += 1;
  for (std::size_t k = 0; k < occupancy.size(); ++k) {
    occupancy[k] /= static_cast<double>(s.size());
    if (post.components[k].weight > 0.01) {
      EXPECT_GT(occupancy[k], 0.01) << "mode " << k;
    }
    EXPECT_NEAR(occupancy[k], post.components[k].weight, 0.01) << "mode " << k;
  }

  // Projection activity: essentially never.
  EXPECT_LT(s.meta()["projection_active_steps"].get<double>(), 1e-3 * 100000);

  // All samples inside S inflated by 3 max(sqrt(2 delta), delta * drift bound).
  double bound = 0.0;
  for (std::size_t i = 0; i < s.size(); i += 97) bound = std::max(bound, drift(c, fwd, y, s.point(i)).norm());
  const double inflate = 3 * std::max(std::sqrt(0.1), 0.05 * bound);
  EXPECT_LE(s.points().rowwise().norm().maxCoeff(), 20.0 + inflate);
}

TEST(Drift, LipschitzBound) {
  const DriftConfig c = ridges_config();
  const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
  const Vector y = v2(0, 8);
  const auto prior = gmm_sample(crossed_ridges_mixture(), 20000, 4);
  auto den = std::make_shared<const ExactMmseDenoiser>(crossed_ridges_mixture(), 0.05);
  const double m = lipschitz_estimate([&](const Vector& x) { return (*den)(x); }, prior, 10000, 5);
  const double lb = lipschitz_constant(fwd) + c.alpha * (m + 1) / c.eps + 1 / c.lambda;
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> pick(0, prior.size() - 1);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Vector a = prior.point(pick(rng)), b = prior.point(pick(rng));
    if ((a - b).norm() == 0.0) continue;
    worst = std::max(worst, (drift(c, fwd, y, a) - drift(c, fwd, y, b)).norm() / (a - b).norm());
  }
  EXPECT_LE(worst, lb + 1e-6);
}

TEST(MaxStepSize, Examples) {
  DriftConfig c;
  c.eps = 1.0;
  c.lambda = 1.0;
  c.denoiser = identity_denoiser();
  EXPECT_NEAR(max_step_size(c, LinearForwardModel::scaled_identity(2, 1, 1), 1.0), 1.0 / 12, 1e-16);
  EXPECT_NEAR(max_step_size(c, LinearForwardModel(Matrix::Zero(2, 2), 1.0), 0.0), 1.0 / 6, 1e-16);
}

TEST(RecommendedParams, Examples) {
  const auto r = recommended_params(1.0, 1.0, 1.0);
  EXPECT_NEAR(r.lambda, 1.0 / 6, 1e-16);
  EXPECT_NEAR(r.delta, 1.0 / 24, 1e-16);

  const double sigma = 1.0 / 255, eps = 5.0 / 255;
  const auto q = recommended_params(sigma, 1.0, eps);
  // 1/sigma^2 = 65025, alpha/eps^2 = 2601.
  const double lambda = 1.0 / (2.0 * (2.0 * 65025.0 + 2601.0));
  EXPECT_NEAR(q.lambda, lambda, 1e-12 * lambda);
  const double delta = 1.0 / (3.0 * (65025.0 + 1.0 / lambda + 2601.0));
  EXPECT_NEAR(q.delta, delta, 1e-12 * delta);
  EXPECT_THROW(recommended_params(0.0, 1.0, 1.0), ConfigError);
}

TEST(RecommendedParams, StepSizeHypothesisOnGaussianModel) {
  // 2 lambda (L + (M + 1)/eps - min(m, 0)) <= 1 for prior N(0, I), A = I.
  for (const double eps : {0.01, 0.05, 0.5, 1.0}) {
    const auto fwd = LinearForwardModel::scaled_identity(2, 1, 1);
    const auto r = recommended_params(1.0, 1.0, eps);
    const double m_den = 1.0 / (1.0 + eps);  // Lipschitz constant of x / (1 + eps)
    const double lhs = 2 * r.lambda *
                       (lipschitz_constant(fwd) + (m_den + 1) / eps - std::min(concavity_constant(fwd), 0.0));
    EXPECT_LE(lhs, 1.0) << "eps=" << eps;
  }
}
