#include "pnpula/validation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "pnpula/errors.hpp"
#include "pnpula/oracles.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

using nlohmann::json;

constexpr double kQuadratureTol = 1e-4;
constexpr double kImportanceSigmas = 3.0;
constexpr std::size_t kImportanceDraws = 1000000;
constexpr double kScoreTol = 1e-5;
constexpr double kScoreStep = 1e-5;
constexpr double kTweedieTol = 1e-8;
constexpr double kConjugateMeanTol = 0.05;
constexpr double kConjugateVarTol = 0.05;
constexpr double kTranslationSigmas = 2.0;
constexpr double kLikelihoodTol = 1e-6;
constexpr double kSpectralTol = 1e-6;

// Conjugate chain: delta = 1e-3, 2e5 retained samples, one kept every 20 steps.
constexpr double kConjugateDelta = 1e-3;
constexpr double kConjugateEps = 1e-3;
constexpr std::uint64_t kConjugateKept = 200000;
constexpr std::uint64_t kConjugateThinning = 20;
constexpr std::uint64_t kConjugateBurnIn = 10000;

bool same_double(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b) ||
         (std::isnan(a) && std::isnan(b));
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

// Relative error with the denominator floored at 1, so that near-zero
// reference values are compared absolutely.
double rel_error(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(want.norm(), 1.0);
}

CheckResult upper_bound_check(std::string name, double measured, double threshold,
                              std::string detail) {
  return {std::move(name), std::isfinite(measured) && measured < threshold, measured, threshold,
          std::move(detail)};
}

std::string fmt(double v) { return format_double(v); }

std::string fmt(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + ")";
}

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

std::vector<Vector> score_points() {
  return {vec2(0.5, 0.2), vec2(1.0, -0.5), vec2(-2.0, 1.5), vec2(0.3, 2.2), vec2(2.5, -1.0)};
}

struct Suite {
  const ValidationOptions& opt;
  GaussianMixture ridges = crossed_ridges_mixture();
  double eps = 0.05;

  Vector offset(const Vector& v) const {
    return opt.fault_inject ? Vector((v.array() + kFaultOffset).matrix()) : v;
  }

  CheckResult mmse_quadrature() const {
    const ExactMmseDenoiser den(ridges, eps);
    double worst = 0.0;
    Vector worst_z;
    for (const double a : {-3.0, 0.0, 3.0}) {
      for (const double b : {-3.0, 0.0, 3.0}) {
        const Vector z = vec2(a, b);
        const double e = rel_error(offset(den(z)), quadrature_mmse(ridges, eps, z));
        if (e >= worst) {
          worst = e;
          worst_z = z;
        }
      }
    }
    return upper_bound_check("mmse_quadrature", worst, kQuadratureTol,
                             "max relative error over 9 grid points, worst at z=" + fmt(worst_z));
  }

  CheckResult posterior_importance() const {
    const auto fwd = LinearForwardModel::scaled_identity(2, 1.0, 1.0);
    const Vector y = vec2(0.0, 8.0);
    const Vector closed = gmm_posterior(ridges, fwd, y).mean();
    const auto is = importance_posterior_mean(ridges, fwd, y, kImportanceDraws,
                                              derive_seed(opt.seed, 0, "importance"));
    const double z = ((closed - is.mean).array() / is.std_error.array()).abs().maxCoeff();
    return upper_bound_check("posterior_importance", z, kImportanceSigmas,
                             "closed form " + fmt(closed) + " vs importance " + fmt(is.mean) +
                                 ", standard errors " + fmt(is.std_error) +
                                 ", ess " + fmt(is.ess));
  }

  CheckResult smoothed_score_fd() const {
    const GaussianMixture smooth = ridges.smoothed(eps);
    const ExactMmseDenoiser den(ridges, eps);
    double worst = 0.0;
    for (const auto& x : score_points()) {
      const Vector score = (offset(den(x)) - x) / eps;
      const Vector fd = central_difference_gradient(
          [&](const Vector& p) { return gmm_log_density(smooth, p); }, x, kScoreStep);
      worst = std::max(worst, (score - fd).norm() / fd.norm());
    }
    return upper_bound_check("smoothed_score_fd", worst, kScoreTol,
                             "max relative error at 5 points, central step " + fmt(kScoreStep));
  }

  CheckResult tweedie_identity() const {
    const GaussianMixture smooth = ridges.smoothed(eps);
    const ExactMmseDenoiser den(ridges, eps);
    Rng rng = make_rng(derive_seed(opt.seed, 0, "tweedie"));
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    auto points = score_points();
    for (int k = 0; k < 100; ++k) points.push_back(vec2(u(rng), u(rng)));
    double worst = 0.0;
    for (const auto& x : points) {
      const Vector tweedie = (offset(den(x)) - x) / eps;
      worst = std::max(worst, rel_error(tweedie, gmm_score(smooth, x)));
    }
    return upper_bound_check("tweedie_identity", worst, kTweedieTol,
                             "denoiser residual / eps vs analytic smoothed score, 105 points");
  }

  std::vector<CheckResult> conjugate_chain() const {
    const GaussianMixture prior({{1.0, Vector::Zero(2), Matrix::Identity(2, 2)}});
    const auto fwd = LinearForwardModel::scaled_identity(2, 1.0, 1.0);
    const Vector y = vec2(2.0, 4.0);
    auto den = std::make_shared<const ExactMmseDenoiser>(prior, kConjugateEps);
    DriftConfig cfg;
    cfg.eps = kConjugateEps;
    cfg.alpha = 1.0;
    cfg.lambda = 1.0 / (2.0 * (2.0 + cfg.alpha / cfg.eps));
    cfg.projection = Ball{Vector::Zero(2), 20.0};
    const bool fault = opt.fault_inject;
    cfg.denoiser = {"exact-mmse", [den, fault](const Vector& x) {
                      Vector d = (*den)(x);
                      if (fault) d.array() += kFaultOffset;
                      return d;
                    }};
    ChainParams p;
    p.delta = kConjugateDelta;
    p.burn_in = kConjugateBurnIn;
    p.thinning = kConjugateThinning;
    p.n_steps = kConjugateBurnIn + kConjugateKept * kConjugateThinning;
    p.seed = derive_seed(opt.seed, 0, "conjugate");
    p.x0 = Vector::Zero(2);
    const SampleSet s = run_chain(cfg, fwd, y, p);

    // Posterior N(y/2, I/2): trace of the covariance is 1.
    const Vector target = y / 2.0;
    const double target_var = 1.0;
    const Vector mean = mmse_estimate(s);
    const double var = variance_estimate(s);
    const double mean_err = (mean - target).cwiseAbs().maxCoeff();
    const double var_err = std::abs(var - target_var) / target_var;
    const std::string run = ", " + std::to_string(s.size()) + " samples, delta " +
                            fmt(p.delta) + ", thinning " + std::to_string(p.thinning);
    return {upper_bound_check("conjugate_chain_mean", mean_err, kConjugateMeanTol,
                              "chain mean " + fmt(mean) + " vs y/2 = " + fmt(target) + run),
            upper_bound_check("conjugate_chain_variance", var_err, kConjugateVarTol,
                              "total variance " + fmt(var) + " vs " + fmt(target_var) + run)};
  }

  CheckResult assignment_brute_force() const {
    Rng rng = make_rng(derive_seed(opt.seed, 0, "assignment"));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int mismatches = 0;
    int instances = 0;
    for (std::size_t n = 1; n <= 7; ++n) {
      for (int rep = 0; rep < 60; ++rep, ++instances) {
        // Every other instance uses coarsely rounded coordinates to create ties.
        const bool ties = rep % 2 == 1;
        RowMatrix a(static_cast<Eigen::Index>(n), 2), b(static_cast<Eigen::Index>(n), 2);
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          for (int k = 0; k < 2; ++k) {
            const double va = u(rng), vb = u(rng);
            a(i, k) = ties ? std::round(va * 4.0) / 4.0 : va;
            b(i, k) = ties ? std::round(vb * 4.0) / 4.0 : vb;
          }
        }
        std::vector<double> cost(n * n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < 2; ++k) {
              const double diff = a(static_cast<Eigen::Index>(i), k) - b(static_cast<Eigen::Index>(j), k);
              s += diff * diff;
            }
            cost[i * n + j] = std::sqrt(s);
          }
        }
        const double brute = brute_force_assignment_cost(cost, n) / static_cast<double>(n);
        const double exact = wasserstein1_exact(SampleSet(a, {}), SampleSet(b, {})).value;
        if (exact != brute) ++mismatches;
      }
    }
    return {"assignment_brute_force", mismatches == 0, static_cast<double>(mismatches), 0.0,
            std::to_string(instances) + " random clouds with n <= 7, exact equality required"};
  }

  CheckResult w1_translation() const {
    const GaussianMixture g({{1.0, Vector::Zero(2), Matrix::Identity(2, 2)}});
    const SampleSet a = gmm_sample(g, 10000, derive_seed(opt.seed, 0, "translation"));
    RowMatrix shifted = a.points();
    const Vector v = vec2(3.0, 4.0);
    shifted.rowwise() += v.transpose();
    const SampleSet b(shifted, {});
    const auto est = wasserstein1_estimate(a, b, 2048, 8, derive_seed(opt.seed, 0, "translation-metric"));
    const double z = std::abs(est.value - v.norm()) / est.std_error;
    return upper_bound_check("w1_translation", z, kTranslationSigmas,
                             "estimate " + fmt(est.value) + " +- " + fmt(est.std_error) +
                                 " vs |v| = 5, in standard errors");
  }

  CheckResult likelihood_score_fd() const {
    Rng rng = make_rng(derive_seed(opt.seed, 0, "likelihood"));
    std::normal_distribution<double> n01;
    Matrix a(3, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n01(rng);
    const LinearForwardModel fwd(a, 0.7);
    Vector y(3);
    for (int i = 0; i < 3; ++i) y[i] = n01(rng);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Vector x = vec2(n01(rng), n01(rng));
      const Vector fd = central_difference_gradient(
          [&](const Vector& p) { return log_likelihood(fwd, y, p); }, x, kScoreStep);
      worst = std::max(worst, rel_error(likelihood_score(fwd, y, x), fd));
    }
    return upper_bound_check("likelihood_score_fd", worst, kLikelihoodTol,
                             "random 3x2 operator, sigma 0.7, 5 points");
  }

  CheckResult spectral_constants() const {
    Rng rng = make_rng(derive_seed(opt.seed, 0, "spectral"));
    std::normal_distribution<double> n01;
    Matrix a(2, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n01(rng);
    const LinearForwardModel fwd(a, 0.5);
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    constexpr int kAngles = 100000;
    for (int k = 0; k < kAngles; ++k) {
      const double t = std::numbers::pi * k / kAngles;
      const Vector dir = vec2(std::cos(t), std::sin(t));
      const double q = dir.dot(fwd.normal_matrix() * dir);
      hi = std::max(hi, q);
      lo = std::min(lo, q);
    }
    const double l = lipschitz_constant(fwd);
    const double m = concavity_constant(fwd);
    const double err = std::max(std::abs(l - hi), std::abs(m - lo)) / l;
    return upper_bound_check("spectral_constants", err, kSpectralTol,
                             "L=" + fmt(l) + ", m=" + fmt(m) + " vs Rayleigh quotient range [" +
                                 fmt(lo) + ", " + fmt(hi) + "]");
  }
};

}  // namespace

bool CheckResult::operator==(const CheckResult& o) const {
  return name == o.name && passed == o.passed && same_double(measured, o.measured) &&
         same_double(threshold, o.threshold) && detail == o.detail;
}

bool ValidationReport::all_passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

bool ValidationReport::operator==(const ValidationReport& o) const {
  return checks == o.checks && same_double(seconds, o.seconds);
}

ValidationReport run_validation_suite(const ValidationOptions& options,
                                      const std::function<void(std::string_view)>& progress) {
  const auto start = std::chrono::steady_clock::now();
  Suite suite{options};
  ValidationReport report;
  const auto add = [&](CheckResult c) {
    if (progress) {
      progress((c.passed ? "PASS " : "FAIL ") + c.name + " measured=" + fmt(c.measured) +
               " threshold=" + fmt(c.threshold));
    }
    report.checks.push_back(std::move(c));
  };
  const auto guarded = [&](const char* name, auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      add({name, false, std::numeric_limits<double>::quiet_NaN(), 0.0,
           std::string("error: ") + e.what()});
    }
  };
  guarded("mmse_quadrature", [&] { add(suite.mmse_quadrature()); });
  guarded("posterior_importance", [&] { add(suite.posterior_importance()); });
  guarded("smoothed_score_fd", [&] { add(suite.smoothed_score_fd()); });
  guarded("tweedie_identity", [&] { add(suite.tweedie_identity()); });
  guarded("conjugate_chain", [&] {
    for (auto& c : suite.conjugate_chain()) add(std::move(c));
  });
  guarded("assignment_brute_force", [&] { add(suite.assignment_brute_force()); });
  guarded("w1_translation", [&] { add(suite.w1_translation()); });
  guarded("likelihood_score_fd", [&] { add(suite.likelihood_score_fd()); });
  guarded("spectral_constants", [&] { add(suite.spectral_constants()); });
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

json to_json(const ValidationReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"measured", num(c.measured)},
                      {"threshold", num(c.threshold)},
                      {"detail", c.detail}});
  }
  return {{"schema_version", kSummarySchemaVersion},
          {"all_passed", report.all_passed()},
          {"seconds", report.seconds},
          {"checks", checks}};
}

ValidationReport validation_report_from_json(const json& j) {
  try {
    ValidationReport r;
    r.seconds = j.at("seconds").get<double>();
    for (const auto& c : j.at("checks")) {
      r.checks.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(),
                          num_from(c.at("measured")), num_from(c.at("threshold")),
                          c.at("detail").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("validation report: ") + e.what());
  }
}

}  // namespace pnpula
