// pnpula: run denoiser / forward-model sweeps, single chains and the oracle
// validation suite from a JSON experiment config.
//
// Exit status: 0 success, 1 failed checks or runtime failure, 2 bad config.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "pnpula/errors.hpp"
#include "pnpula/experiment.hpp"
#include "pnpula/model_io.hpp"
#include "pnpula/validation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> n_steps;
  std::optional<std::size_t> n_sub;
  std::optional<std::size_t> n_repeats;
  bool quiet = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "concurrent sweep points")->check(CLI::PositiveNumber);
  cmd->add_option("--n-steps", o.n_steps, "chain iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--n-sub", o.n_sub, "W1 subsample size")->check(CLI::PositiveNumber);
  cmd->add_option("--n-repeats", o.n_repeats, "W1 subsample repeats")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", o.quiet, "no progress on stderr");
}

pnpula::ExperimentSpec load(const std::string& path, pnpula::ExperimentKind kind,
                            const Overrides& o) {
  pnpula::ExperimentSpec spec = pnpula::load_experiment_spec(path);
  if (spec.kind != kind) {
    throw pnpula::ConfigError(path + " describes a " + pnpula::to_string(spec.kind) +
                              " experiment, not " + pnpula::to_string(kind));
  }
  if (o.seed) spec.seed = *o.seed;
  if (o.out) spec.output = *o.out;
  if (o.workers) spec.workers = *o.workers;
  if (o.n_steps) spec.chain.n_steps = *o.n_steps;
  if (o.n_sub) spec.metrics.n_sub = *o.n_sub;
  if (o.n_repeats) spec.metrics.n_repeats = *o.n_repeats;
  spec.validate();
  return spec;
}

pnpula::ProgressFn progress_fn(bool quiet) {
  if (quiet) return {};
  return [](std::string_view msg) { std::cerr << msg << std::endl; };
}

std::string show(double v) { return std::isnan(v) ? "n/a" : pnpula::format_double(v); }

int run_sweep(const std::string& config, pnpula::ExperimentKind kind, const Overrides& o) {
  const auto spec = load(config, kind, o);
  const auto result = kind == pnpula::ExperimentKind::kDenoiserSweep
                          ? pnpula::run_denoiser_sweep(spec, progress_fn(o.quiet))
                          : pnpula::run_forward_sweep(spec, progress_fn(o.quiet));
  const auto manifest = pnpula::write_results(result, spec.output);
  std::size_t failed = 0;
  for (const auto& r : result.rows) failed += r.ok() ? 0 : 1;
  std::cout << "rows " << result.rows.size() << " (failed " << failed << ")\n"
            << "bias floor W1 " << show(result.bias_floor.value) << " +- "
            << show(result.bias_floor.std_error) << "\n"
            << "r(posterior-L2, W1) " << show(result.summary.r_posterior_w1) << "\n"
            << "r(prior-L2, W1) " << show(result.summary.r_prior_w1) << "\n";
  if (kind == pnpula::ExperimentKind::kForwardSweep) {
    std::cout << "spearman(|A(s)-A(s*)|, W1) " << show(result.summary.spearman_operator_w1) << "\n";
  }
  std::cout << "wrote " << manifest.files.size() << " files to " << spec.output.string() << "\n";
  return kExitOk;
}

int run_chain(const std::string& config, const Overrides& o) {
  const auto spec = load(config, pnpula::ExperimentKind::kChainRun, o);
  const auto samples = pnpula::run_chain_experiment(spec);
  pnpula::write_chain_results(samples, spec, spec.output);
  const auto mean = pnpula::mmse_estimate(samples);
  std::cout << "samples " << samples.size() << "\nmean";
  for (Eigen::Index i = 0; i < mean.size(); ++i) std::cout << ' ' << show(mean[i]);
  std::cout << "\nvariance " << show(pnpula::variance_estimate(samples)) << "\n"
            << "wrote " << (spec.output / "samples.csv").string() << "\n";
  return kExitOk;
}

int run_validate(bool fault_inject, const Overrides& o) {
  pnpula::ValidationOptions opt;
  opt.fault_inject = fault_inject;
  if (o.seed) opt.seed = *o.seed;
  const auto report = pnpula::run_validation_suite(opt, progress_fn(o.quiet));
  for (const auto& c : report.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured=" << show(c.measured)
              << "  threshold=" << show(c.threshold) << "  " << c.detail << "\n";
  }
  if (o.out) {
    std::filesystem::create_directories(*o.out);
    pnpula::write_json_file(pnpula::to_json(report),
                            std::filesystem::path(*o.out) / "validation.json");
  }
  std::cout << (report.all_passed() ? "all checks passed" : "validation FAILED") << " ("
            << show(report.seconds) << " s)\n";
  return report.all_passed() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-and-play ULA experiments on Gaussian-mixture priors"};
  app.require_subcommand(1);

  Overrides o;
  std::string config;
  bool fault_inject = false;

  auto* dsweep = app.add_subcommand("denoiser-sweep", "mismatched-denoiser threshold sweep");
  dsweep->add_option("config", config, "experiment config (JSON)")->required();
  add_overrides(dsweep, o);

  auto* fsweep = app.add_subcommand("forward-sweep", "scaled forward-operator sweep");
  fsweep->add_option("config", config, "experiment config (JSON)")->required();
  add_overrides(fsweep, o);

  auto* chain = app.add_subcommand("chain-run", "single PnP-ULA chain");
  chain->add_option("config", config, "experiment config (JSON)")->required();
  add_overrides(chain, o);

  auto* validate = app.add_subcommand("validate", "oracle validation suite");
  validate->add_flag("--fault-inject", fault_inject, "perturb the denoiser by 1e-3");
  validate->add_option("--seed", o.seed, "master seed");
  validate->add_option("--out", o.out, "directory for validation.json");
  validate->add_flag("-q,--quiet", o.quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*dsweep) return run_sweep(config, pnpula::ExperimentKind::kDenoiserSweep, o);
    if (*fsweep) return run_sweep(config, pnpula::ExperimentKind::kForwardSweep, o);
    if (*chain) return run_chain(config, o);
    return run_validate(fault_inject, o);
  } catch (const pnpula::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pnpula::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pnpula::DegenerateModelError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
