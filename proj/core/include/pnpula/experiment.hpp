#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pnpula/forward.hpp"
#include "pnpula/gmm.hpp"
#include "pnpula/metrics.hpp"
#include "pnpula/sample_set.hpp"
#include "pnpula/sampler.hpp"

namespace pnpula {

inline constexpr std::uint64_t kDefaultMasterSeed = 12345;
inline constexpr int kSummarySchemaVersion = 1;

enum class ExperimentKind { kDenoiserSweep, kForwardSweep, kChainRun, kValidate };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(std::string_view name);

struct SweepAxis {
  std::vector<double> values;

  static SweepAxis linspace(double lo, double hi, std::size_t count);
  // Nonempty and strictly increasing.
  void validate() const;
};

struct MetricProtocol {
  std::size_t n_sub = 2048;
  std::size_t n_repeats = 8;
  // Prior samples for the prior-L2 metric; 0 means "as many as the chain keeps".
  std::size_t n_prior = 0;
  // TV histogram grid; when absent it is the reference chain's bounding box
  // padded by 5% per side, with `tv_bins` bins per axis.
  std::optional<HistogramGrid> tv_grid;
  int tv_bins = 50;
};

// Declarative description of one run. Defaults reproduce the 2D
// denoiser-mismatch experiment: crossed-ridges prior, A = I, sigma = 1,
// y = (0, 8), eps = 0.05, delta = 0.05, alpha = 0.3, N = 1e5, x0 = 0,
// 50 thresholds on [-5, 5].
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kDenoiserSweep;
  GaussianMixture prior = crossed_ridges_mixture();
  LinearForwardModel forward = LinearForwardModel::scaled_identity(2, 1.0, 1.0);
  Vector observation = (Vector(2) << 0.0, 8.0).finished();

  double eps = 0.05;
  double alpha = 0.3;
  double lambda = 1.0 / 16.0;
  ProjectionSet projection = Ball{Vector::Zero(2), 20.0};

  // Per-chain seeds are derived from `seed`; chain.seed is ignored by sweeps.
  ChainParams chain{0.05, 100000, 0, 1, 0, Vector::Zero(2)};

  // chain-run only: gate the exact denoiser at this threshold.
  std::optional<double> threshold;

  SweepAxis axis = SweepAxis::linspace(-5.0, 5.0, 50);
  // forward-sweep only: A(s) = s * forward.matrix(), reference at s = reference_scale.
  double reference_scale = 1.0;

  MetricProtocol metrics;
  std::uint64_t seed = kDefaultMasterSeed;
  unsigned workers = 1;
  std::filesystem::path output = "results";
  bool save_chains = true;

  void validate() const;
};

// Forward-model shift defaults: A(s) = s I on s = 0.6, 0.7, ..., 1.5 with the
// reference at s = 1.
ExperimentSpec scaled_forward_sweep_spec();

nlohmann::json to_json(const ExperimentSpec& spec);
// `prior` / `forward` may be inline objects or file paths relative to base_dir.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
// Accepts a config file or a summary.json written by write_results.
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct SweepRow {
  double axis = 0.0;
  double d1_posterior = 0.0;
  double d1_prior = 0.0;
  double w1 = 0.0;
  double w1_stderr = 0.0;
  double tv = 0.0;
  Vector mmse;
  double variance = 0.0;
  std::string status = "ok";
  // forward-sweep only: ||A(s) - A(s*)||.
  std::optional<double> operator_distance;

  bool ok() const { return status == "ok"; }
  bool operator==(const SweepRow& other) const;
};

struct SweepSummary {
  double r_posterior_w1 = 0.0;
  double r_prior_w1 = 0.0;
  double r_operator_w1 = 0.0;
  double spearman_operator_w1 = 0.0;
  bool operator==(const SweepSummary& other) const;
};

// Correlations over the rows with status "ok"; NaN where undefined (fewer
// than 3 rows, zero variance, or not applicable to `kind`).
SweepSummary summarize(ExperimentKind kind, const std::vector<SweepRow>& rows);

struct SweepResult {
  ExperimentKind kind = ExperimentKind::kDenoiserSweep;
  std::vector<SweepRow> rows;
  SweepSummary summary;
  // Same-distribution W1 between the reference chain and an independent
  // replica of it.
  TransportEstimate bias_floor;
  // spec, derived seeds, step-size diagnostics, failures, TV grid, hashes.
  nlohmann::json provenance;

  // Kept only when spec.save_chains is set; never round-tripped by read_results.
  SampleSet reference;
  std::vector<SampleSet> chains;

  // Rows, summary, bias floor and provenance.
  bool same_results(const SweepResult& other) const;
};

using ProgressFn = std::function<void(std::string_view)>;

SweepResult run_denoiser_sweep(const ExperimentSpec& spec, const ProgressFn& progress = {});
SweepResult run_forward_sweep(const ExperimentSpec& spec, const ProgressFn& progress = {});
// Single chain (exact denoiser, or mismatched when spec.threshold is set).
SampleSet run_chain_experiment(const ExperimentSpec& spec);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::uintmax_t bytes = 0;
  std::string fnv1a64;
};

struct Manifest {
  std::vector<ManifestEntry> files;
};

// Writes sweep.csv, summary.json, samples/*.csv (+ .meta.json) when chains
// were kept, and manifest.json listing every file with its hash.
Manifest write_results(const SweepResult& result, const std::filesystem::path& dir);
SweepResult read_results(const std::filesystem::path& dir);

// chain-run output: samples.csv, samples.meta.json (sample meta plus the
// spec and content hash) and manifest.json.
Manifest write_chain_results(const SampleSet& samples, const ExperimentSpec& spec,
                             const std::filesystem::path& dir);

std::string sweep_csv_header(ExperimentKind kind, int dimension);
std::string render_sweep_csv(const SweepResult& result);
std::vector<SweepRow> parse_sweep_csv(std::string_view text);

// Content hash of a sample set's CSV rendering.
std::string sample_set_hash(const SampleSet& samples);
std::string file_hash(const std::filesystem::path& path);

}  // namespace pnpula
