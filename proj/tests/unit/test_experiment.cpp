#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pnpula/errors.hpp"
#include "pnpula/experiment.hpp"
#include "pnpula/model_io.hpp"
#include "pnpula/validation.hpp"

using namespace pnpula;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pnpula_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec small_denoiser_spec() {
  ExperimentSpec s;
  s.chain.n_steps = 4000;
  s.axis.values = {-1.0, 0.0, 0.5, 1.0};
  s.metrics.n_sub = 256;
  s.metrics.n_repeats = 2;
  return s;
}

ExperimentSpec small_forward_spec() {
  ExperimentSpec s = scaled_forward_sweep_spec();
  s.chain.n_steps = 4000;
  s.axis.values = {0.6, 0.8, 1.0, 1.2, 1.4};
  s.metrics.n_sub = 256;
  s.metrics.n_repeats = 2;
  return s;
}

}  // namespace

TEST(SweepAxis, LinspaceAndValidation) {
  const auto a = SweepAxis::linspace(-5, 5, 50);
  ASSERT_EQ(a.values.size(), 50u);
  EXPECT_EQ(a.values.front(), -5.0);
  EXPECT_EQ(a.values.back(), 5.0);
  EXPECT_NEAR(a.values[1] - a.values[0], 10.0 / 49, 1e-15);
  EXPECT_NO_THROW(a.validate());
  EXPECT_THROW((SweepAxis{{}}).validate(), ConfigError);
  EXPECT_THROW((SweepAxis{{1, 1}}).validate(), ConfigError);
  EXPECT_THROW((SweepAxis{{0, NAN}}).validate(), ConfigError);
}

TEST(ExperimentSpec, DefaultsDescribeDenoiserExperiment) {
  const ExperimentSpec s;
  EXPECT_EQ(s.kind, ExperimentKind::kDenoiserSweep);
  EXPECT_EQ(s.eps, 0.05);
  EXPECT_EQ(s.alpha, 0.3);
  EXPECT_EQ(s.chain.delta, 0.05);
  EXPECT_EQ(s.chain.n_steps, 100000u);
  EXPECT_EQ(s.observation, (Vector(2) << 0, 8).finished());
  EXPECT_EQ(s.axis.values.size(), 50u);
  EXPECT_EQ(s.seed, kDefaultMasterSeed);
  EXPECT_NO_THROW(s.validate());
  EXPECT_NO_THROW(scaled_forward_sweep_spec().validate());
}

TEST(ExperimentSpec, JsonRoundTrip) {
  for (const auto& s : {ExperimentSpec{}, scaled_forward_sweep_spec()}) {
    const auto back = experiment_spec_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
  }
}

TEST(ExperimentSpec, ShippedConfigsLoad) {
  const fs::path dir = PNPULA_CONFIG_DIR;
  const auto ds = load_experiment_spec(dir / "denoiser_sweep.json");
  EXPECT_EQ(to_json(ds)["drift"], to_json(ExperimentSpec{})["drift"]);
  EXPECT_EQ(to_json(ds)["prior"], to_json(ExperimentSpec{})["prior"]);
  EXPECT_EQ(ds.axis.values, ExperimentSpec{}.axis.values);
  const auto fs_spec = load_experiment_spec(dir / "forward_sweep.json");
  EXPECT_EQ(fs_spec.kind, ExperimentKind::kForwardSweep);
  EXPECT_EQ(load_experiment_spec(dir / "chain_run.json").kind, ExperimentKind::kChainRun);
}

TEST(ExperimentSpec, ConfigErrors) {
  auto j = to_json(ExperimentSpec{});
  j["chain"]["n_step"] = 5;
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(ExperimentSpec{});
  j["kind"] = "sweep-everything";
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(ExperimentSpec{});
  j["drift"]["eps"] = -1;
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(ExperimentSpec{});
  j["sweep"]["values"] = {1, 0};
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(ExperimentSpec{});
  j["metrics"]["n_sub"] = 200000;
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(ExperimentSpec{});
  j["observation"] = {0, 8, 1};
  EXPECT_THROW(experiment_spec_from_json(j), DimensionError);
  j = to_json(ExperimentSpec{});
  j["chain"]["x0"] = {0, 0, 0};
  EXPECT_THROW(experiment_spec_from_json(j), DimensionError);
  j = to_json(ExperimentSpec{});
  j["prior"] = "no_such_file.json";
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  j = to_json(scaled_forward_sweep_spec());
  j["reference_scale"] = 1.5;
  EXPECT_THROW(experiment_spec_from_json(j), ConfigError);
  EXPECT_THROW(load_experiment_spec("/nonexistent/config.json"), ConfigError);
}

TEST(Summarize, CorrelationsOverOkRows) {
  std::vector<SweepRow> rows(5);
  for (int i = 0; i < 5; ++i) {
    rows[i].axis = i;
    rows[i].d1_posterior = i;
    rows[i].d1_prior = (i * 7) % 5;
    rows[i].w1 = 2.0 * i + 1;
  }
  rows[4].status = "failed";
  rows[4].w1 = -100;
  const auto s = summarize(ExperimentKind::kDenoiserSweep, rows);
  EXPECT_NEAR(s.r_posterior_w1, 1.0, 1e-15);
  EXPECT_TRUE(std::isnan(s.r_operator_w1));
  rows.resize(2);
  EXPECT_TRUE(std::isnan(summarize(ExperimentKind::kDenoiserSweep, rows).r_posterior_w1));
}

TEST(DenoiserSweep, GateBelowSupportMatchesBiasFloor) {
  // Longer thinned chains so subsamples are close to independent.
  ExperimentSpec s = small_denoiser_spec();
  s.axis.values = {-1e9};
  s.chain.n_steps = 40000;
  s.chain.thinning = 10;
  s.metrics.n_sub = 1024;
  s.metrics.n_repeats = 8;
  const auto r = run_denoiser_sweep(s);
  ASSERT_EQ(r.rows.size(), 1u);
  const auto& row = r.rows[0];
  EXPECT_EQ(row.d1_posterior, 0.0);
  EXPECT_EQ(row.d1_prior, 0.0);
  EXPECT_LE(std::abs(row.w1 - r.bias_floor.value),
            2 * std::hypot(row.w1_stderr, r.bias_floor.std_error));
}

TEST(DenoiserSweep, RowsAndSummaryConsistent) {
  const auto r = run_denoiser_sweep(small_denoiser_spec());
  ASSERT_EQ(r.rows.size(), 4u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    EXPECT_TRUE(row.ok());
    EXPECT_EQ(row.axis, small_denoiser_spec().axis.values[i]);
    EXPECT_GE(row.tv, 0.0);
    EXPECT_LE(row.tv, 1.0);
    EXPECT_GT(row.w1, 0.0);
    EXPECT_EQ(row.mmse.size(), 2);
    EXPECT_FALSE(row.operator_distance.has_value());
  }
  // Raising the gate can only enlarge the region where the denoisers differ.
  for (std::size_t i = 1; i < r.rows.size(); ++i)
    EXPECT_GE(r.rows[i].d1_prior, r.rows[i - 1].d1_prior);
  EXPECT_TRUE(summarize(r.kind, r.rows) == r.summary);
  EXPECT_EQ(r.chains.size(), 4u);
  EXPECT_EQ(r.reference.size(), 4000u);
  EXPECT_TRUE(r.provenance.contains("seeds"));
  EXPECT_EQ(r.provenance["failures"].size(), 0u);
}

TEST(DenoiserSweep, DeterministicAcrossWorkerCounts) {
  ExperimentSpec s = small_denoiser_spec();
  const auto one = run_denoiser_sweep(s);
  s.workers = 3;
  const auto three = run_denoiser_sweep(s);
  EXPECT_EQ(render_sweep_csv(one), render_sweep_csv(three));
  auto p1 = one.provenance, p3 = three.provenance;
  p1["spec"].erase("workers");
  p3["spec"].erase("workers");
  EXPECT_EQ(p1, p3);
}

TEST(DenoiserSweep, SeedChangesResults) {
  ExperimentSpec s = small_denoiser_spec();
  const auto a = run_denoiser_sweep(s);
  s.seed = 777;
  EXPECT_NE(render_sweep_csv(a), render_sweep_csv(run_denoiser_sweep(s)));
}

TEST(ForwardSweep, ReferencePointAndOperatorDistance) {
  ExperimentSpec s = small_forward_spec();
  s.chain.n_steps = 40000;
  s.chain.thinning = 10;
  s.metrics.n_sub = 1024;
  s.metrics.n_repeats = 8;
  const auto r = run_forward_sweep(s);
  ASSERT_EQ(r.rows.size(), 5u);
  for (const auto& row : r.rows) {
    ASSERT_TRUE(row.operator_distance.has_value());
    EXPECT_NEAR(*row.operator_distance, std::abs(row.axis - 1.0), 1e-12);
  }
  const auto& ref = r.rows[2];
  EXPECT_EQ(ref.d1_posterior, 0.0);
  EXPECT_LE(std::abs(ref.w1 - r.bias_floor.value),
            2 * std::hypot(ref.w1_stderr, r.bias_floor.std_error));
  EXPECT_FALSE(std::isnan(r.summary.spearman_operator_w1));
}

TEST(ForwardSweep, FailedPointIsIsolated) {
  ExperimentSpec s = small_forward_spec();
  s.axis.values = {0.8, 1.0, 1.2, 30.0};  // delta * s^2 >> 2 at s = 30
  const auto r = run_forward_sweep(s);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[3].status, "failed");
  EXPECT_TRUE(std::isnan(r.rows[3].w1));
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(r.rows[i].ok());
  ASSERT_EQ(r.provenance["failures"].size(), 1u);
  EXPECT_EQ(r.provenance["failures"][0]["index"], 3);
  EXPECT_NE(r.provenance["failures"][0]["error"].get<std::string>().find("step"), std::string::npos);
  // Correlations use the three ok rows only.
  std::vector<SweepRow> ok(r.rows.begin(), r.rows.begin() + 3);
  EXPECT_TRUE(summarize(r.kind, ok) == r.summary);
}

TEST(Results, WriteReadRoundTrip) {
  const auto r = run_denoiser_sweep(small_denoiser_spec());
  const auto dir = scratch("roundtrip");
  const auto manifest = write_results(r, dir);
  const auto back = read_results(dir);
  EXPECT_TRUE(back.same_results(r));
  EXPECT_EQ(render_sweep_csv(back), slurp(dir / "sweep.csv"));
  EXPECT_EQ(slurp(dir / "sweep.csv").substr(0, sweep_csv_header(r.kind, 2).size()),
            sweep_csv_header(r.kind, 2));
  EXPECT_EQ(sweep_csv_header(r.kind, 2),
            "axis,d1_posterior,d1_prior,w1,w1_stderr,tv,mmse_0,mmse_1,variance,status");
  for (const auto& e : manifest.files) {
    EXPECT_TRUE(fs::exists(dir / e.path)) << e.path;
    EXPECT_EQ(file_hash(dir / e.path), e.fnv1a64) << e.path;
  }
  EXPECT_TRUE(fs::exists(dir / "samples" / "reference.csv"));
  EXPECT_TRUE(fs::exists(dir / "samples" / "chain_003.csv"));
  const auto ref = read_samples_csv(dir / "samples" / "reference.csv");
  EXPECT_EQ(sample_set_hash(ref), sample_set_hash(r.reference));
}

TEST(Results, TamperedSummaryDetected) {
  const auto r = run_denoiser_sweep(small_denoiser_spec());
  const auto dir = scratch("tamper");
  write_results(r, dir);
  auto rows = parse_sweep_csv(slurp(dir / "sweep.csv"));
  ASSERT_EQ(rows.size(), r.rows.size());
  std::string csv = slurp(dir / "sweep.csv");
  csv.replace(csv.find(",ok"), 3, ",failed");
  std::ofstream(dir / "sweep.csv", std::ios::binary) << csv;
  EXPECT_THROW(read_results(dir), Error);
}

TEST(Results, SummaryReloadReproducesRun) {
  const auto r = run_denoiser_sweep(small_denoiser_spec());
  const auto dir = scratch("reload");
  write_results(r, dir);
  const auto spec = load_experiment_spec(dir / "summary.json");
  const auto again = run_denoiser_sweep(spec);
  EXPECT_EQ(render_sweep_csv(again), render_sweep_csv(r));
  EXPECT_TRUE(again.same_results(r));
}

TEST(ChainExperiment, WritesSamples) {
  ExperimentSpec s;
  s.kind = ExperimentKind::kChainRun;
  s.chain.n_steps = 500;
  s.threshold = 0.0;
  const auto samples = run_chain_experiment(s);
  EXPECT_EQ(samples.size(), 500u);
  EXPECT_EQ(samples, run_chain_experiment(s));
  const auto dir = scratch("chain");
  write_chain_results(samples, s, dir);
  EXPECT_EQ(sample_set_hash(read_samples_csv(dir / "samples.csv")), sample_set_hash(samples));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(ValidationReport, JsonRoundTrip) {
  ValidationReport rep;
  rep.checks.push_back({"a", true, 1e-9, 1e-8, "detail"});
  rep.checks.push_back({"b", false, NAN, 0.05, ""});
  rep.seconds = 1.5;
  EXPECT_EQ(validation_report_from_json(to_json(rep)), rep);
  EXPECT_FALSE(rep.all_passed());
  rep.checks[1].passed = true;
  EXPECT_TRUE(rep.all_passed());
}
