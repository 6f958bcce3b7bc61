#include "pnpula/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <initializer_list>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

#include "pnpula/errors.hpp"
#include "pnpula/model_io.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTvPadding = 0.05;
constexpr std::size_t kLipschitzPairs = 2000;
constexpr std::size_t kLipschitzDomain = 10000;

bool same_double(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b) ||
         (std::isnan(a) && std::isnan(b));
}

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!same_double(a[i], b[i])) return false;
  }
  return true;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

void say(const ProgressFn& progress, std::mutex& mu, const std::string& msg) {
  if (!progress) return;
  std::lock_guard lock(mu);
  progress(msg);
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class F>
auto config_context(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

json grid_json(const HistogramGrid& g) {
  return {{"low", {g.low[0], g.low[1]}}, {"high", {g.high[0], g.high[1]}},
          {"bins", {g.bins[0], g.bins[1]}}};
}

HistogramGrid grid_from_json(const json& j) {
  HistogramGrid g;
  const auto lo = j.at("low").get<std::vector<double>>();
  const auto hi = j.at("high").get<std::vector<double>>();
  if (lo.size() != 2 || hi.size() != 2) throw ConfigError("tv_grid: low/high must have 2 entries");
  g.low = {lo[0], lo[1]};
  g.high = {hi[0], hi[1]};
  if (j.contains("bins")) {
    const auto b = j.at("bins").get<std::vector<int>>();
    if (b.size() != 2) throw ConfigError("tv_grid: bins must have 2 entries");
    g.bins = {b[0], b[1]};
  }
  return g;
}

HistogramGrid padded_bounding_grid(const SampleSet& s, int bins) {
  HistogramGrid g;
  g.bins = {bins, bins};
  for (int k = 0; k < 2; ++k) {
    const auto col = s.points().col(k);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    const double pad = std::max(hi - lo, 1e-9) * kTvPadding;
    g.low[static_cast<std::size_t>(k)] = lo - pad;
    g.high[static_cast<std::size_t>(k)] = hi + pad;
  }
  return g;
}

std::string exact_identity(double eps) { return "exact-mmse(eps=" + format_double(eps) + ")"; }

Denoiser exact_denoiser(const std::shared_ptr<const ExactMmseDenoiser>& base) {
  return {exact_identity(base->eps()), [base](const Vector& x) { return (*base)(x); }};
}

Denoiser gated_denoiser(const std::shared_ptr<const ExactMmseDenoiser>& base, double c) {
  auto gated = std::make_shared<MismatchedDenoiser>(base, c);
  return {"mismatched(c=" + format_double(c) + ",eps=" + format_double(base->eps()) + ")",
          [gated](const Vector& x) { return (*gated)(x); }};
}

DriftConfig drift_config(const ExperimentSpec& spec, Denoiser denoiser) {
  DriftConfig cfg;
  cfg.eps = spec.eps;
  cfg.alpha = spec.alpha;
  cfg.lambda = spec.lambda;
  cfg.projection = spec.projection;
  cfg.denoiser = std::move(denoiser);
  return cfg;
}

ChainParams chain_with_seed(const ExperimentSpec& spec, std::uint64_t seed) {
  ChainParams p = spec.chain;
  p.seed = seed;
  return p;
}

LinearForwardModel scaled_forward(const ExperimentSpec& spec, double s) {
  return LinearForwardModel(s * spec.forward.matrix(), spec.forward.sigma());
}

// Runs body(i) for i in [0, n) on up to `workers` threads. Results are
// written by index, so completion order never matters.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (count == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

SweepRow failed_row(double axis, int dim) {
  SweepRow r;
  r.axis = axis;
  r.d1_posterior = r.d1_prior = r.w1 = r.w1_stderr = r.tv = r.variance = kNaN;
  r.mmse = Vector::Constant(dim, kNaN);
  r.status = "failed";
  return r;
}

json transport_json(const TransportEstimate& t) {
  return {{"value", num(t.value)},
          {"std_error", num(t.std_error)},
          {"method", to_string(t.method)},
          {"n_used", t.n_used}};
}

TransportEstimate transport_from_json(const json& j) {
  TransportEstimate t;
  t.value = num_from(j.at("value"));
  t.std_error = num_from(j.at("std_error"));
  const auto m = j.at("method").get<std::string>();
  t.method = m == to_string(TransportMethod::kSubsampleAverage) ? TransportMethod::kSubsampleAverage
                                                                : TransportMethod::kExactAssignment;
  t.n_used = j.at("n_used").get<std::size_t>();
  return t;
}

json summary_json(const SweepSummary& s) {
  return {{"r_posterior_w1", num(s.r_posterior_w1)},
          {"r_prior_w1", num(s.r_prior_w1)},
          {"r_operator_w1", num(s.r_operator_w1)},
          {"spearman_operator_w1", num(s.spearman_operator_w1)}};
}

SweepSummary summary_from_json(const json& j) {
  SweepSummary s;
  s.r_posterior_w1 = num_from(j.at("r_posterior_w1"));
  s.r_prior_w1 = num_from(j.at("r_prior_w1"));
  s.r_operator_w1 = num_from(j.at("r_operator_w1"));
  s.spearman_operator_w1 = num_from(j.at("spearman_operator_w1"));
  return s;
}

ManifestEntry manifest_entry(const fs::path& dir, const fs::path& rel) {
  const fs::path full = dir / rel;
  return {rel.generic_string(), fs::file_size(full), file_hash(full)};
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  json files = json::array();
  for (const auto& e : m.files) {
    files.push_back({{"path", e.path}, {"bytes", e.bytes}, {"fnv1a64", e.fnv1a64}});
  }
  write_json_file({{"schema_version", kSummarySchemaVersion}, {"files", files}},
                  dir / "manifest.json");
}

void write_sample_pair(const SampleSet& s, const fs::path& dir, const std::string& stem,
                       Manifest& m) {
  const fs::path csv = fs::path("samples") / (stem + ".csv");
  const fs::path meta = fs::path("samples") / (stem + ".meta.json");
  const std::string text = render_samples_csv(s);
  write_text(dir / csv, text);
  json record = s.meta();
  record["content_hash"] = to_hex(fnv1a64(text));
  record["n"] = s.size();
  write_json_file(record, dir / meta);
  m.files.push_back(manifest_entry(dir, csv));
  m.files.push_back(manifest_entry(dir, meta));
}

double parse_field(std::string_view f) {
  double v = 0.0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
    throw IoError("sweep.csv: bad number '" + std::string(f) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kDenoiserSweep: return "denoiser-sweep";
    case ExperimentKind::kForwardSweep: return "forward-sweep";
    case ExperimentKind::kChainRun: return "chain-run";
    case ExperimentKind::kValidate: return "validate";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(std::string_view name) {
  for (const auto k : {ExperimentKind::kDenoiserSweep, ExperimentKind::kForwardSweep,
                       ExperimentKind::kChainRun, ExperimentKind::kValidate}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

SweepAxis SweepAxis::linspace(double lo, double hi, std::size_t count) {
  SweepAxis a;
  if (count == 0) return a;
  if (count == 1) {
    a.values = {lo};
    return a;
  }
  a.values.resize(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) a.values[i] = lo + static_cast<double>(i) * step;
  a.values.back() = hi;
  return a;
}

void SweepAxis::validate() const {
  if (values.empty()) throw ConfigError("sweep axis is empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw ConfigError("sweep axis has a non-finite value");
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw ConfigError("sweep axis must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

void ExperimentSpec::validate() const {
  const int d = prior.dimension();
  if (forward.input_dimension() != d) {
    throw DimensionError("forward model input dimension " +
                         std::to_string(forward.input_dimension()) + " != prior dimension " +
                         std::to_string(d));
  }
  if (observation.size() != forward.output_dimension()) {
    throw DimensionError("observation has dimension " + std::to_string(observation.size()) +
                         ", forward model outputs " + std::to_string(forward.output_dimension()));
  }
  if (!(eps > 0.0) || !(alpha > 0.0) || !(lambda > 0.0)) {
    throw ConfigError("eps, alpha and lambda must be > 0");
  }
  validate_projection_set(projection);
  ChainParams c = chain;
  if (c.x0.size() == 0) c.x0 = Vector::Zero(d);
  c.validate();
  if (c.x0.size() != d) throw DimensionError("chain x0 dimension does not match the prior");
  if (kind == ExperimentKind::kDenoiserSweep || kind == ExperimentKind::kForwardSweep) {
    axis.validate();
    if (metrics.n_sub == 0 || metrics.n_repeats == 0) {
      throw ConfigError("metrics.n_sub and metrics.n_repeats must be >= 1");
    }
    if (metrics.n_sub > c.kept()) {
      throw ConfigError("metrics.n_sub (" + std::to_string(metrics.n_sub) +
                        ") exceeds the retained chain length (" + std::to_string(c.kept()) + ")");
    }
    if (metrics.tv_bins < 1) throw ConfigError("metrics.tv_bins must be >= 1");
  }
  if (kind == ExperimentKind::kForwardSweep) {
    if (!(reference_scale > axis.values.front() && reference_scale < axis.values.back())) {
      throw ConfigError("reference_scale must lie strictly inside the sweep axis");
    }
  }
}

ExperimentSpec scaled_forward_sweep_spec() {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kForwardSweep;
  spec.axis.values = {0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
  spec.reference_scale = 1.0;
  return spec;
}

json to_json(const ExperimentSpec& spec) {
  json metrics = {{"n_sub", spec.metrics.n_sub},
                  {"n_repeats", spec.metrics.n_repeats},
                  {"n_prior", spec.metrics.n_prior},
                  {"tv_bins", spec.metrics.tv_bins},
                  {"tv_grid", spec.metrics.tv_grid ? grid_json(*spec.metrics.tv_grid) : json(nullptr)}};
  json chain = to_json(spec.chain);
  chain.erase("seed");
  return {{"schema_version", kSummarySchemaVersion},
          {"kind", to_string(spec.kind)},
          {"prior", to_json(spec.prior)},
          {"forward", to_json(spec.forward)},
          {"observation", to_json(spec.observation)},
          {"drift",
           {{"eps", spec.eps},
            {"alpha", spec.alpha},
            {"lambda", spec.lambda},
            {"projection", to_json(spec.projection)}}},
          {"chain", chain},
          {"threshold", spec.threshold ? json(*spec.threshold) : json(nullptr)},
          {"sweep", {{"values", spec.axis.values}}},
          {"reference_scale", spec.reference_scale},
          {"metrics", metrics},
          {"seed", spec.seed},
          {"workers", spec.workers},
          {"output", spec.output.generic_string()},
          {"save_chains", spec.save_chains}};
}

ExperimentSpec experiment_spec_from_json(const json& j, const fs::path& base_dir) {
  return config_context("experiment config", [&] {
    reject_unknown_keys(j,
                        {"schema_version", "kind", "prior", "forward", "observation", "drift",
                         "chain", "threshold", "sweep", "reference_scale", "metrics", "seed",
                         "workers", "output", "save_chains"},
                        "experiment config");
    const ExperimentKind kind = j.contains("kind")
                                    ? experiment_kind_from_string(j.at("kind").get<std::string>())
                                    : ExperimentKind::kDenoiserSweep;
    ExperimentSpec spec = kind == ExperimentKind::kForwardSweep ? scaled_forward_sweep_spec()
                                                                : ExperimentSpec{};
    spec.kind = kind;

    const auto resolve = [&](const json& v) -> json {
      if (!v.is_string()) return v;
      fs::path p = v.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      if (!fs::exists(p)) throw ConfigError("referenced file does not exist: " + p.string());
      return read_json_file(p);
    };
    if (j.contains("prior")) spec.prior = gmm_from_json(resolve(j.at("prior")));
    if (j.contains("forward")) spec.forward = forward_from_json(resolve(j.at("forward")));
    const int d = spec.prior.dimension();
    if (j.contains("observation")) spec.observation = vector_from_json(j.at("observation"));

    if (j.contains("drift")) {
      const auto& dj = j.at("drift");
      reject_unknown_keys(dj, {"eps", "alpha", "lambda", "projection"}, "drift");
      spec.eps = dj.value("eps", spec.eps);
      spec.alpha = dj.value("alpha", spec.alpha);
      spec.lambda = dj.value("lambda", spec.lambda);
      if (dj.contains("projection")) spec.projection = projection_set_from_json(dj.at("projection"), d);
    }
    if (const auto* b = std::get_if<Ball>(&spec.projection); b && b->center.size() != d) {
      spec.projection = Ball{Vector::Zero(d), b->radius};
    }

    if (j.contains("chain")) {
      const auto& cj = j.at("chain");
      reject_unknown_keys(cj, {"delta", "n_steps", "burn_in", "thinning", "x0"}, "chain");
      spec.chain.delta = cj.value("delta", spec.chain.delta);
      spec.chain.n_steps = cj.value("n_steps", spec.chain.n_steps);
      spec.chain.burn_in = cj.value("burn_in", spec.chain.burn_in);
      spec.chain.thinning = cj.value("thinning", spec.chain.thinning);
    }
    if (j.contains("chain") && j.at("chain").contains("x0")) {
      spec.chain.x0 = vector_from_json(j.at("chain").at("x0"));
    } else {
      spec.chain.x0 = Vector::Zero(d);
    }

    if (j.contains("threshold") && !j.at("threshold").is_null()) {
      spec.threshold = j.at("threshold").get<double>();
    }

    if (j.contains("sweep")) {
      const auto& sj = j.at("sweep");
      reject_unknown_keys(sj, {"values", "start", "stop", "count"}, "sweep");
      if (sj.contains("values")) {
        spec.axis.values = sj.at("values").get<std::vector<double>>();
      } else {
        spec.axis = SweepAxis::linspace(sj.at("start").get<double>(), sj.at("stop").get<double>(),
                                        sj.at("count").get<std::size_t>());
      }
    }
    spec.reference_scale = j.value("reference_scale", spec.reference_scale);

    if (j.contains("metrics")) {
      const auto& mj = j.at("metrics");
      reject_unknown_keys(mj, {"n_sub", "n_repeats", "n_prior", "tv_bins", "tv_grid"}, "metrics");
      spec.metrics.n_sub = mj.value("n_sub", spec.metrics.n_sub);
      spec.metrics.n_repeats = mj.value("n_repeats", spec.metrics.n_repeats);
      spec.metrics.n_prior = mj.value("n_prior", spec.metrics.n_prior);
      spec.metrics.tv_bins = mj.value("tv_bins", spec.metrics.tv_bins);
      if (mj.contains("tv_grid") && !mj.at("tv_grid").is_null()) {
        spec.metrics.tv_grid = grid_from_json(mj.at("tv_grid"));
      }
    }
    spec.seed = j.value("seed", spec.seed);
    spec.workers = j.value("workers", spec.workers);
    if (j.contains("output")) {
      fs::path out = j.at("output").get<std::string>();
      spec.output = out;
    }
    spec.save_chains = j.value("save_chains", spec.save_chains);
    spec.validate();
    return spec;
  });
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path.string());
  json j = read_json_file(path);
  // A summary.json embeds the full spec.
  if (j.is_object() && j.contains("spec") && j.contains("schema_version")) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSummarySchemaVersion) {
      throw ConfigError("unsupported summary schema_version " + std::to_string(version));
    }
    j = j.at("spec");
  }
  return experiment_spec_from_json(j, path.parent_path());
}

bool SweepRow::operator==(const SweepRow& o) const {
  return same_double(axis, o.axis) && same_double(d1_posterior, o.d1_posterior) &&
         same_double(d1_prior, o.d1_prior) && same_double(w1, o.w1) &&
         same_double(w1_stderr, o.w1_stderr) && same_double(tv, o.tv) &&
         same_vector(mmse, o.mmse) && same_double(variance, o.variance) && status == o.status &&
         operator_distance.has_value() == o.operator_distance.has_value() &&
         (!operator_distance || same_double(*operator_distance, *o.operator_distance));
}

bool SweepSummary::operator==(const SweepSummary& o) const {
  return same_double(r_posterior_w1, o.r_posterior_w1) && same_double(r_prior_w1, o.r_prior_w1) &&
         same_double(r_operator_w1, o.r_operator_w1) &&
         same_double(spearman_operator_w1, o.spearman_operator_w1);
}

SweepSummary summarize(ExperimentKind kind, const std::vector<SweepRow>& rows) {
  std::vector<double> post, prior, w1, dist;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    post.push_back(r.d1_posterior);
    prior.push_back(r.d1_prior);
    w1.push_back(r.w1);
    if (r.operator_distance) dist.push_back(*r.operator_distance);
  }
  const auto safe = [](auto&& f) {
    try {
      return f();
    } catch (const InsufficientDataError&) {
      return kNaN;
    }
  };
  SweepSummary s{kNaN, kNaN, kNaN, kNaN};
  s.r_posterior_w1 = safe([&] { return pearson_r(post, w1); });
  s.r_prior_w1 = safe([&] { return pearson_r(prior, w1); });
  if (kind == ExperimentKind::kForwardSweep && dist.size() == w1.size()) {
    s.r_operator_w1 = safe([&] { return pearson_r(dist, w1); });
    s.spearman_operator_w1 = safe([&] { return spearman_r(dist, w1); });
  }
  return s;
}

bool SweepResult::same_results(const SweepResult& o) const {
  return kind == o.kind && rows == o.rows && summary == o.summary &&
         same_double(bias_floor.value, o.bias_floor.value) &&
         same_double(bias_floor.std_error, o.bias_floor.std_error) &&
         bias_floor.method == o.bias_floor.method && bias_floor.n_used == o.bias_floor.n_used &&
         provenance == o.provenance;
}

namespace {

struct PointOutcome {
  SweepRow row;
  SampleSet chain;
  json seeds;
  json failure;
  std::string hash;
};

// Metrics shared by both sweeps once a point's chain has been produced.
void fill_chain_metrics(const ExperimentSpec& spec, const SampleSet& reference,
                        const SampleSet& chain, const HistogramGrid& grid, std::uint64_t metric_seed,
                        SweepRow& row) {
  const auto w = wasserstein1_estimate(reference, chain, spec.metrics.n_sub,
                                       spec.metrics.n_repeats, metric_seed);
  row.w1 = w.value;
  row.w1_stderr = w.std_error;
  row.tv = chain.dimension() == 2 ? tv_histogram(reference, chain, grid) : kNaN;
  row.mmse = mmse_estimate(chain);
  row.variance = variance_estimate(chain);
}

struct Baseline {
  SampleSet reference;
  SampleSet prior_samples;
  TransportEstimate floor;
  HistogramGrid grid;
  json provenance;
};

Baseline make_baseline(const ExperimentSpec& spec, const DriftConfig& ref_cfg,
                       const LinearForwardModel& ref_fwd,
                       const std::shared_ptr<const ExactMmseDenoiser>& exact,
                       const ProgressFn& progress, std::mutex& mu, json& warnings) {
  Baseline b;
  const std::uint64_t master = spec.seed;
  const std::uint64_t ref_seed = derive_seed(master, 0, "reference");
  const std::uint64_t floor_seed = derive_seed(master, 0, "floor");
  const std::uint64_t floor_metric_seed = derive_seed(master, 0, "floor-metric");
  const std::uint64_t prior_seed = derive_seed(master, 0, "prior");
  const std::uint64_t lip_seed = derive_seed(master, 0, "lipschitz");

  const std::size_t n_prior = spec.metrics.n_prior ? spec.metrics.n_prior : spec.chain.kept();
  b.prior_samples = gmm_sample(spec.prior, n_prior, prior_seed);

  // Step-size diagnostic against the step-size bound, M estimated on the prior.
  std::vector<std::size_t> idx(std::min(n_prior, kLipschitzDomain));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const double m_est = lipschitz_estimate([&](const Vector& x) { return (*exact)(x); },
                                          b.prior_samples.subset(idx), kLipschitzPairs, lip_seed);
  const double delta_bar = max_step_size(ref_cfg, ref_fwd, m_est);
  if (spec.chain.delta > delta_bar) {
    const std::string msg = "step size delta=" + format_double(spec.chain.delta) +
                            " exceeds the bound delta_bar=" + format_double(delta_bar) +
                            " (denoiser Lipschitz lower bound M=" + format_double(m_est) + ")";
    warnings.push_back(msg);
    say(progress, mu, "warning: " + msg);
  }

  say(progress, mu, "reference chain");
  b.reference = run_chain(ref_cfg, ref_fwd, spec.observation, chain_with_seed(spec, ref_seed));
  say(progress, mu, "bias-floor chain");
  const SampleSet replica =
      run_chain(ref_cfg, ref_fwd, spec.observation, chain_with_seed(spec, floor_seed));
  b.floor = wasserstein1_estimate(b.reference, replica, spec.metrics.n_sub, spec.metrics.n_repeats,
                                  floor_metric_seed);
  say(progress, mu, "bias floor W1 = " + format_double(b.floor.value) + " +- " +
                        format_double(b.floor.std_error));

  if (b.reference.dimension() == 2) {
    b.grid = spec.metrics.tv_grid ? *spec.metrics.tv_grid
                                  : padded_bounding_grid(b.reference, spec.metrics.tv_bins);
  }

  b.provenance = {
      {"seeds",
       {{"master", spec.seed},
        {"reference", to_hex(ref_seed)},
        {"floor", to_hex(floor_seed)},
        {"floor_metric", to_hex(floor_metric_seed)},
        {"prior", to_hex(prior_seed)},
        {"lipschitz", to_hex(lip_seed)}}},
      {"step_size",
       {{"delta", spec.chain.delta}, {"delta_bar", delta_bar}, {"lipschitz_lower_bound", m_est}}},
      {"tv_grid", b.reference.dimension() == 2 ? grid_json(b.grid) : json(nullptr)},
      {"reference",
       {{"hash", sample_set_hash(b.reference)},
        {"n", b.reference.size()},
        {"projection_active_steps", b.reference.meta().at("projection_active_steps")}}},
      {"floor_replica_hash", sample_set_hash(replica)},
      {"prior_samples", {{"n", b.prior_samples.size()}, {"hash", sample_set_hash(b.prior_samples)}}},
  };
  return b;
}

SweepResult assemble(const ExperimentSpec& spec, ExperimentKind kind, Baseline&& base,
                     std::vector<PointOutcome>&& points, json warnings) {
  SweepResult r;
  r.kind = kind;
  json chains = json::array();
  json failures = json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& p = points[i];
    r.rows.push_back(p.row);
    json c = p.seeds;
    c["index"] = i;
    c["axis"] = p.row.axis;
    c["status"] = p.row.status;
    c["hash"] = p.hash;
    chains.push_back(std::move(c));
    if (!p.failure.is_null()) failures.push_back(p.failure);
    if (spec.save_chains) r.chains.push_back(std::move(p.chain));
  }
  r.summary = summarize(kind, r.rows);
  r.bias_floor = base.floor;
  r.provenance = std::move(base.provenance);
  r.provenance["spec"] = to_json(spec);
  r.provenance["chains"] = std::move(chains);
  r.provenance["failures"] = std::move(failures);
  r.provenance["warnings"] = std::move(warnings);
  if (spec.save_chains) r.reference = std::move(base.reference);
  return r;
}

PointOutcome failed_point(double axis, int dim, std::size_t i, const std::string& what) {
  PointOutcome out;
  out.row = failed_row(axis, dim);
  out.failure = {{"index", i}, {"axis", axis}, {"error", what}};
  return out;
}

}  // namespace

SweepResult run_denoiser_sweep(const ExperimentSpec& spec, const ProgressFn& progress) {
  if (spec.kind != ExperimentKind::kDenoiserSweep) {
    throw ConfigError("run_denoiser_sweep: spec kind is " + to_string(spec.kind));
  }
  spec.validate();
  std::mutex mu;
  json warnings = json::array();
  const int d = spec.prior.dimension();
  const auto exact = std::make_shared<const ExactMmseDenoiser>(spec.prior, spec.eps);
  const DriftConfig ref_cfg = drift_config(spec, exact_denoiser(exact));
  Baseline base = make_baseline(spec, ref_cfg, spec.forward, exact, progress, mu, warnings);

  const VectorField exact_field = [&](const Vector& x) { return (*exact)(x); };
  const auto& values = spec.axis.values;
  std::vector<PointOutcome> points(values.size());
  parallel_for(values.size(), spec.workers, [&](std::size_t i) {
    const double c = values[i];
    const std::uint64_t chain_seed = derive_seed(spec.seed, i, "chain");
    const std::uint64_t metric_seed = derive_seed(spec.seed, i, "metric");
    const Denoiser den = gated_denoiser(exact, c);
    const DriftConfig cfg = drift_config(spec, den);
    PointOutcome out;
    try {
      out.chain = run_chain(cfg, spec.forward, spec.observation, chain_with_seed(spec, chain_seed));
    } catch (const DivergenceError& e) {
      out = failed_point(c, d, i, e.what());
    }
    if (out.row.ok()) {
      out.row.axis = c;
      out.row.d1_posterior = posterior_l2(exact_field, den.apply, base.reference).value;
      out.row.d1_prior = prior_l2(exact_field, den.apply, base.prior_samples).value;
      fill_chain_metrics(spec, base.reference, out.chain, base.grid, metric_seed, out.row);
      out.hash = sample_set_hash(out.chain);
    }
    out.seeds = {{"chain", to_hex(chain_seed)}, {"metric", to_hex(metric_seed)}};
    say(progress, mu,
        "point " + std::to_string(i + 1) + "/" + std::to_string(values.size()) +
            " c=" + format_double(c) + " status=" + out.row.status +
            " d1=" + format_double(out.row.d1_posterior) + " w1=" + format_double(out.row.w1));
    points[i] = std::move(out);
  });
  return assemble(spec, ExperimentKind::kDenoiserSweep, std::move(base), std::move(points),
                  std::move(warnings));
}

SweepResult run_forward_sweep(const ExperimentSpec& spec, const ProgressFn& progress) {
  if (spec.kind != ExperimentKind::kForwardSweep) {
    throw ConfigError("run_forward_sweep: spec kind is " + to_string(spec.kind));
  }
  spec.validate();
  std::mutex mu;
  json warnings = json::array();
  const int d = spec.prior.dimension();
  const auto exact = std::make_shared<const ExactMmseDenoiser>(spec.prior, spec.eps);
  const DriftConfig cfg = drift_config(spec, exact_denoiser(exact));
  const LinearForwardModel ref_fwd = scaled_forward(spec, spec.reference_scale);
  Baseline base = make_baseline(spec, cfg, ref_fwd, exact, progress, mu, warnings);

  const VectorField ref_drift = [&](const Vector& x) {
    return drift(cfg, ref_fwd, spec.observation, x);
  };
  const auto& values = spec.axis.values;
  std::vector<PointOutcome> points(values.size());
  parallel_for(values.size(), spec.workers, [&](std::size_t i) {
    const double s = values[i];
    const std::uint64_t chain_seed = derive_seed(spec.seed, i, "chain");
    const std::uint64_t metric_seed = derive_seed(spec.seed, i, "metric");
    const LinearForwardModel fwd = scaled_forward(spec, s);
    const VectorField point_drift = [&](const Vector& x) {
      return drift(cfg, fwd, spec.observation, x);
    };
    PointOutcome out;
    try {
      out.chain = run_chain(cfg, fwd, spec.observation, chain_with_seed(spec, chain_seed));
    } catch (const DivergenceError& e) {
      out = failed_point(s, d, i, e.what());
    }
    out.row.axis = s;
    out.row.operator_distance = operator_distance(fwd.matrix(), ref_fwd.matrix());
    if (out.row.ok()) {
      out.row.d1_posterior = posterior_l2(ref_drift, point_drift, base.reference).value;
      out.row.d1_prior = prior_l2(ref_drift, point_drift, base.prior_samples).value;
      fill_chain_metrics(spec, base.reference, out.chain, base.grid, metric_seed, out.row);
      out.hash = sample_set_hash(out.chain);
    }
    out.seeds = {{"chain", to_hex(chain_seed)}, {"metric", to_hex(metric_seed)}};
    say(progress, mu,
        "point " + std::to_string(i + 1) + "/" + std::to_string(values.size()) +
            " s=" + format_double(s) + " status=" + out.row.status +
            " w1=" + format_double(out.row.w1));
    points[i] = std::move(out);
  });
  return assemble(spec, ExperimentKind::kForwardSweep, std::move(base), std::move(points),
                  std::move(warnings));
}

SampleSet run_chain_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto exact = std::make_shared<const ExactMmseDenoiser>(spec.prior, spec.eps);
  const Denoiser den = spec.threshold ? gated_denoiser(exact, *spec.threshold) : exact_denoiser(exact);
  const std::uint64_t seed = derive_seed(spec.seed, 0, "chain");
  SampleSet s = run_chain(drift_config(spec, den), spec.forward, spec.observation,
                          chain_with_seed(spec, seed));
  s.meta()["master_seed"] = spec.seed;
  return s;
}

std::string sweep_csv_header(ExperimentKind kind, int dimension) {
  std::string h = "axis,d1_posterior,d1_prior,w1,w1_stderr,tv";
  for (int k = 0; k < dimension; ++k) h += ",mmse_" + std::to_string(k);
  h += ",variance,status";
  if (kind == ExperimentKind::kForwardSweep) h += ",operator_distance";
  return h;
}

std::string render_sweep_csv(const SweepResult& result) {
  const int d = result.rows.empty() ? 0 : static_cast<int>(result.rows.front().mmse.size());
  std::string out = sweep_csv_header(result.kind, d) + "\n";
  for (const auto& r : result.rows) {
    out += format_double(r.axis);
    for (const double v : {r.d1_posterior, r.d1_prior, r.w1, r.w1_stderr, r.tv}) {
      out += "," + format_double(v);
    }
    for (Eigen::Index k = 0; k < r.mmse.size(); ++k) out += "," + format_double(r.mmse[k]);
    out += "," + format_double(r.variance) + "," + r.status;
    if (result.kind == ExperimentKind::kForwardSweep) {
      out += "," + format_double(r.operator_distance.value_or(kNaN));
    }
    out += "\n";
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(std::string_view text) {
  std::vector<SweepRow> rows;
  auto lines = split(text, '\n');
  if (lines.empty() || lines.front().empty()) throw IoError("sweep.csv: missing header");
  const auto header = split(lines.front(), ',');
  int d = 0;
  for (const auto& h : header) d += h.starts_with("mmse_") ? 1 : 0;
  const bool has_distance = header.back() == "operator_distance";
  const std::size_t expected = 6 + static_cast<std::size_t>(d) + 2 + (has_distance ? 1 : 0);
  if (header.size() != expected || header.front() != "axis") {
    throw IoError("sweep.csv: unexpected header");
  }
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto f = split(lines[li], ',');
    if (f.size() != expected) {
      throw IoError("sweep.csv:" + std::to_string(li + 1) + ": wrong field count");
    }
    SweepRow r;
    r.axis = parse_field(f[0]);
    r.d1_posterior = parse_field(f[1]);
    r.d1_prior = parse_field(f[2]);
    r.w1 = parse_field(f[3]);
    r.w1_stderr = parse_field(f[4]);
    r.tv = parse_field(f[5]);
    r.mmse.resize(d);
    for (int k = 0; k < d; ++k) r.mmse[k] = parse_field(f[6 + static_cast<std::size_t>(k)]);
    r.variance = parse_field(f[6 + static_cast<std::size_t>(d)]);
    r.status = std::string(f[7 + static_cast<std::size_t>(d)]);
    if (has_distance) r.operator_distance = parse_field(f[8 + static_cast<std::size_t>(d)]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string sample_set_hash(const SampleSet& samples) {
  return to_hex(fnv1a64(render_samples_csv(samples)));
}

std::string file_hash(const fs::path& path) { return to_hex(fnv1a64(read_text(path))); }

Manifest write_results(const SweepResult& result, const fs::path& dir) {
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directory " + dir.string() + ": " + e.what());
  }
  Manifest m;
  write_text(dir / "sweep.csv", render_sweep_csv(result));
  m.files.push_back(manifest_entry(dir, "sweep.csv"));

  json summary = result.provenance;
  summary["schema_version"] = kSummarySchemaVersion;
  summary["kind"] = to_string(result.kind);
  summary["correlations"] = summary_json(result.summary);
  summary["bias_floor"] = transport_json(result.bias_floor);
  summary["sweep_csv_hash"] = m.files.back().fnv1a64;
  write_json_file(summary, dir / "summary.json");
  m.files.push_back(manifest_entry(dir, "summary.json"));

  if (!result.reference.empty() || !result.chains.empty()) {
    fs::create_directories(dir / "samples");
    if (!result.reference.empty()) write_sample_pair(result.reference, dir, "reference", m);
    for (std::size_t i = 0; i < result.chains.size(); ++i) {
      if (result.chains[i].empty()) continue;
      char stem[32];
      std::snprintf(stem, sizeof(stem), "chain_%03zu", i);
      write_sample_pair(result.chains[i], dir, stem, m);
    }
  }
  write_manifest(dir, m);
  return m;
}

SweepResult read_results(const fs::path& dir) {
  SweepResult r;
  json summary = read_json_file(dir / "summary.json");
  const std::string csv = read_text(dir / "sweep.csv");
  if (summary.contains("sweep_csv_hash") &&
      summary.at("sweep_csv_hash") != to_hex(fnv1a64(csv))) {
    throw IoError("sweep.csv does not match the hash recorded in summary.json");
  }
  config_context("summary.json", [&] {
    const int version = summary.at("schema_version").get<int>();
    if (version != kSummarySchemaVersion) {
      throw IoError("summary.json: unsupported schema_version " + std::to_string(version));
    }
    r.kind = experiment_kind_from_string(summary.at("kind").get<std::string>());
    r.summary = summary_from_json(summary.at("correlations"));
    r.bias_floor = transport_from_json(summary.at("bias_floor"));
    for (const char* key :
         {"schema_version", "kind", "correlations", "bias_floor", "sweep_csv_hash"}) {
      summary.erase(key);
    }
    return 0;
  });
  r.provenance = std::move(summary);
  r.rows = parse_sweep_csv(csv);
  if (!(summarize(r.kind, r.rows) == r.summary)) {
    throw IoError("summary.json correlations do not match sweep.csv rows");
  }
  return r;
}

Manifest write_chain_results(const SampleSet& samples, const ExperimentSpec& spec,
                             const fs::path& dir) {
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directory " + dir.string() + ": " + e.what());
  }
  Manifest m;
  const std::string text = render_samples_csv(samples);
  write_text(dir / "samples.csv", text);
  json meta = samples.meta();
  meta["schema_version"] = kSummarySchemaVersion;
  meta["spec"] = to_json(spec);
  meta["content_hash"] = to_hex(fnv1a64(text));
  meta["n"] = samples.size();
  meta["mmse"] = to_json(mmse_estimate(samples));
  meta["variance"] = variance_estimate(samples);
  write_json_file(meta, dir / "samples.meta.json");
  m.files.push_back(manifest_entry(dir, "samples.csv"));
  m.files.push_back(manifest_entry(dir, "samples.meta.json"));
  write_manifest(dir, m);
  return m;
}

}  // namespace pnpula
