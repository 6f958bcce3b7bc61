#include "pnpula/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pnpula/assignment.hpp"
#include "pnpula/errors.hpp"
#include "pnpula/rng.hpp"

namespace pnpula {

namespace {

PseudometricReport rms_difference(const VectorField& f1, const VectorField& f2,
                                  const SampleSet& samples, std::string label) {
  if (samples.empty()) throw InsufficientDataError("pseudometric: empty sample set");
  double acc = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Vector x = samples.point(k);
    acc += (f1(x) - f2(x)).squaredNorm();
  }
  return {std::sqrt(acc / static_cast<double>(samples.size())), samples.size(), std::move(label)};
}

// First k entries of a uniform random permutation of 0..n-1.
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

PseudometricReport posterior_l2(const VectorField& f1, const VectorField& f2,
                                const SampleSet& reference_samples) {
  return rms_difference(f1, f2, reference_samples, "posterior-ref");
}

PseudometricReport prior_l2(const VectorField& f1, const VectorField& f2,
                            const SampleSet& prior_samples) {
  return rms_difference(f1, f2, prior_samples, "prior");
}

std::string to_string(TransportMethod method) {
  switch (method) {
    case TransportMethod::kExactAssignment:
      return "exact-assignment";
    case TransportMethod::kSubsampleAverage:
      return "subsample-average";
  }
  return "unknown";
}

TransportEstimate wasserstein1_exact(const SampleSet& a, const SampleSet& b) {
  if (a.size() != b.size()) {
    throw DimensionError("wasserstein1_exact: clouds have sizes " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  if (a.empty()) throw InsufficientDataError("wasserstein1_exact: empty clouds");
  if (a.dimension() != b.dimension()) throw DimensionError("wasserstein1_exact: dimension mismatch");
  const std::size_t n = a.size();
  if (n > kMaxExactTransportSize) {
    throw BudgetError("wasserstein1_exact: n=" + std::to_string(n) + " exceeds " +
                      std::to_string(kMaxExactTransportSize) +
                      "; use wasserstein1_estimate for large clouds");
  }
  const auto& pa = a.points();
  const auto& pb = b.points();
  const auto d = pa.cols();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = pa.data() + static_cast<std::ptrdiff_t>(i) * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = pb.data() + static_cast<std::ptrdiff_t>(j) * d;
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      cost[i * n + j] = std::sqrt(s);
    }
  }
  const Assignment sol = solve_assignment(cost, n);
  return {sol.cost / static_cast<double>(n), TransportMethod::kExactAssignment, n, 0.0};
}

TransportEstimate wasserstein1_estimate(const SampleSet& a, const SampleSet& b, std::size_t n_sub,
                                        std::size_t n_repeats, std::uint64_t seed) {
  if (n_sub == 0 || n_repeats == 0) {
    throw ConfigError("wasserstein1_estimate: n_sub and n_repeats must be >= 1");
  }
  if (n_sub > std::min(a.size(), b.size())) {
    throw InsufficientDataError("wasserstein1_estimate: n_sub=" + std::to_string(n_sub) +
                                " exceeds cloud size");
  }
  Rng rng = make_rng(seed);
  std::vector<double> values;
  values.reserve(n_repeats);
  for (std::size_t r = 0; r < n_repeats; ++r) {
    const auto ia = draw_without_replacement(a.size(), n_sub, rng);
    const auto ib = draw_without_replacement(b.size(), n_sub, rng);
    values.push_back(wasserstein1_exact(a.subset(ia), b.subset(ib)).value);
  }
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n_repeats);
  double se = 0.0;
  if (n_repeats > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    se = std::sqrt(ss / static_cast<double>(n_repeats - 1) / static_cast<double>(n_repeats));
  }
  return {mean, TransportMethod::kSubsampleAverage, n_sub, se};
}

double tv_histogram(const SampleSet& a, const SampleSet& b, const HistogramGrid& grid) {
  if (a.dimension() != 2 || b.dimension() != 2) {
    throw DimensionError("tv_histogram: only 2D sample sets are supported");
  }
  if (a.empty() || b.empty()) throw InsufficientDataError("tv_histogram: empty sample set");
  for (int k = 0; k < 2; ++k) {
    if (grid.bins[k] < 1 || !(grid.low[k] < grid.high[k])) {
      throw ConfigError("tv_histogram: grid needs bins >= 1 and low < high");
    }
  }
  const std::size_t cells = static_cast<std::size_t>(grid.bins[0]) * grid.bins[1];
  const auto fill = [&](const SampleSet& s) {
    std::vector<double> h(cells + 1, 0.0);  // last entry: overflow
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::array<int, 2> cell{};
      bool inside = true;
      for (int k = 0; k < 2; ++k) {
        const double v = s.row(i)(k);
        if (!(v >= grid.low[k] && v <= grid.high[k])) {
          inside = false;
          break;
        }
        const double t = (v - grid.low[k]) / (grid.high[k] - grid.low[k]);
        cell[k] = std::min(grid.bins[k] - 1, static_cast<int>(t * grid.bins[k]));
      }
      const std::size_t slot =
          inside ? static_cast<std::size_t>(cell[0]) * grid.bins[1] + cell[1] : cells;
      h[slot] += 1.0;
    }
    for (double& v : h) v /= static_cast<double>(s.size());
    return h;
  };
  const auto ha = fill(a);
  const auto hb = fill(b);
  double l1 = 0.0;
  for (std::size_t i = 0; i <= cells; ++i) l1 += std::abs(ha[i] - hb[i]);
  return std::clamp(0.5 * l1, 0.0, 1.0);
}

Vector mmse_estimate(const SampleSet& samples) {
  if (samples.empty()) throw InsufficientDataError("mmse_estimate: empty sample set");
  return samples.points().colwise().mean().transpose();
}

double variance_estimate(const SampleSet& samples) {
  if (samples.empty()) throw InsufficientDataError("variance_estimate: empty sample set");
  const Vector m = mmse_estimate(samples);
  // Centered form of E||x||^2 - ||E x||^2; avoids cancellation for far-off means.
  return (samples.points().rowwise() - m.transpose()).rowwise().squaredNorm().mean();
}

double lipschitz_estimate(const VectorField& f, const SampleSet& domain_samples,
                          std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw ConfigError("lipschitz_estimate: n_pairs must be >= 1");
  if (domain_samples.empty()) throw InsufficientDataError("lipschitz_estimate: empty domain");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, domain_samples.size() - 1);
  std::normal_distribution<double> normal;
  const int d = domain_samples.dimension();
  double best = 0.0;
  const auto quotient = [&](const Vector& x1, const Vector& x2) {
    const double dx = (x1 - x2).norm();
    if (dx == 0.0) return 0.0;
    return (f(x1) - f(x2)).norm() / dx;
  };
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const Vector x1 = domain_samples.point(pick(rng));
    const Vector x2 = domain_samples.point(pick(rng));
    best = std::max(best, quotient(x1, x2));
    Vector dir(d);
    for (int j = 0; j < d; ++j) dir[j] = normal(rng);
    const double nd = dir.norm();
    if (nd > 0.0) best = std::max(best, quotient(x1, x1 + dir * (1e-4 / nd)));
  }
  return best;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("pearson_r: length mismatch");
  if (xs.size() < 3) throw InsufficientDataError("pearson_r: need at least 3 pairs");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw InsufficientDataError("pearson_r: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("spearman_r: length mismatch");
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  return pearson_r(rx, ry);
}

}  // namespace pnpula
