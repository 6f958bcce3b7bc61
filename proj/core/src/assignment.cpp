#include "pnpula/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pnpula/errors.hpp"
#include "pnpula/linalg.hpp"

namespace pnpula {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Auction schedule, relative to the largest |cost|.
constexpr double kAuctionStartEps = 0.1;
constexpr double kAuctionFinalEps = 1e-6;
constexpr double kAuctionScale = 8.0;
// Bids allowed per auction phase, in multiples of n.
constexpr std::size_t kAuctionBidBudget = 64;

struct State {
  explicit State(std::size_t n)
      : n(n), u(n, 0.0), v(n, 0.0), shortest(n), path(n, -1), col_for_row(n, -1),
        row_for_col(n, -1), remaining(n), visited_row(n), visited_col(n) {}

  std::size_t n;
  std::vector<double> u, v, shortest;
  std::vector<int> path, col_for_row, row_for_col, remaining;
  std::vector<char> visited_row, visited_col;
};

// Forward auction with epsilon scaling. Only the column prices it leaves in
// s.v matter: they warm-start the exact phase, which is correct for any
// prices. Stops early if a phase exceeds its bid budget.
void auction_prices(std::span<const double> cost, State& s) {
  const std::size_t n = s.n;
  double cmax = 0.0;
  for (const double c : cost) cmax = std::max(cmax, std::abs(c));
  if (cmax == 0.0) return;
  const double eps_final = cmax * kAuctionFinalEps;
  std::vector<int> queue;
  queue.reserve(n);
  for (double eps = cmax * kAuctionStartEps;; eps /= kAuctionScale) {
    eps = std::max(eps, eps_final);
    std::fill(s.col_for_row.begin(), s.col_for_row.end(), -1);
    std::fill(s.row_for_col.begin(), s.row_for_col.end(), -1);
    queue.clear();
    for (std::size_t i = n; i-- > 0;) queue.push_back(static_cast<int>(i));
    std::size_t budget = kAuctionBidBudget * n;
    while (!queue.empty()) {
      if (budget-- == 0) return;
      const auto i = static_cast<std::size_t>(queue.back());
      queue.pop_back();
      const double* row = cost.data() + i * n;
      double w1 = kInf, w2 = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double h = row[j] - s.v[j];
        if (h < w2) {
          if (h < w1) {
            w2 = w1;
            w1 = h;
            j1 = j;
          } else {
            w2 = h;
          }
        }
      }
      if (!std::isfinite(w2)) w2 = w1;  // n == 1
      s.v[j1] -= (w2 - w1) + eps;
      const int prev = s.row_for_col[j1];
      if (prev >= 0) {
        s.col_for_row[static_cast<std::size_t>(prev)] = -1;
        queue.push_back(prev);
      }
      s.row_for_col[j1] = static_cast<int>(i);
      s.col_for_row[i] = static_cast<int>(j1);
    }
    if (eps <= eps_final) return;
  }
}

// Dijkstra over reduced costs from free row `row`; returns the unassigned sink
// column and the path length in `min_val`.
int shortest_augmenting_path(std::span<const double> cost, State& s, int row, double& min_val) {
  const std::size_t n = s.n;
  min_val = 0.0;
  std::size_t num_remaining = n;
  for (std::size_t it = 0; it < n; ++it) s.remaining[it] = static_cast<int>(n - it - 1);
  std::fill(s.visited_row.begin(), s.visited_row.end(), 0);
  std::fill(s.visited_col.begin(), s.visited_col.end(), 0);
  std::fill(s.shortest.begin(), s.shortest.end(), kInf);

  int sink = -1;
  int i = row;
  while (sink == -1) {
    std::size_t index = n;
    double lowest = kInf;
    s.visited_row[static_cast<std::size_t>(i)] = 1;
    const double* crow = cost.data() + static_cast<std::size_t>(i) * n;
    const double base = min_val - s.u[static_cast<std::size_t>(i)];
    for (std::size_t it = 0; it < num_remaining; ++it) {
      const auto j = static_cast<std::size_t>(s.remaining[it]);
      const double r = base + crow[j] - s.v[j];
      if (r < s.shortest[j]) {
        s.path[j] = i;
        s.shortest[j] = r;
      }
      if (s.shortest[j] < lowest || (s.shortest[j] == lowest && s.row_for_col[j] == -1)) {
        lowest = s.shortest[j];
        index = it;
      }
    }
    min_val = lowest;
    if (index == n || !std::isfinite(min_val)) {
      throw Error("solve_assignment: no feasible augmenting path");
    }
    const auto j = static_cast<std::size_t>(s.remaining[index]);
    if (s.row_for_col[j] == -1) {
      sink = static_cast<int>(j);
    } else {
      i = s.row_for_col[j];
    }
    s.visited_col[j] = 1;
    s.remaining[index] = s.remaining[--num_remaining];
  }
  return sink;
}

void augment(std::span<const double> cost, State& s, int cur) {
  const std::size_t n = s.n;
  double min_val = 0.0;
  int j = shortest_augmenting_path(cost, s, cur, min_val);

  s.u[static_cast<std::size_t>(cur)] += min_val;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.visited_row[i] && static_cast<int>(i) != cur) {
      s.u[i] += min_val - s.shortest[static_cast<std::size_t>(s.col_for_row[i])];
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (s.visited_col[c]) s.v[c] -= min_val - s.shortest[c];
  }

  while (true) {
    const int i = s.path[static_cast<std::size_t>(j)];
    s.row_for_col[static_cast<std::size_t>(j)] = i;
    std::swap(s.col_for_row[static_cast<std::size_t>(i)], j);
    if (i == cur) break;
  }
}

}  // namespace

Assignment solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) {
    throw DimensionError("solve_assignment: cost has " + std::to_string(cost.size()) +
                         " entries, expected " + std::to_string(n * n));
  }
  Assignment result;
  if (n == 0) return result;
  for (const double c : cost) {
    if (!std::isfinite(c)) throw Error("solve_assignment: non-finite cost entry");
  }

  State s(n);
  auction_prices(cost, s);

  // Dual feasibility for the exact phase: u_i = min_j (c_ij - v_j). Keep only
  // auction assignments that are exactly tight under these potentials.
  std::vector<int> free_rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = cost.data() + i * n;
    double m = kInf;
    for (std::size_t j = 0; j < n; ++j) m = std::min(m, row[j] - s.v[j]);
    s.u[i] = m;
    const int j = s.col_for_row[i];
    if (j < 0 || row[j] - s.v[static_cast<std::size_t>(j)] != m) {
      if (j >= 0 && s.row_for_col[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
        s.row_for_col[static_cast<std::size_t>(j)] = -1;
      }
      s.col_for_row[i] = -1;
      free_rows.push_back(static_cast<int>(i));
    }
  }
  for (const int i : free_rows) augment(cost, s, i);

  result.col_for_row = std::move(s.col_for_row);
  std::vector<double> chosen(n);
  for (std::size_t i = 0; i < n; ++i) {
    chosen[i] = cost[i * n + static_cast<std::size_t>(result.col_for_row[i])];
  }
  result.cost = exact_sum(chosen);
  return result;
}

}  // namespace pnpula
