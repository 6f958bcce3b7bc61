#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pnpula {

struct Assignment {
  std::vector<int> col_for_row;
  // sum_i cost(i, col_for_row[i]), correctly rounded, so every optimal
  // matching reports the same value.
  double cost = 0.0;
};

// Exact minimum-cost perfect matching on a dense n x n cost matrix stored
// row-major. An epsilon-scaling auction supplies starting column prices; the
// matching itself comes from shortest augmenting paths over reduced costs
// (Jonker-Volgenant augmentation), so the result is optimal whatever the
// auction produced. O(n^3) worst case. Costs must be finite.
Assignment solve_assignment(std::span<const double> cost, std::size_t n);

}  // namespace pnpula
