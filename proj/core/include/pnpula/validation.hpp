#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnpula/experiment.hpp"

namespace pnpula {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;

  bool operator==(const CheckResult& other) const;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool all_passed() const;
  bool operator==(const ValidationReport& other) const;
};

struct ValidationOptions {
  std::uint64_t seed = kDefaultMasterSeed;
  // Shift every denoiser output by 1e-3 per coordinate; the quadrature check
  // must then fail.
  bool fault_inject = false;
};

inline constexpr double kFaultOffset = 1e-3;

// Runs every oracle check: quadrature MMSE, importance-sampled posterior
// mean, finite-difference scores, Tweedie identity, conjugate chain,
// brute-force assignment, W1 translation, spectral constants.
ValidationReport run_validation_suite(const ValidationOptions& options = {},
                                      const std::function<void(std::string_view)>& progress = {});

nlohmann::json to_json(const ValidationReport& report);
ValidationReport validation_report_from_json(const nlohmann::json& j);

}  // namespace pnpula
