#pragma once

#include <cstdint>
#include <string>

#include "ioumatch/synth_data.hpp"

namespace ioumatch {

/// Outcome of one property battery run by the `diag` command.
struct DiagReport {
  std::string kind;
  std::size_t cases = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  Json details = Json::object();
};

/// Exact IoU against the Monte-Carlo estimate on n random overlapping pairs,
/// plus the closed-form cases. Tolerance 5e-3 (1e-9 for the closed forms).
DiagReport diag_iou_oracle(std::size_t n, std::uint64_t seed, std::uint64_t samples = 1000000);

/// Grid-pool Jacobians (tolerance 1e-4) and IoU-head box gradients (1e-3)
/// against central finite differences on n random configurations.
DiagReport diag_grad_check(std::size_t n, std::uint64_t seed);

/// LHS keeps ceil(n/2) per cluster and contains the IoU-NMS survivors; NMS
/// survivors of one class never overlap at or above the threshold.
DiagReport diag_lhs_check(std::size_t n, std::uint64_t seed);

Json diag_report_to_json(const DiagReport& report);

}  // namespace ioumatch
