#pragma once

// Batch front end shared by the `pidb` executable and the tests: one request
// in, rendered report and exit status out.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pidb/bounds.hpp"
#include "pidb/io.hpp"
#include "pidb/lp.hpp"
#include "pidb/mc.hpp"

namespace pidb {

enum class Subcommand { Bounds, Check, Contrast, Simulate };

struct RunRequest {
  Subcommand command = Subcommand::Bounds;
  /// Trial document; a truth document for `simulate`.
  std::string input;
  /// Arms to report (default: every arm in the input). `contrast` takes
  /// exactly two, t then t'.
  std::vector<std::string> arms;
  std::optional<std::string> assumptions;
  /// Expands to the adjacent-cell variation family with this bound.
  std::optional<double> bv_adjacent;
  VariationReading bv_interpretation = VariationReading::Literal;
  Method method = Method::Auto;
  Tolerances tolerances;
  Format format = Format::Markdown;
  std::uint64_t seed = 20240601;
  int n_starts = 200;
  ContrastKind contrast = ContrastKind::Difference;

  long n_total = 7020;
  int reps = 200;
  bool exact = false;
  bool round_summaries = false;
  bool joint = false;

  Execution execution = Execution::Parallel;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 validation, 3 infeasible, 4 solver failure
  std::string output;
  std::string diagnostics;
};

/// Never throws for library errors; they map to exit codes with the
/// message in `diagnostics`.
RunResult run(const RunRequest& request);

}  // namespace pidb
