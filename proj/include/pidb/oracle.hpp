#pragma once

// Brute-force inner approximation of identification regions for K <= 2.
// Points are drawn in a reduced coordinate system where the marginal,
// sum-to-one and short-mean rows hold by construction, so every retained
// point is exactly feasible and the reported intervals are one-sided:
// they can only be narrower than the sharp interval.

#include <cstdint>
#include <string_view>
#include <vector>

#include "pidb/model.hpp"
#include "pidb/parallel.hpp"

namespace pidb {

struct OracleBudget {
  long n_samples = 2'000'000;
  int refine_steps = 100;
  std::uint64_t seed = 0x5eed;
  Execution execution = Execution::Parallel;

  void validate() const;
};

/// Samples per shard. Budgets are rounded up to whole shards and shard s
/// draws from its own seed stream, so a larger budget always contains the
/// shards of a smaller one.
inline constexpr long kOracleShard = 1L << 14;

/// Retained feasible samples followed by the refined extreme points of
/// every cell mean. Throws EmptyOracle when nothing feasible was found and
/// InvalidDimension for K > 2 or more than two arms.
std::vector<LongPoint> sample_feasible(const ConstraintSystem& system, const OracleBudget& budget);

struct OracleInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Inner intervals for every (arm, cell), arm-major. Throws EmptyOracle.
std::vector<OracleInterval> oracle_bounds(const ConstraintSystem& system,
                                          const OracleBudget& budget);

/// [lo+, hi-] for E[t | cell] over the retained and refined points.
OracleInterval grid_bounds(const ConstraintSystem& system, std::string_view t,
                           const CellIndex& cell, const OracleBudget& budget);

}  // namespace pidb
