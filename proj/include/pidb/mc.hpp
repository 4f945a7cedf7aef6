#pragma once

// Sampling-imprecision studies: draw pseudo-trials from a hypothetical joint
// distribution, recompute the bounds on each, and summarize how the
// endpoints scatter across replications.

#include <cstdint>
#include <string>
#include <vector>

#include "pidb/bounds.hpp"
#include "pidb/model.hpp"
#include "pidb/parallel.hpp"

namespace pidb {

struct GroundTruth {
  std::vector<CovariateLabels> labels;
  std::vector<std::string> arms;
  std::vector<std::vector<double>> means;  // [arm][cell], cell in rank order
  std::vector<double> probs;               // P(x = cell)
  std::vector<double> assignment;          // P(t = arm)

  int covariates() const { return static_cast<int>(labels.size()); }
  /// Boxes exactly, simplex sums within 1e-12. Throws ValidationError.
  void validate() const;
};

/// A truth consistent with reported summaries: the average of the LP
/// solutions that push each joint mass and cell probability of the
/// two-arm system to both extremes, so every cell keeps positive mass.
/// Assignment shares follow the arms' sample sizes.
GroundTruth interior_truth(const TrialSummary& trial, const std::vector<std::string>& arms,
                           const Tolerances& tolerances = {});

/// Population summaries of the truth (no sampling noise). `n_total` only
/// sets the nominal arm sizes.
TrialSummary implied_summary(const GroundTruth& truth, long n_total = 1'000'000);

/// Simulates n_total subjects one at a time: cell, then arm, then a
/// Bernoulli outcome. Summaries are sample frequencies, optionally rounded
/// to three decimals. Throws DegenerateSample when some (arm, x_k = v)
/// stratum is empty.
TrialSummary draw_trial(const GroundTruth& truth, long n_total, std::uint64_t seed,
                        bool round_to_3 = false);

struct StudyConfig {
  long n_total = 7020;
  int reps = 200;
  std::uint64_t seed = 1;
  /// Bypass sampling and use the population summaries in every replication.
  bool exact = false;
  bool round_summaries = false;
  /// Arms to bound (default: all). Each arm is bounded in its own system
  /// unless `joint` is set.
  std::vector<std::string> arms;
  bool joint = false;
  std::vector<Assumption> assumptions;
  Tolerances tolerances;
  BoundsConfig bounds;
  Execution execution = Execution::Parallel;

  void validate() const;
};

enum class ReplicationStatus { Ok, DegenerateSample, InfeasibleInput, SolverFailure };
std::string_view to_string(ReplicationStatus status);

struct EndpointSummary {
  std::string arm;
  CellIndex cell;
  std::string label;
  bool upper = false;
  std::vector<double> values;  // successful replications, in replication order
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  double p05 = 0.0;  // nearest-rank percentiles
  double p95 = 0.0;
  BoundClass status = BoundClass::CertifiedLP;  // weakest class seen
};

struct SimulationReport {
  long n_total = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  bool exact = false;
  std::vector<ReplicationStatus> replications;
  int ok = 0;
  int degenerate = 0;
  int infeasible = 0;
  int failed = 0;
  std::vector<EndpointSummary> endpoints;  // arm-major, then cell, lower before upper
};

/// Nearest-rank percentile (0 < pct <= 100) of unsorted values.
double nearest_rank(std::vector<double> values, double pct);

/// Throws StudyFailure when no replication succeeds.
SimulationReport imprecision_study(const GroundTruth& truth, const StudyConfig& config);

}  // namespace pidb
