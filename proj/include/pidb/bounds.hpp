#pragma once

// Route selection and per-cell bound tables. LP-eligible systems get
// certified endpoints; everything else goes through the multistart search.

#include <string>
#include <string_view>
#include <vector>

#include "pidb/lp.hpp"
#include "pidb/model.hpp"
#include "pidb/nlp.hpp"
#include "pidb/parallel.hpp"

namespace pidb {

enum class Method { Auto, LP, NLP };
std::string_view to_string(Method method);

enum class BoundClass { CertifiedLP, HeuristicNLP, HeuristicInfeasible };
std::string_view to_string(BoundClass status);

struct BoundsConfig {
  Method method = Method::Auto;
  SolverConfig nlp;
  Execution execution = Execution::Parallel;
};

/// Throws RouteError when the LP route is forced on a system that is not
/// LP-eligible.
Route resolve_route(const ConstraintSystem& system, Method method);

struct EndpointValue {
  double value = 0.0;
  BoundClass status = BoundClass::CertifiedLP;
  bool vanishing_mass = false;
  bool unbounded = false;
  int feasible_count = 0;
};

struct BoundRow {
  std::string arm;
  std::string arm_prime;  // contrasts only
  CellIndex cell;
  std::string label;
  EndpointValue lower;
  EndpointValue upper;

  /// The weaker of the two endpoint classes.
  BoundClass status() const;
};

struct BoundTable {
  std::string arm;
  std::string arm_prime;
  std::string quantity;  // "mean", "difference" or "ratio"
  Route route = Route::ExactLP;
  std::vector<BoundRow> rows;
};

/// One row per cell in rank order. Throws InfeasibleSystem on the LP route
/// when the system is empty.
BoundTable cell_mean_table(const ConstraintSystem& system, std::string_view t,
                           const BoundsConfig& config);

/// Same-cell contrasts of t against t_prime.
BoundTable contrast_table(const ConstraintSystem& system, std::string_view t,
                          std::string_view t_prime, ContrastKind kind, const BoundsConfig& config);

enum class VariationReading { Literal, WithinArm };
std::string_view to_string(VariationReading reading);

/// Symmetric bounds |E[t | xi] - E[t' | xi']| <= b over all ordered pairs of
/// cells that differ in exactly one covariate. Literal pairs arms across
/// treatments (t listed before t' in `arms`); WithinArm uses t' = t for each
/// arm. include_same_cell adds xi' = xi for the Literal reading.
std::vector<Assumption> adjacent_variation(const std::vector<std::string>& arms, int covariates,
                                           double b, VariationReading reading,
                                           bool include_same_cell = false);

}  // namespace pidb
