#pragma once

// Multistart local search for systems outside the LP route: bounded-real
// outcomes and assumptions linking different cells. Each start is polished by
// an augmented-Lagrangian loop whose subproblems are solved by projected
// L-BFGS on the unit box; the most extreme approximately feasible result wins.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pidb/model.hpp"
#include "pidb/parallel.hpp"

namespace pidb {

struct LocalConfig {
  double kkt_tol = 1e-8;
  /// Initial augmented-Lagrangian penalty. Kept stiff so iterates stay near
  /// the constraint set instead of draining a cell's mass.
  double rho0 = 1e4;
  int max_outer = 50;
  int max_inner = 500;
};

struct SolverConfig {
  int n_starts = 200;
  std::uint64_t seed = 20240601;
  double feas_threshold = 1e-6;
  double penalty_mu0 = 1000.0;
  double mu_growth = 2.0;
  LocalConfig local;
  Execution execution = Execution::Parallel;

  /// Throws ValidationError.
  void validate() const;
};

enum class TargetKind { Mean, Difference, Ratio };

/// Mean: E[arm | cell]. Difference / Ratio: E[arm | cell] against
/// E[arm_prime | cell_prime].
struct Target {
  TargetKind kind = TargetKind::Mean;
  int arm = 0;
  std::uint32_t cell = 0;
  int arm_prime = 0;
  std::uint32_t cell_prime = 0;

  static Target mean(const ConstraintSystem& system, std::string_view t, const CellIndex& cell);
  static Target contrast(const ConstraintSystem& system, TargetKind kind, std::string_view t,
                         std::string_view t_prime, const CellIndex& cell,
                         const CellIndex& cell_prime);
};

enum class Direction { Lower, Upper };

enum class ConstraintFamily { ShortMean, Marginal, SumToOne, Direct, Diff, Ratio };
std::string_view to_string(ConstraintFamily family);

/// Smooth form of a constraint system: inequality rows g(z) <= 0 and
/// equality rows h(z) = 0, each a sum of constant, linear and bilinear
/// terms in the flat unknown vector. Boxes are left to the solver.
class SmoothProblem {
 public:
  SmoothProblem(const ConstraintSystem& system, const Target& target, Direction direction);

  int size() const { return size_; }
  int row_count() const { return static_cast<int>(rows_.size()); }
  ConstraintFamily family(int row) const { return rows_[static_cast<std::size_t>(row)].family; }
  bool is_equality(int row) const { return rows_[static_cast<std::size_t>(row)].equality; }

  double row_value(int row, std::span<const double> z) const;
  void row_gradient(int row, std::span<const double> z, std::span<double> grad) const;

  /// Target quantity at z (unsigned).
  double target_value(std::span<const double> z) const;
  /// Minimization-form objective: target for Lower, -target for Upper.
  double objective(std::span<const double> z) const;
  void objective_gradient(std::span<const double> z, std::span<double> grad) const;

  /// Largest positive part over the rows (|h| for equalities).
  double violation(std::span<const double> z) const;
  /// Sum of positive parts over the rows.
  double total_violation(std::span<const double> z) const;

  /// PHR augmented Lagrangian; writes its gradient into `grad`.
  double augmented_lagrangian(std::span<const double> z, std::span<const double> lambda,
                              double rho, std::span<double> grad) const;
  /// First-order multiplier update at z.
  void update_multipliers(std::span<const double> z, std::span<double> lambda,
                          double rho) const;

 private:
  struct Term {
    double coef;
    int i;
    int j;  // -1 for a linear term
  };
  struct Row {
    ConstraintFamily family;
    bool equality;
    double constant;
    std::vector<Term> terms;
  };

  double eval(const Row& row, std::span<const double> z) const;
  void add_gradient(const Row& row, std::span<const double> z, double scale,
                    std::span<double> grad) const;

  int size_ = 0;
  std::vector<Row> rows_;
  Target target_;
  Direction direction_;
  int target_index_ = 0;
  int prime_index_ = 0;
};

struct LocalResult {
  LongPoint point;
  double objective = 0.0;  // target value at point (unsigned)
  double violation = 0.0;  // system max_violation at point
  double total_violation = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
};

/// n_starts random starts (flat Dirichlet probs, uniform means) preceded
/// by the two deterministic starts: product-of-marginals probs with each
/// arm's overall mean, then uniform probs with coordinate-averaged short
/// means. Start i > 1 depends only on (seed, i).
std::vector<LongPoint> sample_starts(const ConstraintSystem& system, const SolverConfig& config);

LocalResult local_solve(const ConstraintSystem& system, const Target& target,
                        Direction direction, const LongPoint& start, const SolverConfig& config);

/// Sign-adjusted objective (lower is better) plus mu times the summed
/// positive constraint violation.
double score(const LocalResult& result, Direction direction, double mu);

enum class EndpointStatus { Feasible, Infeasible };

struct EndpointReport {
  EndpointStatus status = EndpointStatus::Infeasible;
  /// Feasible: the most extreme approximately feasible objective.
  /// Infeasible: objective of the lowest-scoring result (never a bound).
  double value = 0.0;
  LongPoint attained_point;
  int feasible_count = 0;
  int starts = 0;
  int failed_starts = 0;
  struct Infeasible {
    double value;
    double violation;
  };
  std::optional<Infeasible> best_infeasible;
  double final_mu = 0.0;
  double wall_seconds = 0.0;
};

/// Throws SolverFailure when every start breaks down numerically.
EndpointReport multistart_bound(const ConstraintSystem& system, const Target& target,
                                Direction direction, const SolverConfig& config);

}  // namespace pidb
