#pragma once

// Dense two-phase tableau simplex for small LPs of the form
//   min / max  c'x   s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pidb {

enum class Sense { Minimize, Maximize };

struct LinearProgram {
  Sense sense = Sense::Minimize;
  Eigen::VectorXd objective;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;

  int num_vars() const { return static_cast<int>(objective.size()); }
  /// Throws ShapeError on inconsistent dimensions or non-finite entries.
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };
std::string_view to_string(LpStatus status);

struct SimplexOptions {
  double pivot_tol = 1e-9;       // smallest entry accepted in the ratio test
  double breakdown_tol = 1e-12;  // pivots below this abort with NumericalFailure
  double optimality_tol = 1e-9;  // reduced-cost threshold
  double feasibility_tol = 1e-8; // relative, scaled by 1 + |b|_inf
  int stall_limit = 500;         // degenerate pivots before switching to Bland's rule
  int max_iterations = 200000;
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  /// Optimal: the optimum. Infeasible: the phase-1 minimizer of total
  /// artificial infeasibility. Unbounded: the last basic feasible point.
  Eigen::VectorXd x;
  double max_residual = 0.0;
  int iterations = 0;
  bool used_bland = false;

  // Final basis over standard-form columns (structural then one slack per
  // A_ub row) and the rows kept after redundant equalities were dropped.
  std::vector<int> basis;
  std::vector<int> rows;
};

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options = {});

/// Max violation of A_ub x <= b_ub, A_eq x = b_eq and x >= 0.
double lp_residual(const LinearProgram& lp, const Eigen::VectorXd& x);

struct OptimalityCertificate {
  double primal_residual = 0.0;
  /// Most negative reduced cost (minimization form) over all columns.
  double min_reduced_cost = 0.0;
  /// Largest |dual| of a <= row with the wrong sign.
  double dual_sign_violation = 0.0;
  Eigen::VectorXd duals;
  bool ok = false;
};

/// Recomputes duals from the returned basis against the original data and
/// checks primal feasibility, dual feasibility and dual signs.
OptimalityCertificate verify_optimality(const LinearProgram& lp, const LpSolution& solution,
                                        double tol = 1e-7);

}  // namespace pidb
