#pragma once

// Certified bounds for binary outcomes. The system is rewritten in the joint
// probabilities w[t, cell] = P[y(t) = 1, x = cell] and P[cell], where every
// constraint is affine; ratio objectives are then linearized by Charnes-Cooper.

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pidb/model.hpp"
#include "pidb/simplex.hpp"

namespace pidb {

enum class RowFamily { ShortMean, Marginal, SumToOne, Coupling, Assumption, Extra };
std::string_view to_string(RowFamily family);

/// lo <= sum coeffs * z <= hi; infinite sides are absent.
struct LinearRow {
  std::vector<std::pair<int, double>> coeffs;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  RowFamily family = RowFamily::Extra;

  double eval(std::span<const double> z) const;
  /// Amount by which the row is violated at z (0 when satisfied).
  double violation(std::span<const double> z) const;
};

class ReparamSystem {
 public:
  int arm_count() const { return arms_; }
  int cell_count() const { return cells_; }
  int variable_count() const { return (arms_ + 1) * cells_; }
  int w_index(int arm, std::uint32_t cell) const { return arm * cells_ + static_cast<int>(cell); }
  int p_index(std::uint32_t cell) const { return arms_ * cells_ + static_cast<int>(cell); }
  const std::vector<LinearRow>& rows() const { return rows_; }
  const ConstraintSystem& source() const { return source_; }

  /// Residuals of the relaxed equality rows in the source system's order
  /// (target - sum) at a (w, P) vector.
  std::vector<double> equality_residuals(std::span<const double> z) const;
  /// (w, P) image of a long point: w = means * probs.
  std::vector<double> map_point(const LongPoint& point) const;

 private:
  friend ReparamSystem reparameterize(const ConstraintSystem&);
  ConstraintSystem source_;
  int arms_ = 0;
  int cells_ = 0;
  std::vector<LinearRow> rows_;
  // Index in rows_ of the lo/hi row for each source equality.
  std::vector<int> equality_rows_;
};

/// Requires system.lp_eligible() (RouteError otherwise).
ReparamSystem reparameterize(const ConstraintSystem& system);

/// Builds min/max of sum(coeffs * z) over the rows with z >= 0.
LinearProgram to_linear_program(const std::vector<LinearRow>& rows, int variables,
                                const std::vector<std::pair<int, double>>& objective, Sense sense);

enum class BoundStatus { Certified, Unbounded };

struct Endpoint {
  double value = 0.0;
  BoundStatus status = BoundStatus::Certified;
  /// Denominator mass at the optimum fell below 1e-9: the extreme is
  /// approached only as the cell (or reference mean) vanishes.
  bool vanishing_mass = false;
  bool certificate_ok = false;
  std::vector<double> argopt;  // (w, P) at the optimum
  int iterations = 0;
};

struct IntervalBound {
  Endpoint lower;
  Endpoint upper;
  double lo() const { return lower.value; }
  double hi() const { return upper.value; }
};

/// Extremes of w[t, cell] / P[cell]. Throws InfeasibleSystem when the
/// reparameterized system is empty.
IntervalBound cell_mean_bounds(const ReparamSystem& reparam, std::string_view t,
                               const CellIndex& cell);
Endpoint cell_mean_endpoint(const ReparamSystem& reparam, int arm, std::uint32_t cell,
                            bool upper);

enum class ContrastKind { Difference, Ratio };

/// Difference: extremes of (w[t] - w[t']) / P at `cell`. Ratio: extremes
/// of w[t] / w[t'] at `cell`; the upper end is Unbounded when the reference
/// mean can vanish while the numerator stays positive.
IntervalBound contrast_bounds(const ReparamSystem& reparam, std::string_view t,
                              std::string_view t_prime, const CellIndex& cell, ContrastKind kind);

/// Whether E[t | cell] = v is attainable (phase-1 feasibility of the
/// system plus w[t, cell] = v * P[cell]). Requires 0 <= v <= 1.
bool membership(const ReparamSystem& reparam, std::string_view t, const CellIndex& cell,
                double v);

/// Extremes of a linear-fractional objective num'z / den'z over the rows
/// plus `extra`, via z = y / tau with den'y = 1. Exposed for tests.
Endpoint fractional_extreme(const ReparamSystem& reparam,
                            const std::vector<std::pair<int, double>>& numerator,
                            const std::vector<std::pair<int, double>>& denominator, bool upper,
                            const std::vector<LinearRow>& extra = {});

}  // namespace pidb
