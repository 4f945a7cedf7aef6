#pragma once

// Domain types for reported subgroup summaries and the compiled identification
// system relating them to long (full-profile) means and cell probabilities.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pidb {

inline constexpr int kMaxCovariates = 12;

/// Covariate profile. Bit k holds the value of covariate k; the integer rank
/// gives bit k the weight 2^k.
class CellIndex {
 public:
  CellIndex() = default;
  CellIndex(int dimension, std::uint32_t rank);
  static CellIndex from_bits(std::span<const int> bits);

  int dimension() const { return dimension_; }
  std::uint32_t rank() const { return rank_; }
  int bit(int k) const { return static_cast<int>((rank_ >> k) & 1U); }
  std::vector<int> bits() const;
  CellIndex flipped(int k) const { return {dimension_, rank_ ^ (1U << k)}; }
  /// Number of covariates on which the two profiles differ.
  int hamming(const CellIndex& other) const;

  auto operator<=>(const CellIndex&) const = default;

 private:
  int dimension_ = 0;
  std::uint32_t rank_ = 0;
};

/// All 2^K cells in ascending rank order. Throws InvalidDimension outside [1, K_max].
std::vector<CellIndex> enumerate_cells(int covariates);

enum class OutcomeKind { Binary, BoundedReal };

struct ArmSummary {
  std::string treatment_id;
  long n_subjects = 0;
  std::vector<double> marginal;      // P(x_k = 1)
  std::vector<double> short_mean_0;  // E[y | x_k = 0]
  std::vector<double> short_mean_1;  // E[y | x_k = 1]
  OutcomeKind outcome_kind = OutcomeKind::Binary;

  int covariates() const { return static_cast<int>(marginal.size()); }
  /// Throws ValidationError naming the offending field.
  void validate(int covariates) const;
};

struct CovariateLabels {
  std::string label0;
  std::string label1;
};

/// Concatenated per-covariate labels in covariate order, e.g. "YFL".
std::string cell_label(const std::vector<CovariateLabels>& labels, const CellIndex& cell);

class TrialSummary {
 public:
  TrialSummary(std::vector<CovariateLabels> labels, std::vector<ArmSummary> arms);

  int covariates() const { return static_cast<int>(labels_.size()); }
  const std::vector<CovariateLabels>& labels() const { return labels_; }
  const std::vector<ArmSummary>& arms() const { return arms_; }
  const ArmSummary& arm(std::string_view treatment_id) const;
  bool has_arm(std::string_view treatment_id) const;

  std::string cell_label(const CellIndex& cell) const;
  /// Accepts a label string ("YFL") or a bit string in covariate order ("010").
  std::optional<CellIndex> parse_cell(std::string_view text) const;

 private:
  std::vector<CovariateLabels> labels_;
  std::vector<ArmSummary> arms_;
};

struct ImpliedMeans {
  std::vector<double> per_covariate;  // short_mean_0 (1 - p) + short_mean_1 p
  double spread = 0.0;                // max - min of per_covariate
};

ImpliedMeans implied_overall_means(const ArmSummary& arm);

enum class AssumptionForm { Direct, Diff, Ratio };

/// One bounded-variation restriction. Direct: lo <= E[t|cell] <= hi.
/// Diff: lo <= E[t|cell] - E[t'|cell'] <= hi. Ratio: lo <= E[t|cell] / E[t'|cell'] <= hi.
/// Omitted t_prime / cell_prime default to t / cell.
struct Assumption {
  AssumptionForm form = AssumptionForm::Direct;
  std::string t;
  std::optional<std::string> t_prime;
  CellIndex cell;
  std::optional<CellIndex> cell_prime;
  double lo = 0.0;
  double hi = 1.0;
};

/// Candidate solution over the arms of a system. `means` is arm-major
/// (means[a * cells + c]); `probs` holds one value per cell.
struct LongPoint {
  std::vector<std::string> arms;
  int covariates = 0;
  std::vector<double> means;
  std::vector<double> probs;

  int cell_count() const { return 1 << covariates; }
  double mean(std::size_t arm, std::uint32_t cell) const {
    return means[arm * static_cast<std::size_t>(cell_count()) + cell];
  }
  double& mean(std::size_t arm, std::uint32_t cell) {
    return means[arm * static_cast<std::size_t>(cell_count()) + cell];
  }
  /// Flat unknown vector: all means (arm-major) followed by probs.
  std::vector<double> flatten() const;
};

struct Tolerances {
  double eps_eq = 1e-3;
  double eps_marg = 1e-2;
};

enum class EqualityFamily { ShortMean0, ShortMean1, Marginal, SumToOne };

std::string_view to_string(EqualityFamily family);

/// target - sum over the cells with bit `covariate` == `value` of
/// means[arm] * probs (short-mean rows) or of probs (marginal rows).
/// `slack` is the accepted half-width |residual| <= slack.
struct EqualityConstraint {
  EqualityFamily family = EqualityFamily::SumToOne;
  int arm = -1;
  int covariate = -1;
  int value = 1;
  double target = 0.0;
  double slack = 0.0;

  bool selects(std::uint32_t cell) const {
    return family == EqualityFamily::SumToOne ||
           static_cast<int>((cell >> covariate) & 1U) == value;
  }
};

struct AssumptionConstraint {
  AssumptionForm form = AssumptionForm::Direct;
  int arm = 0;
  std::uint32_t cell = 0;
  int arm_prime = 0;
  std::uint32_t cell_prime = 0;
  double lo = 0.0;
  double hi = 1.0;

  /// Lower / upper slacks (>= 0 iff satisfied). Ratio uses the cleared form
  /// lo * E' <= E <= hi * E'.
  std::pair<double, double> slacks(double mean, double mean_prime) const;
};

struct Residuals {
  std::vector<double> equality;
  std::vector<double> inequality;
};

class ConstraintSystem {
 public:
  int covariates() const { return covariates_; }
  int cell_count() const { return 1 << covariates_; }
  int arm_count() const { return static_cast<int>(arms_.size()); }
  /// (A + 1) * 2^K.
  int unknown_count() const { return (arm_count() + 1) * cell_count(); }
  int mean_index(int arm, std::uint32_t cell) const {
    return arm * cell_count() + static_cast<int>(cell);
  }
  int prob_index(std::uint32_t cell) const {
    return arm_count() * cell_count() + static_cast<int>(cell);
  }

  const std::vector<ArmSummary>& arms() const { return arms_; }
  std::vector<std::string> arm_ids() const;
  /// Position of `treatment_id` among the arms in scope; throws UnknownArm.
  int arm_position(std::string_view treatment_id) const;
  const std::vector<EqualityConstraint>& equalities() const { return equalities_; }
  const std::vector<AssumptionConstraint>& assumption_constraints() const {
    return assumptions_;
  }
  const std::vector<CovariateLabels>& labels() const { return labels_; }
  const Tolerances& tolerances() const { return tolerances_; }
  bool binary_outcome() const { return binary_outcome_; }
  bool lp_eligible() const { return lp_eligible_; }

  /// Residual vectors at a flat unknown vector (see LongPoint::flatten).
  /// Inequality slacks: means boxes (lo, hi pairs), probs boxes, then two
  /// per assumption.
  Residuals residuals(std::span<const double> z) const;
  double max_violation(std::span<const double> z) const;

  /// Blank point with this system's arm ids and dimensions.
  LongPoint make_point() const;

 private:
  friend ConstraintSystem build_system(const TrialSummary&,
                                       const std::vector<std::string>&,
                                       const std::vector<Assumption>&, const Tolerances&);
  int covariates_ = 0;
  std::vector<ArmSummary> arms_;
  std::vector<CovariateLabels> labels_;
  std::vector<EqualityConstraint> equalities_;
  std::vector<AssumptionConstraint> assumptions_;
  Tolerances tolerances_;
  bool binary_outcome_ = true;
  bool lp_eligible_ = true;
};

ConstraintSystem build_system(const TrialSummary& trial,
                              const std::vector<std::string>& arm_ids,
                              const std::vector<Assumption>& assumptions = {},
                              const Tolerances& tolerances = {});

/// Throws ShapeError when the point does not match the system's layout.
Residuals residuals(const ConstraintSystem& system, const LongPoint& point);
double max_violation(const ConstraintSystem& system, const LongPoint& point);

enum class Route { ExactLP, HeuristicNLP };
Route classify_route(const ConstraintSystem& system);
std::string_view to_string(Route route);

}  // namespace pidb
