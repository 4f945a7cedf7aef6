#include "pidb/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

CellIndex::CellIndex(int dimension, std::uint32_t rank) : dimension_(dimension), rank_(rank) {
  if (dimension < 1 || dimension > kMaxCovariates) {
    throw InvalidDimension(fmt::format("cell dimension {} outside [1, {}]", dimension, kMaxCovariates));
  }
  if (rank >= (1U << dimension)) {
    throw InvalidDimension(fmt::format("cell rank {} out of range for K={}", rank, dimension));
  }
}

CellIndex CellIndex::from_bits(std::span<const int> bits) {
  std::uint32_t rank = 0;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k] != 0 && bits[k] != 1) {
      throw InvalidDimension(fmt::format("cell bit {} is {}, expected 0 or 1", k, bits[k]));
    }
    rank |= static_cast<std::uint32_t>(bits[k]) << k;
  }
  return {static_cast<int>(bits.size()), rank};
}

std::vector<int> CellIndex::bits() const {
  std::vector<int> out(static_cast<std::size_t>(dimension_));
  for (int k = 0; k < dimension_; ++k) out[static_cast<std::size_t>(k)] = bit(k);
  return out;
}

int CellIndex::hamming(const CellIndex& other) const {
  return std::popcount(rank_ ^ other.rank_);
}

std::vector<CellIndex> enumerate_cells(int covariates) {
  if (covariates < 1 || covariates > kMaxCovariates) {
    throw InvalidDimension(
        fmt::format("covariate count {} outside [1, {}]", covariates, kMaxCovariates));
  }
  std::vector<CellIndex> cells;
  cells.reserve(1U << covariates);
  for (std::uint32_t r = 0; r < (1U << covariates); ++r) cells.emplace_back(covariates, r);
  return cells;
}

void ArmSummary::validate(int covariates) const {
  auto check_len = [&](const std::vector<double>& v, const char* name) {
    if (static_cast<int>(v.size()) != covariates) {
      throw ValidationError(fmt::format("arms[{}].{}: expected {} values, got {}", treatment_id,
                                        name, covariates, v.size()));
    }
  };
  check_len(marginal, "marginals_p1");
  check_len(short_mean_0, "short_mean_x0");
  check_len(short_mean_1, "short_mean_x1");
  if (n_subjects <= 0) {
    throw ValidationError(fmt::format("arms[{}].n: must be positive", treatment_id));
  }
  for (int k = 0; k < covariates; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (!(marginal[i] > 0.0 && marginal[i] < 1.0)) {
      throw ValidationError(fmt::format("arms[{}].marginals_p1[{}] = {} not in (0, 1)",
                                        treatment_id, k, marginal[i]));
    }
    for (auto [v, name] : {std::pair{short_mean_0[i], "short_mean_x0"},
                           std::pair{short_mean_1[i], "short_mean_x1"}}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError(
            fmt::format("arms[{}].{}[{}] = {} not in [0, 1]", treatment_id, name, k, v));
      }
    }
  }
}

TrialSummary::TrialSummary(std::vector<CovariateLabels> labels, std::vector<ArmSummary> arms)
    : labels_(std::move(labels)), arms_(std::move(arms)) {
  const int k = covariates();
  if (k < 1 || k > kMaxCovariates) {
    throw InvalidDimension(fmt::format("covariate count {} outside [1, {}]", k, kMaxCovariates));
  }
  if (arms_.empty()) throw ValidationError("arms: at least one arm required");
  std::set<std::string> seen;
  for (const auto& arm : arms_) {
    if (arm.treatment_id.empty()) throw ValidationError("arms[].treatment: empty label");
    if (!seen.insert(arm.treatment_id).second) {
      throw ValidationError(fmt::format("arms: duplicate treatment '{}'", arm.treatment_id));
    }
    arm.validate(k);
  }
}

const ArmSummary& TrialSummary::arm(std::string_view treatment_id) const {
  for (const auto& a : arms_) {
    if (a.treatment_id == treatment_id) return a;
  }
  throw UnknownArm(fmt::format("unknown treatment '{}'", treatment_id));
}

bool TrialSummary::has_arm(std::string_view treatment_id) const {
  return std::ranges::any_of(arms_, [&](const ArmSummary& a) { return a.treatment_id == treatment_id; });
}

std::string cell_label(const std::vector<CovariateLabels>& labels, const CellIndex& cell) {
  std::string out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    out += cell.bit(static_cast<int>(k)) ? labels[k].label1 : labels[k].label0;
  }
  return out;
}

std::string TrialSummary::cell_label(const CellIndex& cell) const {
  return pidb::cell_label(labels_, cell);
}

std::optional<CellIndex> TrialSummary::parse_cell(std::string_view text) const {
  const int k = covariates();
  if (static_cast<int>(text.size()) == k &&
      std::ranges::all_of(text, [](char c) { return c == '0' || c == '1'; })) {
    std::vector<int> bits;
    for (char c : text) bits.push_back(c - '0');
    return CellIndex::from_bits(bits);
  }
  // Greedy label match per covariate; labels may have several characters.
  std::uint32_t rank = 0;
  std::size_t pos = 0;
  for (int i = 0; i < k; ++i) {
    const auto& l = labels_[static_cast<std::size_t>(i)];
    const auto rest = text.substr(pos);
    const bool m0 = !l.label0.empty() && rest.starts_with(l.label0);
    const bool m1 = !l.label1.empty() && rest.starts_with(l.label1);
    if (m0 == m1) {
      if (!m0) return std::nullopt;
      // Both match (one is a prefix of the other): prefer the longer.
      if (l.label1.size() > l.label0.size()) {
        rank |= 1U << i;
        pos += l.label1.size();
      } else {
        pos += l.label0.size();
      }
    } else if (m1) {
      rank |= 1U << i;
      pos += l.label1.size();
    } else {
      pos += l.label0.size();
    }
  }
  if (pos != text.size()) return std::nullopt;
  return CellIndex(k, rank);
}

ImpliedMeans implied_overall_means(const ArmSummary& arm) {
  ImpliedMeans out;
  const auto k = arm.marginal.size();
  out.per_covariate.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.per_covariate[i] =
        arm.short_mean_0[i] * (1.0 - arm.marginal[i]) + arm.short_mean_1[i] * arm.marginal[i];
  }
  if (k > 0) {
    const auto [lo, hi] = std::ranges::minmax(out.per_covariate);
    out.spread = hi - lo;
  }
  return out;
}

std::vector<double> LongPoint::flatten() const {
  std::vector<double> z(means);
  z.insert(z.end(), probs.begin(), probs.end());
  return z;
}

std::string_view to_string(EqualityFamily family) {
  switch (family) {
    case EqualityFamily::ShortMean0: return "short-mean(x_k=0)";
    case EqualityFamily::ShortMean1: return "short-mean(x_k=1)";
    case EqualityFamily::Marginal: return "marginal";
    case EqualityFamily::SumToOne: return "sum-to-one";
  }
  return "?";
}

std::pair<double, double> AssumptionConstraint::slacks(double mean, double mean_prime) const {
  switch (form) {
    case AssumptionForm::Direct: return {mean - lo, hi - mean};
    case AssumptionForm::Diff: return {(mean - mean_prime) - lo, hi - (mean - mean_prime)};
    case AssumptionForm::Ratio: return {mean - lo * mean_prime, hi * mean_prime - mean};
  }
  return {0.0, 0.0};
}

std::vector<std::string> ConstraintSystem::arm_ids() const {
  std::vector<std::string> ids;
  for (const auto& a : arms_) ids.push_back(a.treatment_id);
  return ids;
}

int ConstraintSystem::arm_position(std::string_view treatment_id) const {
  for (int i = 0; i < arm_count(); ++i) {
    if (arms_[static_cast<std::size_t>(i)].treatment_id == treatment_id) return i;
  }
  throw UnknownArm(fmt::format("treatment '{}' is not in the system", treatment_id));
}

Residuals ConstraintSystem::residuals(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != unknown_count()) {
    throw ShapeError(fmt::format("point has {} unknowns, system expects {}", z.size(),
                                 unknown_count()));
  }
  const int cells = cell_count();
  const auto probs = z.subspan(static_cast<std::size_t>(arm_count() * cells));
  Residuals r;
  r.equality.reserve(equalities_.size());
  for (const auto& eq : equalities_) {
    double sum = 0.0;
    for (std::uint32_t c = 0; c < static_cast<std::uint32_t>(cells); ++c) {
      if (!eq.selects(c)) continue;
      if (eq.family == EqualityFamily::ShortMean0 || eq.family == EqualityFamily::ShortMean1) {
        sum += z[static_cast<std::size_t>(mean_index(eq.arm, c))] * probs[c];
      } else {
        sum += probs[c];
      }
    }
    r.equality.push_back(eq.target - sum);
  }
  r.inequality.reserve(2 * z.size() + 2 * assumptions_.size());
  for (double v : z) {
    r.inequality.push_back(v);
    r.inequality.push_back(1.0 - v);
  }
  for (const auto& a : assumptions_) {
    const auto [lo, hi] = a.slacks(z[static_cast<std::size_t>(mean_index(a.arm, a.cell))],
                                   z[static_cast<std::size_t>(mean_index(a.arm_prime, a.cell_prime))]);
    r.inequality.push_back(lo);
    r.inequality.push_back(hi);
  }
  return r;
}

double ConstraintSystem::max_violation(std::span<const double> z) const {
  const auto r = residuals(z);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.equality.size(); ++i) {
    worst = std::max(worst, std::abs(r.equality[i]) - equalities_[i].slack);
  }
  for (double s : r.inequality) worst = std::max(worst, -s);
  return worst;
}

LongPoint ConstraintSystem::make_point() const {
  LongPoint p;
  p.arms = arm_ids();
  p.covariates = covariates_;
  p.means.assign(static_cast<std::size_t>(arm_count() * cell_count()), 0.0);
  p.probs.assign(static_cast<std::size_t>(cell_count()), 0.0);
  return p;
}

namespace {

void check_point_shape(const ConstraintSystem& system, const LongPoint& point) {
  if (point.covariates != system.covariates() ||
      static_cast<int>(point.probs.size()) != system.cell_count() ||
      static_cast<int>(point.means.size()) != system.arm_count() * system.cell_count()) {
    throw ShapeError(fmt::format("point shape (K={}, {} means, {} probs) does not match system "
                                 "(K={}, {} arms)",
                                 point.covariates, point.means.size(), point.probs.size(),
                                 system.covariates(), system.arm_count()));
  }
  if (point.arms != system.arm_ids()) throw ShapeError("point arm order differs from system");
}

}  // namespace

Residuals residuals(const ConstraintSystem& system, const LongPoint& point) {
  check_point_shape(system, point);
  return system.residuals(point.flatten());
}

double max_violation(const ConstraintSystem& system, const LongPoint& point) {
  check_point_shape(system, point);
  return system.max_violation(point.flatten());
}

ConstraintSystem build_system(const TrialSummary& trial, const std::vector<std::string>& arm_ids,
                              const std::vector<Assumption>& assumptions,
                              const Tolerances& tolerances) {
  if (arm_ids.empty()) throw UnknownArm("no treatment arms selected");
  if (!(tolerances.eps_eq >= 0.0) || !(tolerances.eps_marg >= 0.0)) {
    throw ValidationError("tolerances must be nonnegative");
  }
  ConstraintSystem sys;
  sys.covariates_ = trial.covariates();
  sys.labels_ = trial.labels();
  sys.tolerances_ = tolerances;
  std::set<std::string> seen;
  for (const auto& id : arm_ids) {
    if (!seen.insert(id).second) throw UnknownArm(fmt::format("treatment '{}' selected twice", id));
    sys.arms_.push_back(trial.arm(id));
  }
  const int k_count = sys.covariates_;

  for (const auto& arm : sys.arms_) {
    const auto implied = implied_overall_means(arm);
    if (implied.spread > 2.0 * tolerances.eps_eq) {
      throw InfeasibleInput(fmt::format(
          "arm '{}': implied overall means spread {:.6g} exceeds 2*eps_eq = {:.6g} (values: {})",
          arm.treatment_id, implied.spread, 2.0 * tolerances.eps_eq,
          fmt::join(implied.per_covariate, ", ")));
    }
  }

  for (int a = 0; a < sys.arm_count(); ++a) {
    const auto& arm = sys.arms_[static_cast<std::size_t>(a)];
    for (int k = 0; k < k_count; ++k) {
      const auto i = static_cast<std::size_t>(k);
      const double p = arm.marginal[i];
      sys.equalities_.push_back({EqualityFamily::ShortMean0, a, k, 0,
                                 arm.short_mean_0[i] * (1.0 - p), tolerances.eps_eq});
      sys.equalities_.push_back(
          {EqualityFamily::ShortMean1, a, k, 1, arm.short_mean_1[i] * p, tolerances.eps_eq});
    }
  }
  // One marginal row per covariate over the shared cell distribution. With
  // several arms the row accepts the intersection of the per-arm bands
  // [p_k(t) - eps_marg, p_k(t) + eps_marg].
  const double marg_slack = sys.arm_count() == 1 ? tolerances.eps_eq : tolerances.eps_marg;
  for (int k = 0; k < k_count; ++k) {
    const auto i = static_cast<std::size_t>(k);
    double lo = -1e300, hi = 1e300;
    for (const auto& arm : sys.arms_) {
      lo = std::max(lo, arm.marginal[i] - marg_slack);
      hi = std::min(hi, arm.marginal[i] + marg_slack);
    }
    if (lo > hi) {
      throw InfeasibleInput(fmt::format(
          "covariate {}: per-arm marginals disagree by more than 2*eps_marg = {:.6g}", k,
          2.0 * marg_slack));
    }
    sys.equalities_.push_back(
        {EqualityFamily::Marginal, -1, k, 1, 0.5 * (lo + hi), 0.5 * (hi - lo)});
  }
  sys.equalities_.push_back({EqualityFamily::SumToOne, -1, -1, 1, 1.0, 0.0});

  sys.binary_outcome_ = std::ranges::all_of(
      sys.arms_, [](const ArmSummary& a) { return a.outcome_kind == OutcomeKind::Binary; });
  bool all_same_cell = true;
  for (const auto& as : assumptions) {
    if (!std::isfinite(as.lo) || !std::isfinite(as.hi) || as.lo > as.hi) {
      throw InvalidAssumption(fmt::format("assumption on '{}': need finite lo <= hi, got [{}, {}]",
                                          as.t, as.lo, as.hi));
    }
    if (as.form == AssumptionForm::Ratio && as.lo < 0.0) {
      throw InvalidAssumption("ratio assumption requires lo >= 0");
    }
    AssumptionConstraint c;
    c.form = as.form;
    try {
      c.arm = sys.arm_position(as.t);
      c.arm_prime = sys.arm_position(as.t_prime.value_or(as.t));
    } catch (const UnknownArm& e) {
      throw InvalidAssumption(e.what());
    }
    const CellIndex cell_prime = as.cell_prime.value_or(as.cell);
    if (as.cell.dimension() != k_count || cell_prime.dimension() != k_count) {
      throw InvalidAssumption(fmt::format("assumption cell has dimension {}, trial has K={}",
                                          as.cell.dimension(), k_count));
    }
    c.cell = as.cell.rank();
    c.cell_prime = cell_prime.rank();
    if (as.form != AssumptionForm::Direct && c.arm == c.arm_prime && c.cell == c.cell_prime) {
      throw InvalidAssumption("difference/ratio assumption compares a mean with itself");
    }
    c.lo = as.lo;
    c.hi = as.hi;
    if (as.form == AssumptionForm::Direct) {
      c.arm_prime = c.arm;
      c.cell_prime = c.cell;
    } else if (c.cell != c.cell_prime) {
      all_same_cell = false;
    }
    sys.assumptions_.push_back(c);
  }
  sys.lp_eligible_ = sys.binary_outcome_ && all_same_cell;
  return sys;
}

Route classify_route(const ConstraintSystem& system) {
  return system.lp_eligible() ? Route::ExactLP : Route::HeuristicNLP;
}

std::string_view to_string(Route route) {
  return route == Route::ExactLP ? "ExactLP" : "HeuristicNLP";
}

}  // namespace pidb
