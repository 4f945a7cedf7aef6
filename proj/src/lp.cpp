#include "pidb/lp.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kVanishingMass = 1e-9;

LinearRow make_row(std::vector<std::pair<int, double>> coeffs, double lo, double hi,
                   RowFamily family) {
  LinearRow r;
  r.coeffs = std::move(coeffs);
  r.lo = lo;
  r.hi = hi;
  r.family = family;
  return r;
}

}  // namespace

std::string_view to_string(RowFamily family) {
  switch (family) {
    case RowFamily::ShortMean: return "short-mean";
    case RowFamily::Marginal: return "marginal";
    case RowFamily::SumToOne: return "sum-to-one";
    case RowFamily::Coupling: return "coupling w <= P";
    case RowFamily::Assumption: return "assumption";
    case RowFamily::Extra: return "extra";
  }
  return "?";
}

double LinearRow::eval(std::span<const double> z) const {
  double s = 0.0;
  for (const auto& [j, a] : coeffs) s += a * z[static_cast<std::size_t>(j)];
  return s;
}

double LinearRow::violation(std::span<const double> z) const {
  const double v = eval(z);
  return std::max({0.0, lo - v, v - hi});
}

std::vector<double> ReparamSystem::equality_residuals(std::span<const double> z) const {
  std::vector<double> out;
  out.reserve(source_.equalities().size());
  for (const auto& eq : source_.equalities()) {
    double sum = 0.0;
    for (std::uint32_t c = 0; c < static_cast<std::uint32_t>(cells_); ++c) {
      if (!eq.selects(c)) continue;
      const bool mean_row =
          eq.family == EqualityFamily::ShortMean0 || eq.family == EqualityFamily::ShortMean1;
      sum += z[static_cast<std::size_t>(mean_row ? w_index(eq.arm, c) : p_index(c))];
    }
    out.push_back(eq.target - sum);
  }
  return out;
}

std::vector<double> ReparamSystem::map_point(const LongPoint& point) const {
  if (static_cast<int>(point.probs.size()) != cells_ ||
      static_cast<int>(point.means.size()) != arms_ * cells_) {
    throw ShapeError("long point does not match the reparameterized system");
  }
  std::vector<double> z(static_cast<std::size_t>(variable_count()));
  for (int a = 0; a < arms_; ++a) {
    for (std::uint32_t c = 0; c < static_cast<std::uint32_t>(cells_); ++c) {
      z[static_cast<std::size_t>(w_index(a, c))] = point.mean(static_cast<std::size_t>(a), c) * point.probs[c];
    }
  }
  for (std::uint32_t c = 0; c < static_cast<std::uint32_t>(cells_); ++c) {
    z[static_cast<std::size_t>(p_index(c))] = point.probs[c];
  }
  return z;
}

ReparamSystem reparameterize(const ConstraintSystem& system) {
  if (!system.lp_eligible()) {
    throw RouteError(system.binary_outcome()
                         ? "system has cross-cell assumptions; use the heuristic route"
                         : "outcome is not binary; use the heuristic route");
  }
  ReparamSystem r;
  r.source_ = system;
  r.arms_ = system.arm_count();
  r.cells_ = system.cell_count();
  const auto cells = static_cast<std::uint32_t>(r.cells_);

  for (const auto& eq : system.equalities()) {
    std::vector<std::pair<int, double>> coeffs;
    const bool mean_row =
        eq.family == EqualityFamily::ShortMean0 || eq.family == EqualityFamily::ShortMean1;
    for (std::uint32_t c = 0; c < cells; ++c) {
      if (eq.selects(c)) coeffs.emplace_back(mean_row ? r.w_index(eq.arm, c) : r.p_index(c), 1.0);
    }
    const RowFamily family = mean_row ? RowFamily::ShortMean
                             : eq.family == EqualityFamily::Marginal ? RowFamily::Marginal
                                                                     : RowFamily::SumToOne;
    // Exact rows stay exact; relaxed rows become ranged.
    r.equality_rows_.push_back(static_cast<int>(r.rows_.size()));
    r.rows_.push_back(make_row(std::move(coeffs), eq.target - eq.slack, eq.target + eq.slack, family));
  }
  for (int a = 0; a < r.arms_; ++a) {
    for (std::uint32_t c = 0; c < cells; ++c) {
      r.rows_.push_back(
          make_row({{r.w_index(a, c), 1.0}, {r.p_index(c), -1.0}}, -kInf, 0.0, RowFamily::Coupling));
    }
  }
  for (const auto& as : system.assumption_constraints()) {
    const int w = r.w_index(as.arm, as.cell);
    const int p = r.p_index(as.cell);
    switch (as.form) {
      case AssumptionForm::Direct:
        r.rows_.push_back(make_row({{w, 1.0}, {p, -as.lo}}, 0.0, kInf, RowFamily::Assumption));
        r.rows_.push_back(make_row({{w, 1.0}, {p, -as.hi}}, -kInf, 0.0, RowFamily::Assumption));
        break;
      case AssumptionForm::Diff: {
        const int wp = r.w_index(as.arm_prime, as.cell);
        r.rows_.push_back(
            make_row({{w, 1.0}, {wp, -1.0}, {p, -as.lo}}, 0.0, kInf, RowFamily::Assumption));
        r.rows_.push_back(
            make_row({{w, 1.0}, {wp, -1.0}, {p, -as.hi}}, -kInf, 0.0, RowFamily::Assumption));
        break;
      }
      case AssumptionForm::Ratio: {
        const int wp = r.w_index(as.arm_prime, as.cell);
        r.rows_.push_back(make_row({{w, 1.0}, {wp, -as.lo}}, 0.0, kInf, RowFamily::Assumption));
        r.rows_.push_back(make_row({{w, 1.0}, {wp, -as.hi}}, -kInf, 0.0, RowFamily::Assumption));
        break;
      }
    }
  }
  return r;
}

LinearProgram to_linear_program(const std::vector<LinearRow>& rows, int variables,
                                const std::vector<std::pair<int, double>>& objective,
                                Sense sense) {
  int n_ub = 0, n_eq = 0;
  for (const auto& row : rows) {
    if (row.lo == row.hi) {
      ++n_eq;
    } else {
      n_ub += std::isfinite(row.lo) + std::isfinite(row.hi);
    }
  }
  LinearProgram lp;
  lp.sense = sense;
  lp.objective = Eigen::VectorXd::Zero(variables);
  for (const auto& [j, c] : objective) lp.objective(j) += c;
  lp.a_ub = Eigen::MatrixXd::Zero(n_ub, variables);
  lp.b_ub = Eigen::VectorXd::Zero(n_ub);
  lp.a_eq = Eigen::MatrixXd::Zero(n_eq, variables);
  lp.b_eq = Eigen::VectorXd::Zero(n_eq);
  int iu = 0, ie = 0;
  for (const auto& row : rows) {
    if (row.lo == row.hi) {
      for (const auto& [j, a] : row.coeffs) lp.a_eq(ie, j) += a;
      lp.b_eq(ie++) = row.lo;
      continue;
    }
    if (std::isfinite(row.hi)) {
      for (const auto& [j, a] : row.coeffs) lp.a_ub(iu, j) += a;
      lp.b_ub(iu++) = row.hi;
    }
    if (std::isfinite(row.lo)) {
      for (const auto& [j, a] : row.coeffs) lp.a_ub(iu, j) -= a;
      lp.b_ub(iu++) = -row.lo;
    }
  }
  return lp;
}

namespace {

[[noreturn]] void report_infeasible(const ReparamSystem& reparam,
                                    const std::vector<LinearRow>& rows) {
  const auto lp = to_linear_program(rows, reparam.variable_count(), {}, Sense::Minimize);
  const auto sol = solve_lp(lp);
  std::map<RowFamily, double> worst;
  std::vector<double> z(sol.x.data(), sol.x.data() + sol.x.size());
  for (const auto& row : rows) {
    auto& w = worst[row.family];
    w = std::max(w, row.violation(z));
  }
  RowFamily family = RowFamily::Extra;
  double value = -1.0;
  for (const auto& [f, v] : worst) {
    if (v > value) {
      value = v;
      family = f;
    }
  }
  throw InfeasibleSystem(
      fmt::format("constraint system is infeasible; most violated row family: {} ({:.3g})",
                  to_string(family), value),
      std::string(to_string(family)));
}

bool plain_feasible(const ReparamSystem& reparam, const std::vector<LinearRow>& rows) {
  const auto lp = to_linear_program(rows, reparam.variable_count(), {}, Sense::Minimize);
  return solve_lp(lp).status == LpStatus::Optimal;
}

}  // namespace

namespace {

// Charnes-Cooper image of the rows plus normalization den'y = 1; the shift
// variable tau is the last column.
LinearProgram charnes_cooper(const std::vector<LinearRow>& rows, int n,
                             const std::vector<std::pair<int, double>>& numerator,
                             const std::vector<std::pair<int, double>>& denominator, Sense sense) {
  const int tau = n;
  // y = tau * z: lo <= a'z <= hi  becomes  a'y - hi tau <= 0, lo tau - a'y <= 0.
  std::vector<LinearRow> scaled;
  scaled.reserve(rows.size() + 1);
  for (const auto& row : rows) {
    if (row.lo == row.hi) {
      auto c = row.coeffs;
      c.emplace_back(tau, -row.lo);
      scaled.push_back(make_row(std::move(c), 0.0, 0.0, row.family));
      continue;
    }
    if (std::isfinite(row.hi)) {
      auto c = row.coeffs;
      c.emplace_back(tau, -row.hi);
      scaled.push_back(make_row(std::move(c), -kInf, 0.0, row.family));
    }
    if (std::isfinite(row.lo)) {
      auto c = row.coeffs;
      c.emplace_back(tau, -row.lo);
      scaled.push_back(make_row(std::move(c), 0.0, kInf, row.family));
    }
  }
  scaled.push_back(make_row(denominator, 1.0, 1.0, RowFamily::Extra));
  return to_linear_program(scaled, n + 1, numerator, sense);
}

}  // namespace

Endpoint fractional_extreme(const ReparamSystem& reparam,
                            const std::vector<std::pair<int, double>>& numerator,
                            const std::vector<std::pair<int, double>>& denominator, bool upper,
                            const std::vector<LinearRow>& extra) {
  const int n = reparam.variable_count();
  const int tau = n;
  std::vector<LinearRow> rows = reparam.rows();
  rows.insert(rows.end(), extra.begin(), extra.end());
  const auto lp = charnes_cooper(rows, n, numerator, denominator,
                                 upper ? Sense::Maximize : Sense::Minimize);
  const auto sol = solve_lp(lp);
  Endpoint ep;
  ep.iterations = sol.iterations;
  if (sol.status == LpStatus::Infeasible) {
    if (!plain_feasible(reparam, rows)) report_infeasible(reparam, rows);
    // Every feasible point has a zero denominator.
    ep.vanishing_mass = true;
    ep.status = BoundStatus::Unbounded;
    ep.value = upper ? kInf : -kInf;
    return ep;
  }
  if (sol.status == LpStatus::Unbounded) {
    ep.status = BoundStatus::Unbounded;
    ep.value = upper ? kInf : -kInf;
    ep.vanishing_mass = true;
    return ep;
  }
  const double t = sol.x(tau);
  ep.value = sol.objective;
  ep.certificate_ok = verify_optimality(lp, sol).ok;
  ep.argopt.resize(static_cast<std::size_t>(n));
  if (t > 0.0) {
    for (int j = 0; j < n; ++j) ep.argopt[static_cast<std::size_t>(j)] = sol.x(j) / t;
  }
  ep.vanishing_mass = !(t > 0.0) || 1.0 / t < kVanishingMass;
  return ep;
}

Endpoint cell_mean_endpoint(const ReparamSystem& reparam, int arm, std::uint32_t cell,
                            bool upper) {
  auto ep = fractional_extreme(reparam, {{reparam.w_index(arm, cell), 1.0}},
                               {{reparam.p_index(cell), 1.0}}, upper);
  if (ep.status == BoundStatus::Unbounded) {
    // Cell mass forced to zero: the mean is unrestricted over the closure.
    ep.status = BoundStatus::Certified;
    ep.value = upper ? 1.0 : 0.0;
  }
  ep.value = std::clamp(ep.value, 0.0, 1.0);
  return ep;
}

IntervalBound cell_mean_bounds(const ReparamSystem& reparam, std::string_view t,
                               const CellIndex& cell) {
  const int arm = reparam.source().arm_position(t);
  if (cell.dimension() != reparam.source().covariates()) {
    throw ShapeError("cell dimension does not match the system");
  }
  return {cell_mean_endpoint(reparam, arm, cell.rank(), false),
          cell_mean_endpoint(reparam, arm, cell.rank(), true)};
}

IntervalBound contrast_bounds(const ReparamSystem& reparam, std::string_view t,
                              std::string_view t_prime, const CellIndex& cell,
                              ContrastKind kind) {
  const int a = reparam.source().arm_position(t);
  const int b = reparam.source().arm_position(t_prime);
  if (a == b) throw InvalidAssumption("contrast needs two distinct treatments");
  if (cell.dimension() != reparam.source().covariates()) {
    throw ShapeError("cell dimension does not match the system");
  }
  const auto c = cell.rank();
  IntervalBound out;
  if (kind == ContrastKind::Difference) {
    const std::vector<std::pair<int, double>> num{{reparam.w_index(a, c), 1.0},
                                                  {reparam.w_index(b, c), -1.0}};
    const std::vector<std::pair<int, double>> den{{reparam.p_index(c), 1.0}};
    out.lower = fractional_extreme(reparam, num, den, false);
    out.upper = fractional_extreme(reparam, num, den, true);
    for (Endpoint* ep : {&out.lower, &out.upper}) {
      if (ep->status == BoundStatus::Unbounded) {
        ep->status = BoundStatus::Certified;
        ep->value = ep == &out.upper ? 1.0 : -1.0;
      }
      ep->value = std::clamp(ep->value, -1.0, 1.0);
    }
  } else {
    const std::vector<std::pair<int, double>> num{{reparam.w_index(a, c), 1.0}};
    const std::vector<std::pair<int, double>> den{{reparam.w_index(b, c), 1.0}};
    out.lower = fractional_extreme(reparam, num, den, false);
    out.upper = fractional_extreme(reparam, num, den, true);
    if (out.lower.status == BoundStatus::Unbounded) {
      // Reference mean forced to zero everywhere.
      out.lower.value = 0.0;
    }
    out.lower.value = std::max(out.lower.value, 0.0);
  }
  return out;
}

bool membership(const ReparamSystem& reparam, std::string_view t, const CellIndex& cell,
                double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(fmt::format("membership candidate {} outside [0, 1]", v));
  }
  const int arm = reparam.source().arm_position(t);
  const auto c = cell.rank();
  std::vector<LinearRow> rows = reparam.rows();
  rows.push_back(make_row({{reparam.w_index(arm, c), 1.0}, {reparam.p_index(c), -v}}, 0.0, 0.0,
                          RowFamily::Extra));
  // Normalizing P[cell] = 1 after scaling keeps zero-mass cells from
  // satisfying the appended row trivially.
  const auto lp =
      charnes_cooper(rows, reparam.variable_count(), {}, {{reparam.p_index(c), 1.0}}, Sense::Minimize);
  return solve_lp(lp).status == LpStatus::Optimal;
}

}  // namespace pidb
