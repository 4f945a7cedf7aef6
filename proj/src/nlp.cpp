#include "pidb/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <random>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

namespace {

constexpr double kRatioFloor = 1e-9;
constexpr double kRhoCeiling = 1e12;
constexpr std::uint64_t kStartStream = 1;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double projected_gradient_norm(std::span<const double> x, std::span<const double> g) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(x[i] - std::clamp(x[i] - g[i], 0.0, 1.0)));
  }
  return worst;
}

struct BoxOutcome {
  double pg = 0.0;
  int iterations = 0;
};

// Projected L-BFGS on [0, 1]^n. Variables held at a bound by the gradient
// are frozen for the step; the rest follow the two-loop direction.
template <typename Fg>
BoxOutcome minimize_box(Fg&& fg, std::vector<double>& x, double tol, int max_iter) {
  constexpr int kMemory = 10;
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n), q(n);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  double f = fg(x, g);
  BoxOutcome out;
  out.pg = projected_gradient_norm(x, g);

  for (int it = 0; it < max_iter && out.pg > tol; ++it) {
    out.iterations = it + 1;
    std::vector<bool> free(n);
    for (std::size_t i = 0; i < n; ++i) {
      free[i] = !((x[i] <= 0.0 && g[i] > 0.0) || (x[i] >= 1.0 && g[i] < 0.0));
    }

    for (std::size_t i = 0; i < n; ++i) q[i] = free[i] ? g[i] : 0.0;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += free[i] ? s_hist[k][i] * q[i] : 0.0;
      a *= rho_hist[k];
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) q[i] -= free[i] ? a * y_hist[k][i] : 0.0;
    }
    double gamma = 1.0;
    if (m > 0) {
      double sy = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += s_hist.back()[i] * y_hist.back()[i];
        yy += y_hist.back()[i] * y_hist.back()[i];
      }
      gamma = sy / yy;
    } else {
      double gmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, std::abs(q[i]));
      gamma = gmax > 0.0 ? 0.1 / gmax : 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
    for (std::size_t k = 0; k < m; ++k) {
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += free[i] ? y_hist[k][i] * q[i] : 0.0;
      b *= rho_hist[k];
      for (std::size_t i = 0; i < n; ++i) q[i] += free[i] ? s_hist[k][i] * (alpha[k] - b) : 0.0;
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = -q[i];
      slope += g[i] * d[i];
    }
    if (!(slope < 0.0)) {
      // Memory produced an ascent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      double gmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, free[i] ? std::abs(g[i]) : 0.0);
      if (gmax == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) d[i] = free[i] ? -g[i] * 0.1 / gmax : 0.0;
    }

    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x_new[i] = std::clamp(x[i] + step * d[i], 0.0, 1.0);
        decrease += g[i] * (x_new[i] - x[i]);
      }
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }

    std::vector<double> s(n), y(n);
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
      sy += s[i] * y[i];
    }
    if (sy > 1e-16) {
      if (s_hist.size() == kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    const double change = f - f_new;
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    out.pg = projected_gradient_norm(x, g);
    if (change <= 1e-16 * std::max(1.0, std::abs(f))) break;
  }
  if (!std::isfinite(f) || !all_finite(g)) {
    throw NumericalFailure("non-finite augmented Lagrangian value or gradient");
  }
  return out;
}

LongPoint unflatten(const ConstraintSystem& system, std::span<const double> z) {
  LongPoint p = system.make_point();
  const auto split = p.means.size();
  std::copy(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(split), p.means.begin());
  std::copy(z.begin() + static_cast<std::ptrdiff_t>(split), z.end(), p.probs.begin());
  return p;
}

}  // namespace

void SolverConfig::validate() const {
  if (n_starts < 1) throw ValidationError("n_starts must be positive");
  if (!(feas_threshold > 0.0)) throw ValidationError("feas_threshold must be positive");
  if (!(penalty_mu0 > 0.0)) throw ValidationError("penalty_mu0 must be positive");
  if (!(local.rho0 > 0.0)) throw ValidationError("local.rho0 must be positive");
  if (!(mu_growth > 1.0)) throw ValidationError("mu_growth must exceed 1");
  if (!(local.kkt_tol > 0.0) || local.max_outer < 1 || local.max_inner < 1) {
    throw ValidationError("local solver limits must be positive");
  }
}

Target Target::mean(const ConstraintSystem& system, std::string_view t, const CellIndex& cell) {
  if (cell.dimension() != system.covariates()) throw ShapeError("cell dimension mismatch");
  Target out;
  out.kind = TargetKind::Mean;
  out.arm = out.arm_prime = system.arm_position(t);
  out.cell = out.cell_prime = cell.rank();
  return out;
}

Target Target::contrast(const ConstraintSystem& system, TargetKind kind, std::string_view t,
                        std::string_view t_prime, const CellIndex& cell,
                        const CellIndex& cell_prime) {
  if (cell.dimension() != system.covariates() || cell_prime.dimension() != system.covariates()) {
    throw ShapeError("cell dimension mismatch");
  }
  Target out;
  out.kind = kind;
  out.arm = system.arm_position(t);
  out.arm_prime = system.arm_position(t_prime);
  out.cell = cell.rank();
  out.cell_prime = cell_prime.rank();
  return out;
}

std::string_view to_string(ConstraintFamily family) {
  switch (family) {
    case ConstraintFamily::ShortMean: return "short-mean";
    case ConstraintFamily::Marginal: return "marginal";
    case ConstraintFamily::SumToOne: return "sum-to-one";
    case ConstraintFamily::Direct: return "direct";
    case ConstraintFamily::Diff: return "difference";
    case ConstraintFamily::Ratio: return "ratio";
  }
  return "?";
}

SmoothProblem::SmoothProblem(const ConstraintSystem& system, const Target& target,
                             Direction direction)
    : size_(system.unknown_count()), target_(target), direction_(direction) {
  if (target.arm < 0 || target.arm >= system.arm_count() || target.arm_prime < 0 ||
      target.arm_prime >= system.arm_count() ||
      target.cell >= static_cast<std::uint32_t>(system.cell_count()) ||
      target.cell_prime >= static_cast<std::uint32_t>(system.cell_count())) {
    throw ShapeError("target outside the system");
  }
  target_index_ = system.mean_index(target.arm, target.cell);
  prime_index_ = system.mean_index(target.arm_prime, target.cell_prime);

  const auto cells = static_cast<std::uint32_t>(system.cell_count());
  for (const auto& eq : system.equalities()) {
    std::vector<Term> terms;
    ConstraintFamily family = ConstraintFamily::SumToOne;
    for (std::uint32_t c = 0; c < cells; ++c) {
      if (!eq.selects(c)) continue;
      if (eq.family == EqualityFamily::ShortMean0 || eq.family == EqualityFamily::ShortMean1) {
        family = ConstraintFamily::ShortMean;
        terms.push_back({1.0, system.mean_index(eq.arm, c), system.prob_index(c)});
      } else {
        if (eq.family == EqualityFamily::Marginal) family = ConstraintFamily::Marginal;
        terms.push_back({1.0, system.prob_index(c), -1});
      }
    }
    if (eq.slack == 0.0) {
      rows_.push_back({family, true, -eq.target, terms});
      continue;
    }
    rows_.push_back({family, false, -eq.target - eq.slack, terms});
    for (auto& t : terms) t.coef = -t.coef;
    rows_.push_back({family, false, eq.target - eq.slack, std::move(terms)});
  }

  for (const auto& a : system.assumption_constraints()) {
    const int m = system.mean_index(a.arm, a.cell);
    const int mp = system.mean_index(a.arm_prime, a.cell_prime);
    switch (a.form) {
      case AssumptionForm::Direct:
        rows_.push_back({ConstraintFamily::Direct, false, a.lo, {{-1.0, m, -1}}});
        rows_.push_back({ConstraintFamily::Direct, false, -a.hi, {{1.0, m, -1}}});
        break;
      case AssumptionForm::Diff:
        rows_.push_back({ConstraintFamily::Diff, false, a.lo, {{-1.0, m, -1}, {1.0, mp, -1}}});
        rows_.push_back({ConstraintFamily::Diff, false, -a.hi, {{1.0, m, -1}, {-1.0, mp, -1}}});
        break;
      case AssumptionForm::Ratio:
        rows_.push_back({ConstraintFamily::Ratio, false, 0.0, {{-1.0, m, -1}, {a.lo, mp, -1}}});
        rows_.push_back({ConstraintFamily::Ratio, false, 0.0, {{1.0, m, -1}, {-a.hi, mp, -1}}});
        break;
    }
  }
}

double SmoothProblem::eval(const Row& row, std::span<const double> z) const {
  double v = row.constant;
  for (const auto& t : row.terms) {
    v += t.j < 0 ? t.coef * z[static_cast<std::size_t>(t.i)]
                 : t.coef * z[static_cast<std::size_t>(t.i)] * z[static_cast<std::size_t>(t.j)];
  }
  return v;
}

void SmoothProblem::add_gradient(const Row& row, std::span<const double> z, double scale,
                                 std::span<double> grad) const {
  for (const auto& t : row.terms) {
    const auto i = static_cast<std::size_t>(t.i);
    if (t.j < 0) {
      grad[i] += scale * t.coef;
    } else {
      const auto j = static_cast<std::size_t>(t.j);
      grad[i] += scale * t.coef * z[j];
      grad[j] += scale * t.coef * z[i];
    }
  }
}

double SmoothProblem::row_value(int row, std::span<const double> z) const {
  return eval(rows_[static_cast<std::size_t>(row)], z);
}

void SmoothProblem::row_gradient(int row, std::span<const double> z,
                                 std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  add_gradient(rows_[static_cast<std::size_t>(row)], z, 1.0, grad);
}

double SmoothProblem::target_value(std::span<const double> z) const {
  const double m = z[static_cast<std::size_t>(target_index_)];
  const double mp = z[static_cast<std::size_t>(prime_index_)];
  switch (target_.kind) {
    case TargetKind::Mean: return m;
    case TargetKind::Difference: return m - mp;
    case TargetKind::Ratio: return m / std::max(mp, kRatioFloor);
  }
  return m;
}

double SmoothProblem::objective(std::span<const double> z) const {
  const double v = target_value(z);
  return direction_ == Direction::Lower ? v : -v;
}

void SmoothProblem::objective_gradient(std::span<const double> z, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double sign = direction_ == Direction::Lower ? 1.0 : -1.0;
  const auto ti = static_cast<std::size_t>(target_index_);
  const auto pi = static_cast<std::size_t>(prime_index_);
  switch (target_.kind) {
    case TargetKind::Mean: grad[ti] = sign; break;
    case TargetKind::Difference:
      grad[ti] += sign;
      grad[pi] -= sign;
      break;
    case TargetKind::Ratio: {
      const double den = std::max(z[pi], kRatioFloor);
      grad[ti] += sign / den;
      if (z[pi] > kRatioFloor) grad[pi] -= sign * z[ti] / (den * den);
      break;
    }
  }
}

double SmoothProblem::violation(std::span<const double> z) const {
  double worst = 0.0;
  for (const auto& r : rows_) {
    const double v = eval(r, z);
    worst = std::max(worst, r.equality ? std::abs(v) : v);
  }
  return worst;
}

double SmoothProblem::total_violation(std::span<const double> z) const {
  double total = 0.0;
  for (const auto& r : rows_) {
    const double v = eval(r, z);
    total += r.equality ? std::abs(v) : std::max(0.0, v);
  }
  return total;
}

double SmoothProblem::augmented_lagrangian(std::span<const double> z,
                                           std::span<const double> lambda, double rho,
                                           std::span<double> grad) const {
  objective_gradient(z, grad);
  double value = objective(z);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const double v = eval(rows_[r], z);
    const double l = lambda[r];
    if (rows_[r].equality) {
      value += l * v + 0.5 * rho * v * v;
      add_gradient(rows_[r], z, l + rho * v, grad);
    } else {
      const double t = l + rho * v;
      if (t > 0.0) {
        value += (t * t - l * l) / (2.0 * rho);
        add_gradient(rows_[r], z, t, grad);
      } else {
        value -= l * l / (2.0 * rho);
      }
    }
  }
  return value;
}

void SmoothProblem::update_multipliers(std::span<const double> z, std::span<double> lambda,
                                       double rho) const {
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const double v = eval(rows_[r], z);
    lambda[r] = rows_[r].equality ? lambda[r] + rho * v : std::max(0.0, lambda[r] + rho * v);
  }
}

std::vector<LongPoint> sample_starts(const ConstraintSystem& system, const SolverConfig& config) {
  config.validate();
  const int k_count = system.covariates();
  const auto cells = static_cast<std::uint32_t>(system.cell_count());
  std::vector<LongPoint> out;
  out.reserve(static_cast<std::size_t>(config.n_starts) + 2);

  LongPoint product = system.make_point();
  std::vector<double> p_avg(static_cast<std::size_t>(k_count), 0.0);
  for (const auto& arm : system.arms()) {
    for (int k = 0; k < k_count; ++k) {
      p_avg[static_cast<std::size_t>(k)] += arm.marginal[static_cast<std::size_t>(k)] / system.arm_count();
    }
  }
  for (std::uint32_t c = 0; c < cells; ++c) {
    double q = 1.0;
    for (int k = 0; k < k_count; ++k) {
      const double p = p_avg[static_cast<std::size_t>(k)];
      q *= ((c >> k) & 1U) ? p : 1.0 - p;
    }
    product.probs[c] = q;
  }
  for (int a = 0; a < system.arm_count(); ++a) {
    const auto implied = implied_overall_means(system.arms()[static_cast<std::size_t>(a)]);
    double overall = 0.0;
    for (double v : implied.per_covariate) overall += v / k_count;
    for (std::uint32_t c = 0; c < cells; ++c) {
      product.mean(static_cast<std::size_t>(a), c) = std::clamp(overall, 0.0, 1.0);
    }
  }
  out.push_back(std::move(product));

  LongPoint flat = system.make_point();
  std::fill(flat.probs.begin(), flat.probs.end(), 1.0 / cells);
  for (int a = 0; a < system.arm_count(); ++a) {
    const auto& arm = system.arms()[static_cast<std::size_t>(a)];
    for (std::uint32_t c = 0; c < cells; ++c) {
      double m = 0.0;
      for (int k = 0; k < k_count; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        m += (((c >> k) & 1U) ? arm.short_mean_1[ks] : arm.short_mean_0[ks]) / k_count;
      }
      flat.mean(static_cast<std::size_t>(a), c) = std::clamp(m, 0.0, 1.0);
    }
  }
  out.push_back(std::move(flat));

  for (int i = 0; i < config.n_starts; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, kStartStream, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    LongPoint p = system.make_point();
    for (auto& m : p.means) m = unit(rng);
    double total = 0.0;
    for (auto& q : p.probs) total += (q = expo(rng));
    for (auto& q : p.probs) q /= total;
    out.push_back(std::move(p));
  }
  return out;
}

LocalResult local_solve(const ConstraintSystem& system, const Target& target,
                        Direction direction, const LongPoint& start, const SolverConfig& config) {
  config.validate();
  const SmoothProblem problem(system, target, direction);
  if (static_cast<int>(start.means.size() + start.probs.size()) != system.unknown_count() ||
      static_cast<int>(start.probs.size()) != system.cell_count()) {
    throw ShapeError("start point does not match the system layout");
  }
  std::vector<double> z = start.flatten();
  for (auto& v : z) {
    if (!std::isfinite(v)) throw NumericalFailure("start contains non-finite values");
    v = std::clamp(v, 0.0, 1.0);
  }

  std::vector<double> lambda(static_cast<std::size_t>(problem.row_count()), 0.0);
  double rho = config.local.rho0;
  double prev_violation = problem.violation(z);
  double inner_tol = std::max(config.local.kkt_tol, 1e-3);
  const double thr = config.feas_threshold;

  LocalResult result;
  std::vector<double> best = z;
  double best_violation = prev_violation;
  double best_objective = problem.objective(z);
  auto better = [&](double viol, double obj) {
    const bool feasible = viol <= thr;
    const bool best_feasible = best_violation <= thr;
    if (feasible != best_feasible) return feasible;
    return feasible ? obj < best_objective : viol < best_violation;
  };

  auto fg = [&](const std::vector<double>& x, std::vector<double>& g) {
    return problem.augmented_lagrangian(x, lambda, rho, g);
  };

  for (int outer = 0; outer < config.local.max_outer; ++outer) {
    const auto inner = minimize_box(fg, z, inner_tol, config.local.max_inner);
    result.outer_iterations = outer + 1;
    result.inner_iterations += inner.iterations;
    const double viol = problem.violation(z);
    const double obj = problem.objective(z);
    if (!std::isfinite(viol) || !std::isfinite(obj)) {
      throw NumericalFailure("local solve produced non-finite values");
    }
    if (better(viol, obj)) {
      best = z;
      best_violation = viol;
      best_objective = obj;
    }
    if (viol <= std::min(thr, config.local.kkt_tol) && inner.pg <= config.local.kkt_tol) {
      result.converged = true;
      best = z;
      break;
    }
    problem.update_multipliers(z, lambda, rho);
    if (viol > config.local.kkt_tol && viol > 0.1 * prev_violation) rho = std::min(rho * config.mu_growth, kRhoCeiling);
    prev_violation = viol;
    inner_tol = std::max(config.local.kkt_tol, inner_tol * 0.1);
  }

  result.point = unflatten(system, best);
  result.objective = problem.target_value(best);
  result.violation = system.max_violation(best);
  result.total_violation = problem.total_violation(best);
  if (result.converged && result.violation > thr) result.converged = false;
  return result;
}

double score(const LocalResult& result, Direction direction, double mu) {
  const double signed_objective = direction == Direction::Lower ? result.objective : -result.objective;
  return signed_objective + mu * result.total_violation;
}

EndpointReport multistart_bound(const ConstraintSystem& system, const Target& target,
                                Direction direction, const SolverConfig& config) {
  config.validate();
  const auto clock_start = std::chrono::steady_clock::now();
  const auto starts = sample_starts(system, config);
  const auto n = static_cast<std::ptrdiff_t>(starts.size());
  std::vector<LocalResult> results(starts.size());
  std::vector<char> failed(starts.size(), 0);
  std::exception_ptr unexpected;
  const bool parallel = config.execution == Execution::Parallel;

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    try {
      results[s] = local_solve(system, target, direction, starts[s], config);
    } catch (const NumericalFailure&) {
      failed[s] = 1;
    } catch (...) {
#pragma omp critical(pidb_nlp_error)
      if (!unexpected) unexpected = std::current_exception();
      failed[s] = 1;
    }
  }
  if (unexpected) std::rethrow_exception(unexpected);

  EndpointReport report;
  report.starts = static_cast<int>(starts.size());
  report.final_mu = config.penalty_mu0;
  const double sign = direction == Direction::Lower ? 1.0 : -1.0;
  std::ptrdiff_t pick = -1;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (failed[s]) {
      ++report.failed_starts;
      continue;
    }
    if (results[s].violation > config.feas_threshold) continue;
    ++report.feasible_count;
    if (pick < 0 || sign * results[s].objective < sign * results[static_cast<std::size_t>(pick)].objective) {
      pick = i;
    }
  }
  if (report.failed_starts == report.starts) {
    throw SolverFailure(fmt::format("all {} starts failed numerically", report.starts));
  }

  if (pick < 0) {
    auto lowest = [&](double mu) {
      std::ptrdiff_t best = -1;
      double best_score = 0.0;
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (failed[s]) continue;
        const double v = score(results[s], direction, mu);
        if (best < 0 || v < best_score) {
          best = i;
          best_score = v;
        }
      }
      return best;
    };
    double mu = config.penalty_mu0;
    pick = lowest(mu);
    for (int round = 0; round < 64; ++round) {
      mu *= config.mu_growth;
      const auto next = lowest(mu);
      if (next == pick) break;
      pick = next;
    }
    report.final_mu = mu;
    report.status = EndpointStatus::Infeasible;
    const auto& r = results[static_cast<std::size_t>(pick)];
    report.best_infeasible = EndpointReport::Infeasible{r.objective, r.violation};
  } else {
    report.status = EndpointStatus::Feasible;
  }
  const auto& chosen = results[static_cast<std::size_t>(pick)];
  report.value = chosen.objective;
  report.attained_point = chosen.point;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return report;
}

}  // namespace pidb
