#include "pidb/simplex.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

void LinearProgram::validate() const {
  const auto n = objective.size();
  if (a_ub.rows() != b_ub.size() || (a_ub.rows() > 0 && a_ub.cols() != n)) {
    throw ShapeError(fmt::format("A_ub is {}x{}, b_ub has {}, objective has {}", a_ub.rows(),
                                 a_ub.cols(), b_ub.size(), n));
  }
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) {
    throw ShapeError(fmt::format("A_eq is {}x{}, b_eq has {}, objective has {}", a_eq.rows(),
                                 a_eq.cols(), b_eq.size(), n));
  }
  if (!objective.allFinite() || !a_ub.allFinite() || !b_ub.allFinite() || !a_eq.allFinite() ||
      !b_eq.allFinite()) {
    throw ShapeError("linear program has non-finite entries");
  }
}

std::string_view to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
  }
  return "?";
}

double lp_residual(const LinearProgram& lp, const Eigen::VectorXd& x) {
  double worst = 0.0;
  if (lp.a_ub.rows() > 0) {
    worst = std::max(worst, (lp.a_ub * x - lp.b_ub).maxCoeff());
  }
  if (lp.a_eq.rows() > 0) {
    worst = std::max(worst, (lp.a_eq * x - lp.b_eq).cwiseAbs().maxCoeff());
  }
  if (x.size() > 0) worst = std::max(worst, (-x).maxCoeff());
  return worst;
}

namespace {

double rhs_scale(const LinearProgram& lp) {
  double s = 0.0;
  if (lp.b_ub.size() > 0) s = std::max(s, lp.b_ub.cwiseAbs().maxCoeff());
  if (lp.b_eq.size() > 0) s = std::max(s, lp.b_eq.cwiseAbs().maxCoeff());
  return 1.0 + s;
}

class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opt) : opt_(opt) {
    n_ = lp.num_vars();
    m_ub_ = static_cast<int>(lp.a_ub.rows());
    m_ = m_ub_ + static_cast<int>(lp.a_eq.rows());
    // Rows needing an artificial: equalities, and <= rows with negative rhs.
    art_of_row_.assign(static_cast<std::size_t>(m_), -1);
    int n_art = 0;
    for (int i = 0; i < m_; ++i) {
      const bool eq = i >= m_ub_;
      const double b = eq ? lp.b_eq(i - m_ub_) : lp.b_ub(i);
      if (eq || b < 0.0) art_of_row_[static_cast<std::size_t>(i)] = n_art++;
    }
    art_start_ = n_ + m_ub_;
    cols_ = art_start_ + n_art;
    t_ = Eigen::MatrixXd::Zero(m_ + 1, cols_ + 1);
    basis_.assign(static_cast<std::size_t>(m_), -1);
    for (int i = 0; i < m_; ++i) {
      const bool eq = i >= m_ub_;
      double b = eq ? lp.b_eq(i - m_ub_) : lp.b_ub(i);
      auto row = t_.row(i);
      row.head(n_) = eq ? lp.a_eq.row(i - m_ub_) : lp.a_ub.row(i);
      if (!eq) row(n_ + i) = 1.0;
      if (b < 0.0) {
        row.head(art_start_) *= -1.0;
        b = -b;
      }
      row(cols_) = b;
      const int art = art_of_row_[static_cast<std::size_t>(i)];
      if (art >= 0) {
        row(art_start_ + art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = art_start_ + art;
      } else {
        basis_[static_cast<std::size_t>(i)] = n_ + i;
      }
    }
    dropped_.assign(static_cast<std::size_t>(m_), false);
  }

  bool has_artificials() const { return cols_ > art_start_; }

  /// Minimizes the sum of artificials; returns the phase-1 optimum.
  double phase_one() {
    set_costs([&](int j) { return j >= art_start_ ? 1.0 : 0.0; });
    std::vector<char> allowed(static_cast<std::size_t>(cols_), 1);
    run(allowed);
    return -t_(m_, cols_);
  }

  /// Pivots basic artificials out; rows that cannot be pivoted are redundant.
  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < art_start_) continue;
      int best = -1;
      double best_abs = opt_.pivot_tol;
      for (int j = 0; j < art_start_; ++j) {
        const double a = std::abs(t_(i, j));
        if (a > best_abs) {
          best_abs = a;
          best = j;
        }
      }
      if (best >= 0) {
        pivot(i, best);
      } else {
        dropped_[static_cast<std::size_t>(i)] = true;
        t_.row(i).head(art_start_).setZero();
      }
    }
  }

  /// Returns false when the objective is unbounded below.
  bool phase_two(const Eigen::VectorXd& cost) {
    set_costs([&](int j) { return j < n_ ? cost(j) : 0.0; });
    std::vector<char> allowed(static_cast<std::size_t>(cols_), 0);
    for (int j = 0; j < art_start_; ++j) allowed[static_cast<std::size_t>(j)] = 1;
    return run(allowed);
  }

  Eigen::VectorXd primal() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[static_cast<std::size_t>(i)];
      if (b < n_) x(b) = std::max(0.0, t_(i, cols_));
    }
    return x;
  }

  void export_basis(LpSolution& sol) const {
    sol.basis.clear();
    sol.rows.clear();
    for (int i = 0; i < m_; ++i) {
      if (dropped_[static_cast<std::size_t>(i)]) continue;
      sol.rows.push_back(i);
      sol.basis.push_back(basis_[static_cast<std::size_t>(i)]);
    }
  }

  int iterations() const { return iterations_; }
  bool used_bland() const { return used_bland_; }

 private:
  template <class CostFn>
  void set_costs(CostFn cost) {
    auto obj = t_.row(m_);
    obj.setZero();
    for (int j = 0; j < cols_; ++j) obj(j) = cost(j);
    for (int i = 0; i < m_; ++i) {
      const double cb = cost(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) obj -= cb * t_.row(i);
    }
  }

  bool run(const std::vector<char>& allowed) {
    int stalled = 0;
    bool bland = false;
    for (;;) {
      int enter = -1;
      double best = -opt_.optimality_tol;
      for (int j = 0; j < cols_; ++j) {
        if (!allowed[static_cast<std::size_t>(j)]) continue;
        const double d = t_(m_, j);
        if (bland) {
          if (d < -opt_.optimality_tol) {
            enter = j;
            break;
          }
        } else if (d < best) {
          best = d;
          enter = j;
        }
      }
      if (enter < 0) return true;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        const double a = t_(i, enter);
        if (a <= opt_.pivot_tol) continue;
        const double ratio = t_(i, cols_) / a;
        if (leave < 0 || ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          leave = i;
        } else if (ratio <= best_ratio + 1e-12) {
          const bool better =
              bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                    : a > t_(leave, enter);
          if (better) {
            best_ratio = std::min(best_ratio, ratio);
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      if (std::abs(t_(leave, enter)) < opt_.breakdown_tol) {
        throw NumericalFailure(fmt::format("simplex pivot {:.3g} below {:.1g} at iteration {}",
                                           t_(leave, enter), opt_.breakdown_tol, iterations_));
      }
      if (best_ratio <= 1e-12) {
        if (++stalled >= opt_.stall_limit && !bland) {
          bland = true;
          used_bland_ = true;
        }
      } else {
        stalled = 0;
      }
      pivot(leave, enter);
      if (++iterations_ > opt_.max_iterations) {
        throw NumericalFailure(
            fmt::format("simplex exceeded {} iterations ({} rows, {} columns)",
                        opt_.max_iterations, m_, cols_));
      }
    }
  }

  void pivot(int r, int e) {
    t_.row(r) /= t_(r, e);
    Eigen::VectorXd col = t_.col(e);
    col(r) = 0.0;
    t_.noalias() -= col * t_.row(r);
    t_.col(e).setZero();
    t_(r, e) = 1.0;
    for (int i = 0; i < m_; ++i) {
      double& b = t_(i, cols_);
      if (b < 0.0 && b > -1e-11) b = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = e;
  }

  SimplexOptions opt_;
  int n_ = 0, m_ub_ = 0, m_ = 0, art_start_ = 0, cols_ = 0;
  Eigen::MatrixXd t_;
  std::vector<int> basis_;
  std::vector<int> art_of_row_;
  std::vector<bool> dropped_;
  int iterations_ = 0;
  bool used_bland_ = false;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options) {
  lp.validate();
  const double tol = options.feasibility_tol * rhs_scale(lp);
  Tableau tab(lp, options);
  LpSolution sol;

  if (tab.has_artificials()) {
    const double infeas = tab.phase_one();
    if (infeas > tol) {
      sol.status = LpStatus::Infeasible;
      sol.x = tab.primal();
      sol.max_residual = lp_residual(lp, sol.x);
      sol.iterations = tab.iterations();
      sol.used_bland = tab.used_bland();
      return sol;
    }
    tab.drive_out_artificials();
  }

  const Eigen::VectorXd cost = lp.sense == Sense::Minimize ? lp.objective : Eigen::VectorXd(-lp.objective);
  const bool bounded = tab.phase_two(cost);
  sol.status = bounded ? LpStatus::Optimal : LpStatus::Unbounded;
  sol.x = tab.primal();
  sol.objective = lp.objective.dot(sol.x);
  sol.max_residual = lp_residual(lp, sol.x);
  sol.iterations = tab.iterations();
  sol.used_bland = tab.used_bland();
  tab.export_basis(sol);
  if (sol.status == LpStatus::Optimal && sol.max_residual > tol) {
    throw NumericalFailure(fmt::format(
        "simplex optimum violates constraints by {:.3g} (tolerance {:.3g}, {} iterations)",
        sol.max_residual, tol, sol.iterations));
  }
  return sol;
}

OptimalityCertificate verify_optimality(const LinearProgram& lp, const LpSolution& solution,
                                        double tol) {
  OptimalityCertificate cert;
  const int n = lp.num_vars();
  const int m_ub = static_cast<int>(lp.a_ub.rows());
  const int m = m_ub + static_cast<int>(lp.a_eq.rows());
  cert.primal_residual = lp_residual(lp, solution.x);
  if (solution.status != LpStatus::Optimal) return cert;

  // Standard-form matrix [A_ub I; A_eq 0] restricted to the kept rows.
  const int cols = n + m_ub;
  const auto rows = static_cast<int>(solution.rows.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int i = solution.rows[static_cast<std::size_t>(r)];
    if (i < m_ub) {
      a.row(r).head(n) = lp.a_ub.row(i);
      a(r, n + i) = 1.0;
    } else if (i < m) {
      a.row(r).head(n) = lp.a_eq.row(i - m_ub);
    }
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(cols);
  c.head(n) = lp.sense == Sense::Minimize ? lp.objective : Eigen::VectorXd(-lp.objective);

  Eigen::MatrixXd basis(rows, rows);
  Eigen::VectorXd c_b(rows);
  for (int r = 0; r < rows; ++r) {
    const int j = solution.basis[static_cast<std::size_t>(r)];
    if (j < 0 || j >= cols) return cert;
    basis.col(r) = a.col(j);
    c_b(r) = c(j);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows);
  if (rows > 0) y = basis.transpose().fullPivLu().solve(c_b);
  const Eigen::VectorXd reduced = c - a.transpose() * y;
  cert.min_reduced_cost = cols > 0 ? reduced.minCoeff() : 0.0;

  cert.duals = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < rows; ++r) {
    const int i = solution.rows[static_cast<std::size_t>(r)];
    cert.duals(i) = y(r);
    if (i < m_ub) cert.dual_sign_violation = std::max(cert.dual_sign_violation, y(r));
  }
  const double scale = 1.0 + (c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0);
  cert.ok = cert.primal_residual <= tol * rhs_scale(lp) && cert.min_reduced_cost >= -tol * scale &&
            cert.dual_sign_violation <= tol * scale;
  return cert;
}

}  // namespace pidb
