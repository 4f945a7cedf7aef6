#include "pidb/mc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pidb/errors.hpp"
#include "pidb/lp.hpp"
#include "pidb/simplex.hpp"

namespace pidb {

namespace {

constexpr std::uint64_t kTrialStream = 21;

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

struct ArmCounts {
  long n = 0;
  std::vector<long> cell_n;
  std::vector<long> cell_y;
};

ArmSummary summarize_counts(const std::string& id, int k, const ArmCounts& counts,
                            bool round_to_3) {
  ArmSummary a;
  a.treatment_id = id;
  a.n_subjects = counts.n;
  if (counts.n == 0) throw DegenerateSample(fmt::format("arm '{}' received no subjects", id));
  for (int j = 0; j < k; ++j) {
    long n1 = 0, y0 = 0, y1 = 0;
    for (std::size_t c = 0; c < counts.cell_n.size(); ++c) {
      if ((c >> j) & 1U) {
        n1 += counts.cell_n[c];
        y1 += counts.cell_y[c];
      } else {
        y0 += counts.cell_y[c];
      }
    }
    const long n0 = counts.n - n1;
    if (n0 == 0 || n1 == 0) {
      throw DegenerateSample(
          fmt::format("arm '{}': no subjects with covariate {} = {}", id, j, n0 == 0 ? 0 : 1));
    }
    double p = static_cast<double>(n1) / static_cast<double>(counts.n);
    double s0 = static_cast<double>(y0) / static_cast<double>(n0);
    double s1 = static_cast<double>(y1) / static_cast<double>(n1);
    if (round_to_3) {
      p = round3(p);
      s0 = round3(s0);
      s1 = round3(s1);
      if (p <= 0.0 || p >= 1.0) {
        throw DegenerateSample(fmt::format("arm '{}': marginal {} rounds to {}", id, j, p));
      }
    }
    a.marginal.push_back(p);
    a.short_mean_0.push_back(s0);
    a.short_mean_1.push_back(s1);
  }
  return a;
}

std::vector<Assumption> own_assumptions(const std::vector<Assumption>& all, const std::string& arm) {
  std::vector<Assumption> out;
  for (const auto& a : all) {
    if (a.t == arm && a.t_prime.value_or(a.t) == arm) out.push_back(a);
  }
  return out;
}

}  // namespace

void GroundTruth::validate() const {
  const int k = covariates();
  if (k < 1 || k > kMaxCovariates) throw InvalidDimension(fmt::format("truth: K = {} unsupported", k));
  const std::size_t cells = std::size_t{1} << k;
  if (arms.empty()) throw ValidationError("truth.arms: at least one arm required");
  if (means.size() != arms.size() || assignment.size() != arms.size()) {
    throw ValidationError("truth: means and assignment need one entry per arm");
  }
  if (probs.size() != cells) {
    throw ValidationError(fmt::format("truth.probs: expected {} cells, got {}", cells, probs.size()));
  }
  auto check_simplex = [](const std::vector<double>& v, const char* name) {
    double total = 0.0;
    for (double x : v) {
      if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(fmt::format("truth.{}: {} outside [0, 1]", name, x));
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ValidationError(fmt::format("truth.{}: sums to {:.15g}, not 1", name, total));
    }
  };
  check_simplex(probs, "probs");
  check_simplex(assignment, "assignment");
  for (std::size_t a = 0; a < arms.size(); ++a) {
    if (means[a].size() != cells) {
      throw ValidationError(fmt::format("truth.means[{}]: expected {} cells", arms[a], cells));
    }
    for (double m : means[a]) {
      if (!(m >= 0.0 && m <= 1.0)) {
        throw ValidationError(fmt::format("truth.means[{}]: {} outside [0, 1]", arms[a], m));
      }
    }
  }
}

GroundTruth interior_truth(const TrialSummary& trial, const std::vector<std::string>& arms,
                           const Tolerances& tolerances) {
  const auto sys = build_system(trial, arms, {}, tolerances);
  const auto reparam = reparameterize(sys);
  const int n = reparam.variable_count();
  std::vector<double> avg(static_cast<std::size_t>(n), 0.0);
  int solved = 0;
  for (int j = 0; j < n; ++j) {
    for (Sense sense : {Sense::Minimize, Sense::Maximize}) {
      const auto lp = to_linear_program(reparam.rows(), n, {{j, 1.0}}, sense);
      const auto sol = solve_lp(lp);
      if (sol.status != LpStatus::Optimal) {
        throw InfeasibleInput("reported summaries admit no joint distribution");
      }
      for (int i = 0; i < n; ++i) avg[static_cast<std::size_t>(i)] += sol.x(i);
      ++solved;
    }
  }
  for (auto& v : avg) v /= solved;

  GroundTruth truth;
  truth.labels = trial.labels();
  truth.arms = arms;
  const auto cells = static_cast<std::uint32_t>(sys.cell_count());
  double total = 0.0;
  for (std::uint32_t c = 0; c < cells; ++c) {
    total += truth.probs.emplace_back(avg[static_cast<std::size_t>(reparam.p_index(c))]);
  }
  for (auto& p : truth.probs) p /= total;
  long subjects = 0;
  for (const auto& a : arms) subjects += trial.arm(a).n_subjects;
  for (int a = 0; a < sys.arm_count(); ++a) {
    auto& m = truth.means.emplace_back();
    for (std::uint32_t c = 0; c < cells; ++c) {
      const double w = avg[static_cast<std::size_t>(reparam.w_index(a, c))];
      const double p = avg[static_cast<std::size_t>(reparam.p_index(c))];
      m.push_back(std::clamp(w / p, 0.0, 1.0));
    }
    truth.assignment.push_back(static_cast<double>(trial.arm(arms[static_cast<std::size_t>(a)]).n_subjects) /
                               static_cast<double>(subjects));
  }
  return truth;
}

TrialSummary implied_summary(const GroundTruth& truth, long n_total) {
  truth.validate();
  const int k = truth.covariates();
  std::vector<ArmSummary> out;
  for (std::size_t a = 0; a < truth.arms.size(); ++a) {
    ArmSummary s;
    s.treatment_id = truth.arms[a];
    s.n_subjects = std::max(1L, std::lround(truth.assignment[a] * static_cast<double>(n_total)));
    for (int j = 0; j < k; ++j) {
      double p1 = 0.0, w0 = 0.0, w1 = 0.0;
      for (std::size_t c = 0; c < truth.probs.size(); ++c) {
        const double w = truth.means[a][c] * truth.probs[c];
        if ((c >> j) & 1U) {
          p1 += truth.probs[c];
          w1 += w;
        } else {
          w0 += w;
        }
      }
      s.marginal.push_back(p1);
      s.short_mean_0.push_back(w0 / (1.0 - p1));
      s.short_mean_1.push_back(w1 / p1);
    }
    out.push_back(std::move(s));
  }
  return TrialSummary(truth.labels, std::move(out));
}

TrialSummary draw_trial(const GroundTruth& truth, long n_total, std::uint64_t seed,
                        bool round_to_3) {
  truth.validate();
  if (n_total < 1) throw ValidationError("n_total must be at least 1");
  const int k = truth.covariates();
  const std::size_t arms = truth.arms.size();
  std::vector<ArmCounts> counts(arms);
  for (auto& c : counts) {
    c.cell_n.assign(truth.probs.size(), 0);
    c.cell_y.assign(truth.probs.size(), 0);
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> draw_cell(truth.probs.begin(), truth.probs.end());
  std::discrete_distribution<std::size_t> draw_arm(truth.assignment.begin(), truth.assignment.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (long i = 0; i < n_total; ++i) {
    const std::size_t cell = draw_cell(rng);
    const std::size_t arm = draw_arm(rng);
    auto& c = counts[arm];
    ++c.n;
    ++c.cell_n[cell];
    if (unit(rng) < truth.means[arm][cell]) ++c.cell_y[cell];
  }
  std::vector<ArmSummary> out;
  for (std::size_t a = 0; a < arms; ++a) {
    out.push_back(summarize_counts(truth.arms[a], k, counts[a], round_to_3));
  }
  return TrialSummary(truth.labels, std::move(out));
}

void StudyConfig::validate() const {
  if (reps < 2) throw ValidationError("reps must be at least 2");
  if (n_total < 1) throw ValidationError("n_total must be at least 1");
}

std::string_view to_string(ReplicationStatus status) {
  switch (status) {
    case ReplicationStatus::Ok: return "ok";
    case ReplicationStatus::DegenerateSample: return "degenerate-sample";
    case ReplicationStatus::InfeasibleInput: return "infeasible-input";
    case ReplicationStatus::SolverFailure: return "solver-failure";
  }
  return "?";
}

double nearest_rank(std::vector<double> values, double pct) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(pct / 100.0 * n)));
  return values[std::min(rank, values.size()) - 1];
}

SimulationReport imprecision_study(const GroundTruth& truth, const StudyConfig& config) {
  config.validate();
  truth.validate();
  const std::vector<std::string> arms = config.arms.empty() ? truth.arms : config.arms;
  for (const auto& a : arms) {
    if (std::find(truth.arms.begin(), truth.arms.end(), a) == truth.arms.end()) {
      throw UnknownArm(fmt::format("truth has no treatment '{}'", a));
    }
  }
  const int cells = 1 << truth.covariates();
  const std::size_t per_rep = arms.size() * static_cast<std::size_t>(cells) * 2;

  BoundsConfig inner = config.bounds;
  const bool parallel = config.execution == Execution::Parallel;
  if (parallel) inner.execution = Execution::Serial;

  struct Rep {
    ReplicationStatus status = ReplicationStatus::Ok;
    std::vector<double> values;
    std::vector<BoundClass> classes;
  };
  auto run_rep = [&](const TrialSummary& summary) {
    Rep rep;
    rep.values.reserve(per_rep);
    auto take = [&](const BoundTable& table) {
      for (const auto& row : table.rows) {
        rep.values.push_back(row.lower.value);
        rep.values.push_back(row.upper.value);
        rep.classes.push_back(row.lower.status);
        rep.classes.push_back(row.upper.status);
      }
    };
    if (config.joint) {
      const auto sys = build_system(summary, arms, config.assumptions, config.tolerances);
      for (const auto& a : arms) take(cell_mean_table(sys, a, inner));
    } else {
      for (const auto& a : arms) {
        const auto sys = build_system(summary, {a}, own_assumptions(config.assumptions, a),
                                      config.tolerances);
        take(cell_mean_table(sys, a, inner));
      }
    }
    return rep;
  };
  auto guarded = [&](auto&& make_summary) {
    try {
      return run_rep(make_summary());
    } catch (const DegenerateSample&) {
      return Rep{ReplicationStatus::DegenerateSample, {}, {}};
    } catch (const InfeasibleInput&) {
      return Rep{ReplicationStatus::InfeasibleInput, {}, {}};
    } catch (const SolverFailure&) {
      return Rep{ReplicationStatus::SolverFailure, {}, {}};
    } catch (const NumericalFailure&) {
      return Rep{ReplicationStatus::SolverFailure, {}, {}};
    }
  };

  std::vector<Rep> reps(static_cast<std::size_t>(config.reps));
  if (config.exact) {
    const auto summary = implied_summary(truth, config.n_total);
    const Rep once = guarded([&] { return summary; });
    std::fill(reps.begin(), reps.end(), once);
  } else {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int r = 0; r < config.reps; ++r) {
      try {
        reps[static_cast<std::size_t>(r)] = guarded([&] {
          return draw_trial(truth, config.n_total,
                            derive_seed(config.seed, kTrialStream, static_cast<std::uint64_t>(r)),
                            config.round_summaries);
        });
      } catch (...) {
#pragma omp critical(pidb_mc_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }

  SimulationReport report;
  report.n_total = config.n_total;
  report.reps = config.reps;
  report.seed = config.seed;
  report.exact = config.exact;
  for (const auto& r : reps) {
    report.replications.push_back(r.status);
    switch (r.status) {
      case ReplicationStatus::Ok: ++report.ok; break;
      case ReplicationStatus::DegenerateSample: ++report.degenerate; break;
      case ReplicationStatus::InfeasibleInput: ++report.infeasible; break;
      case ReplicationStatus::SolverFailure: ++report.failed; break;
    }
  }
  if (report.ok == 0) {
    throw StudyFailure(fmt::format("all {} replications failed ({} degenerate, {} infeasible, {} solver)",
                                   config.reps, report.degenerate, report.infeasible, report.failed));
  }

  std::size_t slot = 0;
  for (const auto& a : arms) {
    for (const auto& cell : enumerate_cells(truth.covariates())) {
      for (int side = 0; side < 2; ++side, ++slot) {
        EndpointSummary e;
        e.arm = a;
        e.cell = cell;
        e.label = cell_label(truth.labels, cell);
        e.upper = side == 1;
        int worst = 0;
        for (const auto& r : reps) {
          if (r.status != ReplicationStatus::Ok) continue;
          e.values.push_back(r.values[slot]);
          worst = std::max(worst, static_cast<int>(r.classes[slot]));
        }
        e.status = static_cast<BoundClass>(worst);
        const auto n = static_cast<double>(e.values.size());
        e.mean = std::accumulate(e.values.begin(), e.values.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : e.values) ss += (v - e.mean) * (v - e.mean);
        e.sd = e.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        e.p05 = nearest_rank(e.values, 5.0);
        e.p95 = nearest_rank(e.values, 95.0);
        report.endpoints.push_back(std::move(e));
      }
    }
  }
  return report;
}

}  // namespace pidb
