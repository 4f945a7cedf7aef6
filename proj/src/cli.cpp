#include "pidb/cli.hpp"

#include <algorithm>
#include <exception>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

namespace {

std::vector<std::string> all_arms(const TrialSummary& trial) {
  std::vector<std::string> out;
  for (const auto& a : trial.arms()) out.push_back(a.treatment_id);
  return out;
}

// Requested arms first, then any other arm referenced by an assumption, in
// input order.
std::vector<std::string> system_arms(const TrialSummary& trial,
                                     const std::vector<std::string>& requested,
                                     const std::vector<Assumption>& assumptions) {
  std::vector<std::string> out = requested;
  auto referenced = [&](const std::string& id) {
    return std::ranges::any_of(assumptions, [&](const Assumption& a) {
      return a.t == id || a.t_prime.value_or(a.t) == id;
    });
  };
  for (const auto& id : all_arms(trial)) {
    if (std::ranges::find(out, id) == out.end() && referenced(id)) out.push_back(id);
  }
  return out;
}

std::vector<Assumption> gather_assumptions(const RunRequest& req, const TrialSummary& trial,
                                           const std::vector<std::string>& requested) {
  std::vector<Assumption> out;
  if (req.assumptions) out = load_assumptions(*req.assumptions, trial);
  if (req.bv_adjacent) {
    const auto& arms =
        req.bv_interpretation == VariationReading::Literal ? all_arms(trial) : requested;
    auto family = adjacent_variation(arms, trial.covariates(), *req.bv_adjacent,
                                     req.bv_interpretation);
    out.insert(out.end(), family.begin(), family.end());
  }
  return out;
}

std::vector<std::string> requested_arms(const RunRequest& req, const TrialSummary& trial) {
  if (req.arms.empty()) return all_arms(trial);
  for (const auto& id : req.arms) {
    if (!trial.has_arm(id)) throw UnknownArm(fmt::format("--arm: unknown treatment '{}'", id));
  }
  return req.arms;
}

BoundsConfig bounds_config(const RunRequest& req) {
  BoundsConfig config;
  config.method = req.method;
  config.nlp.n_starts = req.n_starts;
  config.nlp.seed = req.seed;
  config.execution = req.execution;
  config.nlp.validate();
  return config;
}

// Exit 3 when a whole table came back without a single feasible start.
int table_status(const BoundTable& table, std::string& diagnostics) {
  int infeasible = 0;
  for (const auto& r : table.rows) {
    for (const auto* e : {&r.lower, &r.upper}) {
      if (e->status == BoundClass::HeuristicInfeasible) ++infeasible;
    }
  }
  if (infeasible == 0) return 0;
  const int total = 2 * static_cast<int>(table.rows.size());
  diagnostics += fmt::format("{}: {} of {} endpoints reached no feasible start\n", table.arm,
                             infeasible, total);
  return infeasible == total ? 3 : 0;
}

RunResult run_bounds(const RunRequest& req) {
  RunResult result;
  const auto trial = load_trial(req.input);
  const auto requested = requested_arms(req, trial);
  const auto assumptions = gather_assumptions(req, trial, requested);
  const auto system = build_system(trial, system_arms(trial, requested, assumptions), assumptions,
                                   req.tolerances);
  const auto config = bounds_config(req);
  for (const auto& arm : requested) {
    const auto table = cell_mean_table(system, arm, config);
    const bool first = result.output.empty();
    if (!first && req.format == Format::Markdown) result.output += '\n';
    result.output += render_table(table, req.format, first);
    result.exit_code = std::max(result.exit_code, table_status(table, result.diagnostics));
  }
  return result;
}

RunResult run_contrast(const RunRequest& req) {
  RunResult result;
  const auto trial = load_trial(req.input);
  const auto requested = requested_arms(req, trial);
  if (requested.size() != 2) {
    throw ValidationError(fmt::format("contrast needs exactly two arms, got {}", requested.size()));
  }
  const auto assumptions = gather_assumptions(req, trial, requested);
  const auto system = build_system(trial, system_arms(trial, requested, assumptions), assumptions,
                                   req.tolerances);
  const auto table = contrast_table(system, requested[0], requested[1], req.contrast,
                                    bounds_config(req));
  result.output = render_table(table, req.format);
  result.exit_code = table_status(table, result.diagnostics);
  return result;
}

RunResult run_check(const RunRequest& req) {
  RunResult result;
  const auto trial = load_trial(req.input);
  const auto requested = requested_arms(req, trial);
  const auto assumptions = gather_assumptions(req, trial, requested);
  const auto report = check_consistency(trial, system_arms(trial, requested, assumptions),
                                        assumptions, req.tolerances);
  result.output = render_check(report, req.format);
  if (!report.consistent()) result.exit_code = 3;
  return result;
}

RunResult run_simulate(const RunRequest& req) {
  RunResult result;
  const auto truth = load_truth(req.input);
  const auto population = implied_summary(truth);
  const auto requested = requested_arms(req, population);
  StudyConfig config;
  config.n_total = req.n_total;
  config.reps = req.reps;
  config.seed = req.seed;
  config.exact = req.exact;
  config.round_summaries = req.round_summaries;
  config.arms = requested;
  config.joint = req.joint;
  config.assumptions = gather_assumptions(req, population, requested);
  config.tolerances = req.tolerances;
  config.bounds = bounds_config(req);
  config.execution = req.execution;
  const auto report = imprecision_study(truth, config);
  result.output = render_simulation(report, req.format);
  if (report.ok < report.reps) {
    result.diagnostics += fmt::format("{} of {} replications excluded\n", report.reps - report.ok,
                                      report.reps);
  }
  return result;
}

}  // namespace

RunResult run(const RunRequest& request) {
  try {
    switch (request.command) {
      case Subcommand::Bounds: return run_bounds(request);
      case Subcommand::Check: return run_check(request);
      case Subcommand::Contrast: return run_contrast(request);
      case Subcommand::Simulate: return run_simulate(request);
    }
    throw ValidationError("unknown subcommand");
  } catch (const Error& e) {
    return {e.exit_code(), "", fmt::format("error: {}\n", e.what())};
  } catch (const std::exception& e) {
    return {4, "", fmt::format("internal error: {}\n", e.what())};
  }
}

}  // namespace pidb
