#include "pidb/bounds.hpp"

#include <exception>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

namespace {

EndpointValue from_lp(const Endpoint& e) {
  EndpointValue v;
  v.value = e.value;
  v.status = BoundClass::CertifiedLP;
  v.vanishing_mass = e.vanishing_mass;
  v.unbounded = e.status == BoundStatus::Unbounded;
  return v;
}

EndpointValue from_nlp(const EndpointReport& r) {
  EndpointValue v;
  v.value = r.value;
  v.status = r.status == EndpointStatus::Feasible ? BoundClass::HeuristicNLP
                                                  : BoundClass::HeuristicInfeasible;
  v.feasible_count = r.feasible_count;
  return v;
}

int rank_of(BoundClass c) {
  switch (c) {
    case BoundClass::CertifiedLP: return 0;
    case BoundClass::HeuristicNLP: return 1;
    case BoundClass::HeuristicInfeasible: return 2;
  }
  return 2;
}

template <typename Body>
void for_each_cell(int cells, Execution execution, Body&& body) {
  std::exception_ptr error;
  const bool parallel = execution == Execution::Parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int c = 0; c < cells; ++c) {
    try {
      body(c);
    } catch (...) {
#pragma omp critical(pidb_bounds_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

BoundTable make_table(const ConstraintSystem& system, std::string_view t,
                      std::string_view t_prime, std::string quantity, Route route) {
  BoundTable table;
  table.arm = std::string(t);
  table.arm_prime = std::string(t_prime);
  table.quantity = std::move(quantity);
  table.route = route;
  for (const auto& cell : enumerate_cells(system.covariates())) {
    BoundRow row;
    row.arm = table.arm;
    row.arm_prime = table.arm_prime;
    row.cell = cell;
    row.label = cell_label(system.labels(), cell);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Auto: return "auto";
    case Method::LP: return "lp";
    case Method::NLP: return "nlp";
  }
  return "?";
}

std::string_view to_string(BoundClass status) {
  switch (status) {
    case BoundClass::CertifiedLP: return "Certified-LP";
    case BoundClass::HeuristicNLP: return "Heuristic-NLP";
    case BoundClass::HeuristicInfeasible: return "Heuristic-Infeasible";
  }
  return "?";
}

std::string_view to_string(VariationReading reading) {
  return reading == VariationReading::Literal ? "literal" : "within-arm";
}

BoundClass BoundRow::status() const {
  return rank_of(lower.status) >= rank_of(upper.status) ? lower.status : upper.status;
}

Route resolve_route(const ConstraintSystem& system, Method method) {
  switch (method) {
    case Method::Auto: return classify_route(system);
    case Method::NLP: return Route::HeuristicNLP;
    case Method::LP:
      if (!system.lp_eligible()) {
        throw RouteError(
            "method lp requested, but the system is not LP-eligible (needs a binary outcome and "
            "same-cell difference/ratio assumptions)");
      }
      return Route::ExactLP;
  }
  return Route::HeuristicNLP;
}

BoundTable cell_mean_table(const ConstraintSystem& system, std::string_view t,
                           const BoundsConfig& config) {
  const int arm = system.arm_position(t);
  const Route route = resolve_route(system, config.method);
  auto table = make_table(system, t, "", "mean", route);
  if (route == Route::ExactLP) {
    const auto reparam = reparameterize(system);
    for_each_cell(system.cell_count(), config.execution, [&](int c) {
      auto& row = table.rows[static_cast<std::size_t>(c)];
      const auto b = cell_mean_bounds(reparam, t, row.cell);
      row.lower = from_lp(b.lower);
      row.upper = from_lp(b.upper);
    });
    return table;
  }
  SolverConfig nlp = config.nlp;
  nlp.execution = config.execution;
  for (auto& row : table.rows) {
    Target target;
    target.kind = TargetKind::Mean;
    target.arm = target.arm_prime = arm;
    target.cell = target.cell_prime = row.cell.rank();
    row.lower = from_nlp(multistart_bound(system, target, Direction::Lower, nlp));
    row.upper = from_nlp(multistart_bound(system, target, Direction::Upper, nlp));
  }
  return table;
}

BoundTable contrast_table(const ConstraintSystem& system, std::string_view t,
                          std::string_view t_prime, ContrastKind kind, const BoundsConfig& config) {
  if (t == t_prime) throw UnknownArm("a contrast needs two different treatments");
  const int arm = system.arm_position(t);
  const int arm_prime = system.arm_position(t_prime);
  const Route route = resolve_route(system, config.method);
  auto table = make_table(system, t, t_prime,
                          kind == ContrastKind::Difference ? "difference" : "ratio", route);
  if (route == Route::ExactLP) {
    const auto reparam = reparameterize(system);
    for_each_cell(system.cell_count(), config.execution, [&](int c) {
      auto& row = table.rows[static_cast<std::size_t>(c)];
      const auto b = contrast_bounds(reparam, t, t_prime, row.cell, kind);
      row.lower = from_lp(b.lower);
      row.upper = from_lp(b.upper);
    });
    return table;
  }
  SolverConfig nlp = config.nlp;
  nlp.execution = config.execution;
  for (auto& row : table.rows) {
    Target target;
    target.kind = kind == ContrastKind::Difference ? TargetKind::Difference : TargetKind::Ratio;
    target.arm = arm;
    target.arm_prime = arm_prime;
    target.cell = target.cell_prime = row.cell.rank();
    row.lower = from_nlp(multistart_bound(system, target, Direction::Lower, nlp));
    row.upper = from_nlp(multistart_bound(system, target, Direction::Upper, nlp));
  }
  return table;
}

std::vector<Assumption> adjacent_variation(const std::vector<std::string>& arms, int covariates,
                                           double b, VariationReading reading,
                                           bool include_same_cell) {
  if (!(b >= 0.0)) throw InvalidAssumption(fmt::format("variation bound must be >= 0, got {}", b));
  std::vector<std::pair<std::string, std::string>> pairs;
  if (reading == VariationReading::WithinArm) {
    for (const auto& a : arms) pairs.emplace_back(a, a);
  } else {
    if (arms.size() < 2) throw InvalidAssumption("the literal reading needs two treatments");
    for (std::size_t i = 0; i < arms.size(); ++i) {
      for (std::size_t j = i + 1; j < arms.size(); ++j) pairs.emplace_back(arms[i], arms[j]);
    }
  }
  std::vector<Assumption> out;
  for (const auto& [t, tp] : pairs) {
    for (const auto& cell : enumerate_cells(covariates)) {
      if (include_same_cell && t != tp) {
        out.push_back({AssumptionForm::Diff, t, tp, cell, cell, -b, b});
      }
      for (int k = 0; k < covariates; ++k) {
        out.push_back({AssumptionForm::Diff, t, tp, cell, cell.flipped(k), -b, b});
      }
    }
  }
  return out;
}

}  // namespace pidb
