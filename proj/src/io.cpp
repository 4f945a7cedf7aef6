#include "pidb/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

using nlohmann::json;

namespace {

// A JSON node together with its path from the document root.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

  Node operator[](const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) {
      throw ParseError(fmt::format("{}: missing field", child(key)));
    }
    return {j_.at(key), child(key)};
  }
  Node operator[](std::size_t i) const { return {j_.at(i), fmt::format("{}[{}]", path_, i)}; }

  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }
  double number() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }
  long integer() const {
    if (!j_.is_number_integer() && !j_.is_number_unsigned()) fail("expected an integer");
    return j_.get<long>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].number());
    return out;
  }
  [[noreturn]] void fail(std::string_view message) const {
    throw ParseError(fmt::format("{}: {}", path_.empty() ? "<root>" : path_, message));
  }

 private:
  std::string child(const char* key) const {
    return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key);
  }
  const json& j_;
  std::string path_;
};

std::vector<CovariateLabels> parse_labels(const Node& covariates) {
  std::vector<CovariateLabels> labels;
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const auto c = covariates[i];
    labels.push_back({c["label0"].string(), c["label1"].string()});
    if (labels.back().label0.empty() || labels.back().label0 == labels.back().label1) {
      c.fail("label0 and label1 must be distinct and non-empty");
    }
  }
  if (labels.empty() || static_cast<int>(labels.size()) > kMaxCovariates) {
    throw InvalidDimension(
        fmt::format("covariates: K = {} outside [1, {}]", labels.size(), kMaxCovariates));
  }
  return labels;
}

json labels_to_json(const std::vector<CovariateLabels>& labels) {
  json out = json::array();
  for (const auto& l : labels) out.push_back({{"label0", l.label0}, {"label1", l.label1}});
  return out;
}

AssumptionForm parse_form(const Node& n) {
  const auto s = n.string();
  if (s == "direct") return AssumptionForm::Direct;
  if (s == "diff") return AssumptionForm::Diff;
  if (s == "ratio") return AssumptionForm::Ratio;
  n.fail(fmt::format("unknown form '{}' (direct, diff, ratio)", s));
}

CellIndex parse_cell(const Node& n, const TrialSummary& trial) {
  const auto text = n.string();
  const auto cell = trial.parse_cell(text);
  if (!cell) n.fail(fmt::format("'{}' is neither a cell label nor a bit string", text));
  return *cell;
}

std::string fixed3(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.3f}", v);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string endpoint_notes(const BoundRow& row) {
  std::vector<std::string> notes;
  auto add = [&](const EndpointValue& e, const char* side) {
    if (e.unbounded) notes.push_back(fmt::format("{} unbounded", side));
    if (e.vanishing_mass) notes.push_back(fmt::format("{} at vanishing mass", side));
    if (e.status != BoundClass::CertifiedLP) {
      notes.push_back(fmt::format("{} feasible starts {}", side, e.feasible_count));
    }
  };
  add(row.lower, "lower");
  add(row.upper, "upper");
  std::string out;
  for (const auto& n : notes) out += (out.empty() ? "" : "; ") + n;
  return out;
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("{}: cannot open file", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

TrialSummary parse_trial(const json& doc) {
  const Node root(doc, "");
  auto labels = parse_labels(root["covariates"]);
  OutcomeKind kind = OutcomeKind::Binary;
  if (root.has("outcome")) {
    const auto o = root["outcome"];
    const auto s = o.string();
    if (s == "bounded_real") {
      kind = OutcomeKind::BoundedReal;
    } else if (s != "binary") {
      o.fail(fmt::format("unknown outcome '{}' (binary, bounded_real)", s));
    }
  }
  const auto arms = root["arms"];
  std::vector<ArmSummary> out;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto a = arms[i];
    ArmSummary s;
    s.treatment_id = a["treatment"].string();
    s.n_subjects = a["n"].integer();
    s.marginal = a["marginals_p1"].numbers();
    s.short_mean_0 = a["short_mean_x0"].numbers();
    s.short_mean_1 = a["short_mean_x1"].numbers();
    s.outcome_kind = kind;
    for (const auto& prev : out) {
      if (prev.treatment_id == s.treatment_id) {
        a["treatment"].fail(fmt::format("duplicate treatment '{}'", s.treatment_id));
      }
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) arms.fail("at least one arm required");
  return TrialSummary(std::move(labels), std::move(out));
}

TrialSummary load_trial(const std::filesystem::path& path) { return parse_trial(read_json(path)); }

std::vector<Assumption> parse_assumptions(const json& doc, const TrialSummary& trial) {
  const Node root(doc, "");
  const Node list = doc.is_object() ? root["assumptions"] : root;
  std::vector<Assumption> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto n = list[i];
    Assumption a;
    a.form = parse_form(n["form"]);
    a.t = n["t"].string();
    if (n.has("t_prime")) a.t_prime = n["t_prime"].string();
    a.cell = parse_cell(n["cell"], trial);
    if (n.has("cell_prime")) a.cell_prime = parse_cell(n["cell_prime"], trial);
    a.lo = n["lo"].number();
    a.hi = n["hi"].number();
    if (!(a.lo <= a.hi)) n.fail(fmt::format("lo = {} exceeds hi = {}", a.lo, a.hi));
    for (const auto& id : {a.t, a.t_prime.value_or(a.t)}) {
      if (!trial.has_arm(id)) throw UnknownArm(fmt::format("{}: unknown treatment '{}'", n.path(), id));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Assumption> load_assumptions(const std::filesystem::path& path,
                                         const TrialSummary& trial) {
  return parse_assumptions(read_json(path), trial);
}

GroundTruth parse_truth(const json& doc) {
  const Node root(doc, "");
  GroundTruth t;
  t.labels = parse_labels(root["covariates"]);
  t.probs = root["probs"].numbers();
  const auto arms = root["arms"];
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto a = arms[i];
    t.arms.push_back(a["treatment"].string());
    t.assignment.push_back(a["assignment"].number());
    t.means.push_back(a["means"].numbers());
  }
  t.validate();
  return t;
}

GroundTruth load_truth(const std::filesystem::path& path) { return parse_truth(read_json(path)); }

json truth_to_json(const GroundTruth& truth) {
  json arms = json::array();
  for (std::size_t a = 0; a < truth.arms.size(); ++a) {
    arms.push_back({{"treatment", truth.arms[a]},
                    {"assignment", truth.assignment[a]},
                    {"means", truth.means[a]}});
  }
  json cells = json::array();
  for (const auto& c : enumerate_cells(truth.covariates())) cells.push_back(cell_label(truth.labels, c));
  return {{"covariates", labels_to_json(truth.labels)},
          {"cells", cells},
          {"probs", truth.probs},
          {"arms", arms}};
}

std::string_view to_string(Format format) { return format == Format::Csv ? "csv" : "markdown"; }

std::string full_precision(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::string render_table(const BoundTable& table, Format format, bool header) {
  std::string out;
  if (format == Format::Csv) {
    if (header) out += "arm,arm_prime,quantity,cell,lower,upper,status,notes\n";
    for (const auto& r : table.rows) {
      out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(r.arm), csv_field(r.arm_prime),
                         table.quantity, csv_field(r.label), full_precision(r.lower.value),
                         full_precision(r.upper.value), to_string(r.status()),
                         csv_field(endpoint_notes(r)));
    }
    return out;
  }
  const std::string subject =
      table.arm_prime.empty() ? table.arm : fmt::format("{} vs {}", table.arm, table.arm_prime);
  out += fmt::format("### {}: {} ({})\n\n", subject, table.quantity, to_string(table.route));
  out += "| cell | lower bound | upper bound | status | notes |\n";
  out += "|------|------------:|------------:|--------|-------|\n";
  for (const auto& r : table.rows) {
    out += fmt::format("| {} | {} | {} | {} | {} |\n", r.label, fixed3(r.lower.value),
                       fixed3(r.upper.value), to_string(r.status()), endpoint_notes(r));
  }
  return out;
}

std::string render_simulation(const SimulationReport& report, Format format) {
  std::string out;
  if (format == Format::Csv) {
    out += "arm,cell,endpoint,mean,sd,p05,p95,n_ok,status\n";
    for (const auto& e : report.endpoints) {
      out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(e.arm), csv_field(e.label),
                         e.upper ? "upper" : "lower", full_precision(e.mean),
                         full_precision(e.sd), full_precision(e.p05), full_precision(e.p95),
                         e.values.size(), to_string(e.status));
    }
    return out;
  }
  out += fmt::format("### Sampling imprecision: N = {}, reps = {}, seed = {}{}\n\n", report.n_total,
                     report.reps, report.seed, report.exact ? " (exact summaries)" : "");
  out += fmt::format("replications: {} ok, {} degenerate, {} infeasible, {} solver failures\n\n",
                     report.ok, report.degenerate, report.infeasible, report.failed);
  out += "| arm | cell | endpoint | mean | sd | p05 | p95 | status |\n";
  out += "|-----|------|----------|-----:|---:|----:|----:|--------|\n";
  for (const auto& e : report.endpoints) {
    out += fmt::format("| {} | {} | {} | {} | {:.4f} | {} | {} | {} |\n", e.arm, e.label,
                       e.upper ? "upper" : "lower", fixed3(e.mean), e.sd, fixed3(e.p05),
                       fixed3(e.p95), to_string(e.status));
  }
  return out;
}

bool ConsistencyReport::consistent() const {
  return marginals_consistent &&
         std::ranges::all_of(arms, [](const Arm& a) { return a.consistent; });
}

ConsistencyReport check_consistency(const TrialSummary& trial,
                                    const std::vector<std::string>& arms,
                                    const std::vector<Assumption>& assumptions,
                                    const Tolerances& tolerances) {
  ConsistencyReport report;
  report.tolerances = tolerances;
  report.labels = trial.labels();
  const int k = trial.covariates();
  report.marginal_discrepancy.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<double> lo(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(k), -std::numeric_limits<double>::infinity());
  for (const auto& id : arms) {
    const auto& arm = trial.arm(id);
    ConsistencyReport::Arm row{id, implied_overall_means(arm), true};
    row.consistent = row.implied.spread <= 2.0 * tolerances.eps_eq;
    report.arms.push_back(std::move(row));
    for (std::size_t j = 0; j < lo.size(); ++j) {
      lo[j] = std::min(lo[j], arm.marginal[j]);
      hi[j] = std::max(hi[j], arm.marginal[j]);
    }
  }
  for (std::size_t j = 0; j < lo.size(); ++j) {
    report.marginal_discrepancy[j] = hi[j] - lo[j];
    if (report.marginal_discrepancy[j] > 2.0 * tolerances.eps_marg) report.marginals_consistent = false;
  }
  if (report.consistent()) {
    report.route = classify_route(build_system(trial, arms, assumptions, tolerances));
  }
  return report;
}

std::string render_check(const ConsistencyReport& report, Format format) {
  std::string out;
  const bool csv = format == Format::Csv;
  auto num = [&](double v) { return csv ? full_precision(v) : fmt::format("{:.6f}", v); };
  if (csv) {
    out += "item,covariate,value,limit,result\n";
  } else {
    out += fmt::format("### Consistency check (eps_eq = {}, eps_marg = {})\n\n",
                       report.tolerances.eps_eq, report.tolerances.eps_marg);
    out += "| item | covariate | value | limit | result |\n";
    out += "|------|-----------|------:|------:|--------|\n";
  }
  auto cov_name = [&](std::size_t j) {
    const auto& l = report.labels[j];
    return fmt::format("{}/{}", l.label0, l.label1);
  };
  auto line = [&](const std::string& item, const std::string& cov, double v, double limit,
                  std::string_view result) {
    if (csv) {
      out += fmt::format("{},{},{},{},{}\n", csv_field(item), cov, full_precision(v),
                         limit < 0 ? "" : full_precision(limit), result);
    } else {
      out += fmt::format("| {} | {} | {} | {} | {} |\n", item, cov, num(v),
                         limit < 0 ? "" : num(limit), result);
    }
  };
  for (const auto& a : report.arms) {
    for (std::size_t j = 0; j < a.implied.per_covariate.size(); ++j) {
      line(a.treatment + " implied mean", cov_name(j), a.implied.per_covariate[j], -1, "");
    }
    line(a.treatment + " spread", "", a.implied.spread, 2.0 * report.tolerances.eps_eq,
         a.consistent ? "consistent" : "inconsistent");
  }
  if (report.arms.size() > 1) {
    for (std::size_t j = 0; j < report.marginal_discrepancy.size(); ++j) {
      const double d = report.marginal_discrepancy[j];
      line("marginal discrepancy", cov_name(j), d, 2.0 * report.tolerances.eps_marg,
           d <= 2.0 * report.tolerances.eps_marg ? "consistent" : "inconsistent");
    }
  }
  const std::string route = report.route ? std::string(to_string(*report.route)) : "none";
  const std::string_view verdict = report.consistent() ? "consistent" : "inconsistent";
  if (csv) {
    out += fmt::format("route,,{},,\noverall,,,,{}\n", route, verdict);
  } else {
    out += fmt::format("\nroute: {}\nresult: {}\n", route, verdict);
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pidb
