#pragma once

// File formats: JSON trial, assumption and truth documents in; CSV and
// markdown tables out. CSV carries shortest round-trip decimals, markdown
// rounds to three places.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pidb/bounds.hpp"
#include "pidb/mc.hpp"
#include "pidb/model.hpp"

namespace pidb {

/// Schema errors raise ParseError with the JSON path of the field
/// ("arms[1].marginals_p1[2]"); range errors raise ValidationError.
TrialSummary parse_trial(const nlohmann::json& doc);
TrialSummary load_trial(const std::filesystem::path& path);

/// A list of {form, t, t_prime?, cell, cell_prime?, lo, hi}, either bare or
/// under "assumptions". Cells are label strings ("YFL") or bit strings
/// ("010") resolved against `trial`.
std::vector<Assumption> parse_assumptions(const nlohmann::json& doc, const TrialSummary& trial);
std::vector<Assumption> load_assumptions(const std::filesystem::path& path,
                                         const TrialSummary& trial);

GroundTruth parse_truth(const nlohmann::json& doc);
GroundTruth load_truth(const std::filesystem::path& path);
nlohmann::json truth_to_json(const GroundTruth& truth);

/// Reads a whole file; ParseError on I/O failure or malformed JSON.
nlohmann::json read_json(const std::filesystem::path& path);

enum class Format { Markdown, Csv };
std::string_view to_string(Format format);

/// Shortest decimal that parses back to the same double; "inf" for +inf.
std::string full_precision(double v);

/// `header` applies to CSV only, so several tables can share one header.
std::string render_table(const BoundTable& table, Format format, bool header = true);
std::string render_simulation(const SimulationReport& report, Format format);

struct ConsistencyReport {
  struct Arm {
    std::string treatment;
    ImpliedMeans implied;
    bool consistent = true;  // spread <= 2 eps_eq
  };
  std::vector<Arm> arms;
  std::vector<double> marginal_discrepancy;  // per covariate, max - min over arms
  bool marginals_consistent = true;          // every discrepancy <= 2 eps_marg
  std::vector<CovariateLabels> labels;
  Tolerances tolerances;
  std::optional<Route> route;  // unset when the system cannot be compiled

  bool consistent() const;
};

ConsistencyReport check_consistency(const TrialSummary& trial,
                                    const std::vector<std::string>& arms,
                                    const std::vector<Assumption>& assumptions,
                                    const Tolerances& tolerances);
std::string render_check(const ConsistencyReport& report, Format format);

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace pidb
