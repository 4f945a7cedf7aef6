#include <cmath>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "pidb/errors.hpp"
#include "pidb/io.hpp"

using namespace pidb;
using nlohmann::json;

namespace {

const std::string kData = PIDB_DATA_DIR;

json empa_doc() { return read_json(kData + "/empa.json"); }

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("bundled trial document") {
  const auto trial = load_trial(kData + "/empa.json");
  CHECK(trial.covariates() == 3);
  const auto& e = trial.arm("empagliflozin");
  CHECK(e.n_subjects == 4687);
  CHECK(e.marginal == std::vector<double>{0.446, 0.288, 0.315});
  CHECK(e.short_mean_0 == std::vector<double>{0.097, 0.110, 0.100});
  CHECK(e.short_mean_1 == std::vector<double>{0.114, 0.091, 0.114});
  const auto& p = trial.arm("placebo");
  CHECK(p.n_subjects == 2333);
  CHECK(p.marginal == std::vector<double>{0.444, 0.280, 0.311});
  CHECK(p.short_mean_1 == std::vector<double>{0.155, 0.107, 0.101});
  CHECK(trial.cell_label(CellIndex(3, 2)) == "YFL");
  CHECK(trial.cell_label(CellIndex(3, 7)) == "OFH");
}

TEST_CASE("schema and range errors name the field") {
  auto doc = empa_doc();
  doc["arms"][1]["marginals_p1"][0] = 1.2;
  const auto range = error_of([&] { parse_trial(doc); });
  CHECK(range.find("marginals_p1[0]") != std::string::npos);
  CHECK_THROWS_AS(parse_trial(doc), ValidationError);

  doc = empa_doc();
  doc["arms"][0].erase("n");
  CHECK(error_of([&] { parse_trial(doc); }).find("arms[0].n: missing field") != std::string::npos);
  CHECK_THROWS_AS(parse_trial(doc), ParseError);

  doc = empa_doc();
  doc["arms"][1]["short_mean_x1"][2] = "high";
  CHECK(error_of([&] { parse_trial(doc); }).find("arms[1].short_mean_x1[2]") != std::string::npos);

  doc = empa_doc();
  doc["arms"][1]["treatment"] = "empagliflozin";
  CHECK_THROWS_AS(parse_trial(doc), ParseError);

  doc = empa_doc();
  doc["outcome"] = "count";
  CHECK(error_of([&] { parse_trial(doc); }).find("outcome") != std::string::npos);

  CHECK_THROWS_AS(read_json(kData + "/does_not_exist.json"), ParseError);
}

TEST_CASE("assumption documents") {
  const auto trial = load_trial(kData + "/empa.json");
  const json doc = json::parse(R"([
    {"form": "direct", "t": "placebo", "cell": "YML", "lo": 0.1, "hi": 0.2},
    {"form": "diff", "t": "empagliflozin", "t_prime": "placebo", "cell": "010",
     "cell_prime": "OFL", "lo": -0.05, "hi": 0.05},
    {"form": "ratio", "t": "empagliflozin", "t_prime": "placebo", "cell": "OFH", "lo": 0.5, "hi": 1.5}
  ])");
  const auto list = parse_assumptions(doc, trial);
  REQUIRE(list.size() == 3);
  CHECK(list[0].form == AssumptionForm::Direct);
  CHECK(!list[0].t_prime);
  CHECK(list[1].cell.rank() == 2);  // bits in covariate order: Y, F, L
  CHECK(list[1].cell_prime->rank() == 3);
  CHECK(list[2].form == AssumptionForm::Ratio);

  auto bad = doc;
  bad[1]["cell"] = "XYZ";
  CHECK(error_of([&] { parse_assumptions(bad, trial); }).find("[1].cell") != std::string::npos);
  bad = doc;
  bad[0]["t"] = "sham";
  CHECK_THROWS_AS(parse_assumptions(bad, trial), UnknownArm);
  bad = doc;
  bad[2]["form"] = "product";
  CHECK_THROWS_AS(parse_assumptions(bad, trial), ParseError);
  bad = doc;
  bad[0]["lo"] = 0.3;
  CHECK_THROWS_AS(parse_assumptions(bad, trial), ParseError);

  const auto bundled = load_assumptions(kData + "/bv_adjacent_0.05.json", trial);
  const auto family = adjacent_variation({"empagliflozin", "placebo"}, 3, 0.05,
                                         VariationReading::Literal);
  REQUIRE(bundled.size() == family.size());
  for (std::size_t i = 0; i < family.size(); ++i) {
    CHECK(bundled[i].cell == family[i].cell);
    CHECK(bundled[i].cell_prime == family[i].cell_prime);
    CHECK(bundled[i].lo == family[i].lo);
  }
}

TEST_CASE("truth documents round-trip") {
  const auto truth = load_truth(kData + "/truth_synthetic.json");
  const auto back = parse_truth(truth_to_json(truth));
  CHECK(back.probs == truth.probs);
  CHECK(back.means == truth.means);
  CHECK(back.assignment == truth.assignment);
  CHECK(back.arms == truth.arms);
  auto doc = truth_to_json(truth);
  doc["arms"][0]["means"][1] = 1.5;
  CHECK_THROWS_AS(parse_truth(doc), ValidationError);
}

TEST_CASE("csv carries full precision and parses back") {
  BoundTable table;
  table.arm = "arm, with comma";
  table.quantity = "mean";
  const double values[] = {0.1 + 0.2, 1.0 / 3.0, 2.220446049250313e-16, 0.999999999999};
  for (int c = 0; c < 2; ++c) {
    BoundRow row;
    row.arm = table.arm;
    row.cell = CellIndex(1, static_cast<std::uint32_t>(c));
    row.label = c == 0 ? "a" : "\"b\"";
    row.lower.value = values[2 * c];
    row.upper.value = values[2 * c + 1];
    table.rows.push_back(row);
  }
  table.rows[1].upper.unbounded = true;
  table.rows[1].upper.value = std::numeric_limits<double>::infinity();
  const auto csv = render_table(table, Format::Csv);
  const auto rows = parse_csv(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "arm");
  CHECK(rows[1][0] == "arm, with comma");
  CHECK(rows[2][3] == "\"b\"");
  CHECK(std::stod(rows[1][4]) == values[0]);
  CHECK(std::stod(rows[1][5]) == values[1]);
  CHECK(std::stod(rows[2][4]) == values[2]);
  CHECK(rows[2][5] == "inf");
  CHECK(rows[2][6] == "Certified-LP");
  CHECK(rows[2][7].find("unbounded") != std::string::npos);

  const auto md = render_table(table, Format::Markdown);
  CHECK(md.find("| a | 0.300 | 0.333 | Certified-LP |") != std::string::npos);
}

TEST_CASE("csv reader") {
  const auto rows = parse_csv("a,\"b,c\",\"d\"\"e\"\r\n,x\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(rows[1] == std::vector<std::string>{"", "x"});
  CHECK(parse_csv("last,line") == std::vector<std::vector<std::string>>{{"last", "line"}});
  CHECK_THROWS_AS(parse_csv("\"open"), ParseError);
}

TEST_CASE("consistency check of the bundled trial") {
  const auto trial = load_trial(kData + "/empa.json");
  const auto report = check_consistency(trial, {"empagliflozin", "placebo"}, {}, {});
  REQUIRE(report.arms.size() == 2);
  // Hand arithmetic: s0 (1 - p) + s1 p per covariate.
  const double m0 = 0.097 * (1 - 0.446) + 0.114 * 0.446;
  const double m1 = 0.110 * (1 - 0.288) + 0.091 * 0.288;
  const double m2 = 0.100 * (1 - 0.315) + 0.114 * 0.315;
  const double spread = std::max({m0, m1, m2}) - std::min({m0, m1, m2});
  CHECK(report.arms[0].implied.spread == doctest::Approx(spread).epsilon(1e-12));
  CHECK(report.arms[0].implied.spread == doctest::Approx(2e-4).epsilon(0.2));
  CHECK(report.arms[0].implied.spread <= 1e-3);
  CHECK(report.consistent());
  CHECK(report.marginal_discrepancy[1] == doctest::Approx(0.008));
  CHECK(report.route == Route::ExactLP);
  const auto text = render_check(report, Format::Markdown);
  CHECK(text.find("result: consistent") != std::string::npos);

  const auto strict = check_consistency(trial, {"placebo"}, {}, {1e-4, 1e-2});
  CHECK(!strict.consistent());
  CHECK(!strict.route);
  CHECK(render_check(strict, Format::Csv).find("overall,,,,inconsistent") != std::string::npos);
}
