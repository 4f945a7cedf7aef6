#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "pidb/errors.hpp"
#include "pidb/io.hpp"
#include "pidb/mc.hpp"

using namespace pidb;

namespace {

const std::string kData = PIDB_DATA_DIR;

GroundTruth empa_truth() { return load_truth(kData + "/truth_empa.json"); }
GroundTruth synthetic_truth() { return load_truth(kData + "/truth_synthetic.json"); }

double sample_sd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

bool touches_box(const EndpointSummary& e) {
  return std::ranges::any_of(e.values, [](double v) { return v <= 1e-9 || v >= 1.0 - 1e-9; });
}

}  // namespace

TEST_CASE("bundled truth is the interior point of the trial's feasible set") {
  const auto trial = load_trial(kData + "/empa.json");
  const auto derived = interior_truth(trial, {"empagliflozin", "placebo"});
  const auto bundled = empa_truth();
  REQUIRE(bundled.arms == derived.arms);
  for (std::size_t c = 0; c < bundled.probs.size(); ++c) {
    CHECK(bundled.probs[c] == doctest::Approx(derived.probs[c]).epsilon(1e-12));
    CHECK(bundled.probs[c] > 1e-3);
    for (std::size_t a = 0; a < bundled.arms.size(); ++a) {
      CHECK(bundled.means[a][c] == doctest::Approx(derived.means[a][c]).epsilon(1e-12));
    }
  }
  CHECK(bundled.assignment[0] == doctest::Approx(4687.0 / 7020.0));

  // The truth is a feasible long point of the two-arm system it came from.
  const auto sys = build_system(trial, bundled.arms);
  auto point = sys.make_point();
  point.probs = bundled.probs;
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::uint32_t c = 0; c < 8; ++c) point.mean(a, c) = bundled.means[a][c];
  }
  CHECK(max_violation(sys, point) <= 1e-9);
}

TEST_CASE("population summaries of the bundled truth reproduce the reported ones") {
  const auto population = implied_summary(empa_truth());
  const auto trial = load_trial(kData + "/empa.json");
  for (const auto& id : {"empagliflozin", "placebo"}) {
    const auto& p = population.arm(id);
    const auto& r = trial.arm(id);
    for (int k = 0; k < 3; ++k) {
      const auto j = static_cast<std::size_t>(k);
      CHECK(std::abs(p.marginal[j] - r.marginal[j]) <= 1e-2 + 1e-9);
      CHECK(std::abs(p.short_mean_0[j] * (1 - p.marginal[j]) - r.short_mean_0[j] * (1 - r.marginal[j])) <=
            1e-3 + 1e-9);
      CHECK(std::abs(p.short_mean_1[j] * p.marginal[j] - r.short_mean_1[j] * r.marginal[j]) <=
            1e-3 + 1e-9);
    }
  }
}

TEST_CASE("a million subjects land within 0.003 of every population summary") {
  const auto truth = empa_truth();
  const auto population = implied_summary(truth);
  const auto drawn = draw_trial(truth, 1'000'000, 42);
  for (const auto& arm : population.arms()) {
    const auto& d = drawn.arm(arm.treatment_id);
    for (int k = 0; k < 3; ++k) {
      const auto j = static_cast<std::size_t>(k);
      CHECK(std::abs(d.marginal[j] - arm.marginal[j]) <= 0.003);
      CHECK(std::abs(d.short_mean_0[j] - arm.short_mean_0[j]) <= 0.003);
      CHECK(std::abs(d.short_mean_1[j] - arm.short_mean_1[j]) <= 0.003);
    }
  }
  CHECK(std::abs(static_cast<double>(drawn.arm("empagliflozin").n_subjects) / 1e6 -
                 truth.assignment[0]) <= 0.003);
}

TEST_CASE("zero means give zero short means") {
  auto truth = synthetic_truth();
  for (auto& m : truth.means) std::ranges::fill(m, 0.0);
  const auto drawn = draw_trial(truth, 5000, 3);
  for (const auto& arm : drawn.arms()) {
    for (double s : arm.short_mean_0) CHECK(s == 0.0);
    for (double s : arm.short_mean_1) CHECK(s == 0.0);
  }
}

TEST_CASE("draws are deterministic in the seed") {
  const auto truth = empa_truth();
  const auto a = draw_trial(truth, 7020, 11);
  const auto b = draw_trial(truth, 7020, 11);
  const auto c = draw_trial(truth, 7020, 12);
  for (std::size_t i = 0; i < a.arms().size(); ++i) {
    CHECK(a.arms()[i].n_subjects == b.arms()[i].n_subjects);
    CHECK(a.arms()[i].marginal == b.arms()[i].marginal);
    CHECK(a.arms()[i].short_mean_0 == b.arms()[i].short_mean_0);
    CHECK(a.arms()[i].short_mean_1 == b.arms()[i].short_mean_1);
  }
  CHECK(a.arms()[0].short_mean_1 != c.arms()[0].short_mean_1);
}

TEST_CASE("unrounded counts are internally consistent") {
  const auto truth = empa_truth();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto drawn = draw_trial(truth, 7020, seed);
    for (const auto& arm : drawn.arms()) CHECK(implied_overall_means(arm).spread <= 1e-12);
  }
  const auto rounded = draw_trial(truth, 7020, 0, true);
  for (const auto& arm : rounded.arms()) {
    for (double p : arm.marginal) CHECK(p * 1000.0 == doctest::Approx(std::round(p * 1000.0)));
  }
}

TEST_CASE("empty strata are reported as degenerate samples") {
  CHECK_THROWS_AS(draw_trial(empa_truth(), 1, 0), DegenerateSample);
  auto truth = synthetic_truth();
  truth.assignment = {1.0, 0.0};
  StudyConfig config;
  config.reps = 4;
  config.n_total = 500;
  CHECK_THROWS_AS(imprecision_study(truth, config), StudyFailure);
  config.arms = {"treated"};
  CHECK_THROWS_AS(imprecision_study(truth, config), StudyFailure);
}

TEST_CASE("study configuration is validated") {
  StudyConfig config;
  config.reps = 1;
  CHECK_THROWS_AS(imprecision_study(empa_truth(), config), ValidationError);
  config.reps = 2;
  config.arms = {"nobody"};
  CHECK_THROWS_AS(imprecision_study(empa_truth(), config), UnknownArm);
  auto bad = empa_truth();
  bad.probs[0] += 0.01;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("nearest-rank percentiles") {
  std::vector<double> v;
  for (int i = 20; i >= 1; --i) v.push_back(i);
  CHECK(nearest_rank(v, 5) == 1.0);    // ceil(0.05 * 20) = 1st value
  CHECK(nearest_rank(v, 95) == 19.0);  // ceil(0.95 * 20) = 19th value
  CHECK(nearest_rank(v, 100) == 20.0);
  CHECK(nearest_rank({7.0}, 5) == 7.0);
}

TEST_CASE("exact mode equals the bounds of the population summaries") {
  const auto truth = empa_truth();
  StudyConfig config;
  config.exact = true;
  config.reps = 3;
  const auto report = imprecision_study(truth, config);
  CHECK(report.ok == 3);
  const auto population = implied_summary(truth, config.n_total);
  std::size_t e = 0;
  for (const auto& arm : truth.arms) {
    const auto table = cell_mean_table(build_system(population, {arm}), arm, {});
    for (const auto& row : table.rows) {
      for (const double v : {row.lower.value, row.upper.value}) {
        const auto& ep = report.endpoints[e++];
        CHECK(ep.arm == arm);
        CHECK(ep.label == row.label);
        CHECK(ep.values.size() == 3);
        CHECK(std::abs(ep.mean - v) <= 1e-9);
        CHECK(ep.sd <= 1e-12);
      }
    }
  }
  CHECK(e == report.endpoints.size());
}

TEST_CASE("reports reproduce bit for bit") {
  const auto truth = empa_truth();
  StudyConfig config;
  config.reps = 2;
  config.seed = 99;
  const auto a = imprecision_study(truth, config);
  const auto b = imprecision_study(truth, config);
  config.execution = Execution::Serial;
  const auto s = imprecision_study(truth, config);
  REQUIRE(a.endpoints.size() == b.endpoints.size());
  for (std::size_t i = 0; i < a.endpoints.size(); ++i) {
    CHECK(a.endpoints[i].values == b.endpoints[i].values);
    CHECK(a.endpoints[i].values == s.endpoints[i].values);
    CHECK(a.endpoints[i].sd == b.endpoints[i].sd);
  }
  CHECK(a.replications == b.replications);
}

TEST_CASE("summary statistics match an independent computation") {
  StudyConfig config;
  config.reps = 40;
  config.n_total = 2000;
  const auto report = imprecision_study(synthetic_truth(), config);
  CHECK(report.reps == 40);
  CHECK(report.ok + report.degenerate + report.infeasible + report.failed == 40);
  for (const auto& e : report.endpoints) {
    REQUIRE(static_cast<int>(e.values.size()) == report.ok);
    const double mean = std::accumulate(e.values.begin(), e.values.end(), 0.0) /
                        static_cast<double>(e.values.size());
    CHECK(e.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(e.sd == doctest::Approx(sample_sd(e.values)).epsilon(1e-9));
    auto sorted = e.values;
    std::ranges::sort(sorted);
    CHECK(e.p05 == sorted[static_cast<std::size_t>(std::ceil(0.05 * sorted.size())) - 1]);
    CHECK(e.p95 == sorted[static_cast<std::size_t>(std::ceil(0.95 * sorted.size())) - 1]);
  }
}

TEST_CASE("endpoint spread shrinks as the trial grows") {
  const auto truth = empa_truth();
  std::vector<SimulationReport> reports;
  for (long n : {1000L, 10000L, 100000L}) {
    StudyConfig config;
    config.n_total = n;
    config.reps = 200;
    config.seed = 5;
    reports.push_back(imprecision_study(truth, config));
    CHECK(reports.back().ok >= 190);
  }
  int varying = 0;
  for (std::size_t e = 0; e < reports[0].endpoints.size(); ++e) {
    const double sd0 = reports[0].endpoints[e].sd;
    const double sd1 = reports[1].endpoints[e].sd;
    const double sd2 = reports[2].endpoints[e].sd;
    INFO(reports[0].endpoints[e].arm, " ", reports[0].endpoints[e].label);
    CHECK(sd1 <= sd0 + 1e-12);
    CHECK(sd2 <= sd1 + 1e-12);
    if (sd0 > 1e-9) ++varying;
  }
  CHECK(varying >= 1);
}

TEST_CASE("interior endpoints scale like one over root N") {
  const auto truth = synthetic_truth();
  StudyConfig small;
  small.n_total = 7020;
  small.seed = 1;
  StudyConfig large = small;
  large.n_total = 4 * 7020;
  const auto a = imprecision_study(truth, small);
  const auto b = imprecision_study(truth, large);
  int checked = 0;
  for (std::size_t e = 0; e < a.endpoints.size(); ++e) {
    const auto& x = a.endpoints[e];
    const auto& y = b.endpoints[e];
    if (x.status != BoundClass::CertifiedLP || touches_box(x) || touches_box(y)) continue;
    INFO(x.arm, " ", x.label, x.upper ? " upper" : " lower");
    const double ratio = x.sd / y.sd;
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.4);
    ++checked;
  }
  CHECK(checked >= 4);
}
