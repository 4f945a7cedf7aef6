#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "pidb/errors.hpp"
#include "pidb/model.hpp"

using namespace pidb;
using pidb::testing::empa_trial;

namespace {

// K=2 truth with zero mass on cell (1,1); summaries are exact.
struct K2Truth {
  std::vector<double> means{0.2, 0.6, 0.3, 0.9};
  std::vector<double> probs{0.4, 0.35, 0.25, 0.0};
};

LongPoint point_for(const ConstraintSystem& sys, const std::vector<double>& means,
                    const std::vector<double>& probs) {
  auto p = sys.make_point();
  p.means = means;
  p.probs = probs;
  return p;
}

}  // namespace

TEST_CASE("enumerate_cells orders by rank with bit k weighted 2^k") {
  const auto k1 = enumerate_cells(1);
  REQUIRE(k1.size() == 2);
  CHECK(k1[0].bits() == std::vector<int>{0});
  CHECK(k1[1].bits() == std::vector<int>{1});

  const auto k3 = enumerate_cells(3);
  CHECK(k3.size() == 8);
  const std::vector<int> yfl{0, 1, 0};
  CHECK(CellIndex::from_bits(yfl).rank() == 2);

  const auto k12 = enumerate_cells(12);
  CHECK(k12.size() == 4096);
  std::set<std::uint32_t> ranks;
  for (const auto& c : k12) ranks.insert(c.rank());
  CHECK(ranks.size() == 4096);
  CHECK(std::ranges::is_sorted(k12));

  CHECK_THROWS_AS(enumerate_cells(0), InvalidDimension);
  CHECK_THROWS_AS(enumerate_cells(13), InvalidDimension);
}

TEST_CASE("cell rank and bits round-trip") {
  for (int k = 1; k <= 6; ++k) {
    for (const auto& c : enumerate_cells(k)) {
      const auto bits = c.bits();
      CHECK(CellIndex::from_bits(bits) == c);
    }
  }
}

TEST_CASE("cell labels follow covariate order") {
  const auto trial = empa_trial();
  const auto cells = enumerate_cells(3);
  const std::vector<std::string> expected{"YML", "OML", "YFL", "OFL", "YMH", "OMH", "YFH", "OFH"};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(trial.cell_label(cells[i]) == expected[i]);
    CHECK(trial.parse_cell(expected[i]) == cells[i]);
  }
  CHECK(trial.parse_cell("010")->rank() == 2);
  CHECK_FALSE(trial.parse_cell("YXL").has_value());
  CHECK_FALSE(trial.parse_cell("YM").has_value());
}

TEST_CASE("implied overall means of the reported arms") {
  const auto m = implied_overall_means(pidb::testing::empagliflozin_arm());
  REQUIRE(m.per_covariate.size() == 3);
  CHECK(m.per_covariate[0] == doctest::Approx(0.097 * 0.554 + 0.114 * 0.446).epsilon(1e-12));
  CHECK(m.per_covariate[0] == doctest::Approx(0.1046).epsilon(1e-3));
  CHECK(m.per_covariate[1] == doctest::Approx(0.1045).epsilon(1e-3));
  CHECK(m.per_covariate[2] == doctest::Approx(0.1044).epsilon(1e-3));
  CHECK(m.spread == doctest::Approx(0.104582 - 0.10441).epsilon(1e-9));
  CHECK(m.spread < 2e-4 + 1e-5);

  ArmSummary flat{"f", 10, {0.3, 0.6}, {0.25, 0.25}, {0.25, 0.25}, OutcomeKind::Binary};
  const auto f = implied_overall_means(flat);
  CHECK(f.per_covariate[0] == doctest::Approx(0.25));
  CHECK(f.spread == doctest::Approx(0.0));

  ArmSummary bad{"bad", 10, {0.5, 0.5}, {0.2, 0.5}, {0.2, 0.5}, OutcomeKind::Binary};
  CHECK(implied_overall_means(bad).spread == doctest::Approx(0.3));
  TrialSummary t(pidb::testing::generic_labels(2), {bad});
  CHECK_THROWS_AS(build_system(t, {"bad"}), InfeasibleInput);
}

TEST_CASE("implied-mean spread is invariant to covariate order") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    ArmSummary a{"a", 10, {}, {}, {}, OutcomeKind::Binary};
    for (int k = 0; k < 5; ++k) {
      a.marginal.push_back(u(rng));
      a.short_mean_0.push_back(u(rng));
      a.short_mean_1.push_back(u(rng));
    }
    std::vector<int> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    ArmSummary b{"b", 10, {}, {}, {}, OutcomeKind::Binary};
    for (int k : perm) {
      b.marginal.push_back(a.marginal[static_cast<std::size_t>(k)]);
      b.short_mean_0.push_back(a.short_mean_0[static_cast<std::size_t>(k)]);
      b.short_mean_1.push_back(a.short_mean_1[static_cast<std::size_t>(k)]);
    }
    CHECK(implied_overall_means(a).spread == doctest::Approx(implied_overall_means(b).spread).epsilon(1e-14));
  }
}

TEST_CASE("validation rejects out-of-range summaries") {
  auto arm = pidb::testing::empagliflozin_arm();
  arm.marginal[1] = 1.2;
  try {
    TrialSummary t(pidb::testing::age_sex_hba1c(), {arm});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("marginals_p1[1]") != std::string::npos);
  }
  arm = pidb::testing::empagliflozin_arm();
  arm.short_mean_1.pop_back();
  CHECK_THROWS_AS(TrialSummary(pidb::testing::age_sex_hba1c(), {arm}), ValidationError);
  CHECK_THROWS_AS(TrialSummary({}, {pidb::testing::empagliflozin_arm()}), InvalidDimension);
}

TEST_CASE("constraint counts: 3K+1 equalities and 2^(K+1) unknowns for one arm") {
  for (int k = 1; k <= 8; ++k) {
    ArmSummary a{"t", 100, std::vector<double>(static_cast<std::size_t>(k), 0.5),
                 std::vector<double>(static_cast<std::size_t>(k), 0.3),
                 std::vector<double>(static_cast<std::size_t>(k), 0.3), OutcomeKind::Binary};
    TrialSummary t(pidb::testing::generic_labels(k), {a});
    const auto sys = build_system(t, {"t"});
    CHECK(static_cast<int>(sys.equalities().size()) == 3 * k + 1);
    CHECK(sys.unknown_count() == (1 << (k + 1)));
    // Enumerate equality families explicitly.
    int shorts = 0, margs = 0, sums = 0;
    for (const auto& eq : sys.equalities()) {
      shorts += eq.family == EqualityFamily::ShortMean0 || eq.family == EqualityFamily::ShortMean1;
      margs += eq.family == EqualityFamily::Marginal;
      sums += eq.family == EqualityFamily::SumToOne;
    }
    CHECK(shorts == 2 * k);
    CHECK(margs == k);
    CHECK(sums == 1);
  }
}

TEST_CASE("two-arm system shares one cell distribution") {
  const auto trial = empa_trial();
  const auto one = build_system(trial, {"empagliflozin"});
  CHECK(one.equalities().size() == 10);
  CHECK(one.unknown_count() == 16);
  const auto two = build_system(trial, {"empagliflozin", "placebo"});
  CHECK(two.equalities().size() == 16);
  CHECK(two.unknown_count() == 24);
  // Marginal rows accept the intersection of the per-arm bands.
  for (const auto& eq : two.equalities()) {
    if (eq.family != EqualityFamily::Marginal) continue;
    const double pe = trial.arm("empagliflozin").marginal[static_cast<std::size_t>(eq.covariate)];
    const double pp = trial.arm("placebo").marginal[static_cast<std::size_t>(eq.covariate)];
    CHECK(eq.target - eq.slack == doctest::Approx(std::max(pe, pp) - 1e-2));
    CHECK(eq.target + eq.slack == doctest::Approx(std::min(pe, pp) + 1e-2));
  }
  CHECK_THROWS_AS(build_system(trial, {"metformin"}), UnknownArm);
  CHECK_THROWS_AS(build_system(trial, {}), UnknownArm);
}

TEST_CASE("cross-cell difference assumptions are not LP-eligible") {
  const auto trial = empa_trial();
  std::vector<Assumption> as;
  for (const auto& c : enumerate_cells(3)) {
    for (int k = 0; k < 3; ++k) {
      Assumption a;
      a.form = AssumptionForm::Diff;
      a.t = "empagliflozin";
      a.t_prime = "placebo";
      a.cell = c;
      a.cell_prime = c.flipped(k);
      a.lo = -0.05;
      a.hi = 0.05;
      as.push_back(a);
    }
  }
  const auto sys = build_system(trial, {"empagliflozin", "placebo"}, as);
  CHECK_FALSE(sys.lp_eligible());
  CHECK(classify_route(sys) == Route::HeuristicNLP);
}

TEST_CASE("route classification") {
  const auto trial = empa_trial();
  CHECK(classify_route(build_system(trial, {"empagliflozin"})) == Route::ExactLP);

  Assumption direct{AssumptionForm::Direct, "empagliflozin", {}, CellIndex(3, 4), {}, 0.0, 0.5};
  CHECK(classify_route(build_system(trial, {"empagliflozin"}, {direct})) == Route::ExactLP);

  Assumption ratio{AssumptionForm::Ratio, "empagliflozin", {}, CellIndex(3, 4), CellIndex(3, 5), 0.5, 2.0};
  CHECK(classify_route(build_system(trial, {"empagliflozin"}, {ratio})) == Route::HeuristicNLP);

  Assumption ate{AssumptionForm::Diff, "empagliflozin", "placebo", CellIndex(3, 1), {}, -0.1, 0.1};
  CHECK(classify_route(build_system(trial, {"empagliflozin", "placebo"}, {ate})) == Route::ExactLP);

  auto real_arm = pidb::testing::empagliflozin_arm();
  real_arm.outcome_kind = OutcomeKind::BoundedReal;
  TrialSummary real(pidb::testing::age_sex_hba1c(), {real_arm});
  CHECK(classify_route(build_system(real, {"empagliflozin"})) == Route::HeuristicNLP);
}

TEST_CASE("assumption validation") {
  const auto trial = empa_trial();
  Assumption self{AssumptionForm::Diff, "empagliflozin", {}, CellIndex(3, 1), {}, -0.1, 0.1};
  CHECK_THROWS_AS(build_system(trial, {"empagliflozin"}, {self}), InvalidAssumption);
  Assumption inverted{AssumptionForm::Direct, "empagliflozin", {}, CellIndex(3, 1), {}, 0.5, 0.1};
  CHECK_THROWS_AS(build_system(trial, {"empagliflozin"}, {inverted}), InvalidAssumption);
  Assumption neg_ratio{AssumptionForm::Ratio, "empagliflozin", "placebo", CellIndex(3, 1), {}, -1.0, 2.0};
  CHECK_THROWS_AS(build_system(trial, {"empagliflozin", "placebo"}, {neg_ratio}), InvalidAssumption);
  Assumption out_of_scope{AssumptionForm::Direct, "placebo", {}, CellIndex(3, 1), {}, 0.0, 0.5};
  CHECK_THROWS_AS(build_system(trial, {"empagliflozin"}, {out_of_scope}), InvalidAssumption);
  Assumption wrong_dim{AssumptionForm::Direct, "empagliflozin", {}, CellIndex(2, 1), {}, 0.0, 0.5};
  CHECK_THROWS_AS(build_system(trial, {"empagliflozin"}, {wrong_dim}), InvalidAssumption);
}

TEST_CASE("residuals vanish at a truth-constructed point") {
  const K2Truth truth;
  auto arm = pidb::testing::summarize("t", 2, truth.means, truth.probs);
  TrialSummary t(pidb::testing::generic_labels(2), {arm});
  const auto sys = build_system(t, {"t"});
  const auto r = residuals(sys, point_for(sys, truth.means, truth.probs));
  for (double v : r.equality) CHECK(std::abs(v) <= 1e-12);
  for (double s : r.inequality) CHECK(s >= 0.0);
  CHECK(max_violation(sys, point_for(sys, truth.means, truth.probs)) == 0.0);

  // Independence: probs = product of marginals, means additive.
  std::vector<double> probs, means;
  const double p1 = 0.3, p2 = 0.6;
  for (std::uint32_t c = 0; c < 4; ++c) {
    const int b0 = c & 1, b1 = (c >> 1) & 1;
    probs.push_back((b0 ? p1 : 1 - p1) * (b1 ? p2 : 1 - p2));
    means.push_back(0.1 + 0.2 * b0 + 0.3 * b1);
  }
  auto arm2 = pidb::testing::summarize("t", 2, means, probs);
  TrialSummary t2(pidb::testing::generic_labels(2), {arm2});
  const auto sys2 = build_system(t2, {"t"});
  for (double v : residuals(sys2, point_for(sys2, means, probs)).equality) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("K=1 short means are the long means") {
  ArmSummary a{"t", 10, {0.3}, {0.2}, {0.7}, OutcomeKind::Binary};
  TrialSummary t(pidb::testing::generic_labels(1), {a});
  const auto sys = build_system(t, {"t"});
  const auto r = residuals(sys, point_for(sys, {0.2, 0.7}, {0.7, 0.3}));
  for (double v : r.equality) CHECK(v == 0.0);
}

TEST_CASE("midpoint of two feasible points violates the bilinear rows") {
  // Both points reproduce the same summaries exactly.
  const std::vector<double> p_a{0.05, 0.45, 0.45, 0.05}, m_a{1, 0, 0, 1};
  const std::vector<double> p_b{0.45, 0.05, 0.05, 0.45}, m_b{0, 1, 1, 0};
  auto arm = pidb::testing::summarize("t", 2, m_a, p_a);
  TrialSummary t(pidb::testing::generic_labels(2), {arm});
  const auto sys = build_system(t, {"t"});
  CHECK(max_violation(sys, point_for(sys, m_a, p_a)) <= 0.0);
  CHECK(max_violation(sys, point_for(sys, m_b, p_b)) <= 0.0);
  std::vector<double> pm(4), mm(4);
  for (int i = 0; i < 4; ++i) {
    pm[static_cast<std::size_t>(i)] = 0.5 * (p_a[static_cast<std::size_t>(i)] + p_b[static_cast<std::size_t>(i)]);
    mm[static_cast<std::size_t>(i)] = 0.5 * (m_a[static_cast<std::size_t>(i)] + m_b[static_cast<std::size_t>(i)]);
  }
  CHECK(max_violation(sys, point_for(sys, mm, pm)) > 10 * sys.tolerances().eps_eq);
}

TEST_CASE("max_violation arithmetic") {
  const auto sys = build_system(empa_trial(), {"empagliflozin"});
  const std::vector<double> means(8, 0.5), probs(8, 0.125);
  // Largest residual is the x_2 = 1 short-mean row: 0.091 * 0.288 - 0.25.
  CHECK(max_violation(sys, point_for(sys, means, probs)) ==
        doctest::Approx(0.25 - 0.091 * 0.288 - 1e-3).epsilon(1e-12));

  const K2Truth truth;
  auto arm = pidb::testing::summarize("t", 2, truth.means, truth.probs);
  TrialSummary t(pidb::testing::generic_labels(2), {arm});
  const auto sys2 = build_system(t, {"t"});
  auto m = truth.means;
  m[3] = 1.1;  // cell (1,1) has zero mass
  CHECK(max_violation(sys2, point_for(sys2, m, truth.probs)) == doctest::Approx(0.1).epsilon(1e-12));

  auto bad = sys2.make_point();
  bad.probs.pop_back();
  CHECK_THROWS_AS(max_violation(sys2, bad), ShapeError);
}

TEST_CASE("residuals are linear in each block separately") {
  const auto trial = empa_trial();
  const auto sys = build_system(trial, {"empagliflozin", "placebo"});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto rand_vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
  };
  for (int rep = 0; rep < 20; ++rep) {
    const double lam = u(rng);
    const auto probs = rand_vec(8);
    const auto m1 = rand_vec(16), m2 = rand_vec(16);
    std::vector<double> mix(16);
    for (std::size_t i = 0; i < 16; ++i) mix[i] = lam * m1[i] + (1 - lam) * m2[i];
    const auto r1 = residuals(sys, point_for(sys, m1, probs));
    const auto r2 = residuals(sys, point_for(sys, m2, probs));
    const auto rm = residuals(sys, point_for(sys, mix, probs));
    for (std::size_t i = 0; i < rm.equality.size(); ++i) {
      CHECK(rm.equality[i] == doctest::Approx(lam * r1.equality[i] + (1 - lam) * r2.equality[i]).epsilon(1e-12));
    }
    const auto means = rand_vec(16);
    const auto q1 = rand_vec(8), q2 = rand_vec(8);
    std::vector<double> qmix(8);
    for (std::size_t i = 0; i < 8; ++i) qmix[i] = lam * q1[i] + (1 - lam) * q2[i];
    const auto s1 = residuals(sys, point_for(sys, means, q1));
    const auto s2 = residuals(sys, point_for(sys, means, q2));
    const auto sm = residuals(sys, point_for(sys, means, qmix));
    for (std::size_t i = 0; i < sm.equality.size(); ++i) {
      CHECK(sm.equality[i] == doctest::Approx(lam * s1.equality[i] + (1 - lam) * s2.equality[i]).epsilon(1e-12));
    }
  }
}
