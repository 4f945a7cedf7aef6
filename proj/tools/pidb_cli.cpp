#include <iostream>
#include <map>
#include <type_traits>

#include <CLI11.hpp>

#include "pidb/cli.hpp"

namespace {

template <typename E>
void pick(E& out, const std::string& value,
          const std::map<std::string, std::type_identity_t<E>>& choices) {
  out = choices.at(value);
}

void add_common(CLI::App& cmd, pidb::RunRequest& req, bool with_solver) {
  cmd.add_option("--input,-i", req.input, "Trial document (JSON)")->required()->check(CLI::ExistingFile);
  cmd.add_option("--arm", req.arms, "Treatment(s) to report; repeatable");
  cmd.add_option("--assumptions", req.assumptions, "Assumption document (JSON)")
      ->check(CLI::ExistingFile);
  cmd.add_option("--bv-adjacent", req.bv_adjacent,
                 "Bound |E[t|x] - E[t'|x']| <= b over adjacent cells")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option_function<std::string>(
         "--bv-interpretation",
         [&req](const std::string& v) {
           pick(req.bv_interpretation, v, {{"literal", pidb::VariationReading::Literal},
                                            {"within-arm", pidb::VariationReading::WithinArm}});
         },
         "Pairing of arms for --bv-adjacent")
      ->check(CLI::IsMember({"literal", "within-arm"}));
  cmd.add_option("--eps-eq", req.tolerances.eps_eq, "Slack on short-mean rows")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--eps-marg", req.tolerances.eps_marg, "Slack on cross-arm marginal rows")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option_function<std::string>(
         "--format",
         [&req](const std::string& v) {
           pick(req.format, v, {{"markdown", pidb::Format::Markdown}, {"csv", pidb::Format::Csv}});
         },
         "Output format")
      ->check(CLI::IsMember({"markdown", "csv"}));
  cmd.add_flag("--serial", "Run every kernel on one thread")->each([&req](const std::string&) {
    req.execution = pidb::Execution::Serial;
  });
  if (!with_solver) return;
  cmd.add_option_function<std::string>(
         "--method",
         [&req](const std::string& v) {
           pick(req.method, v, {{"auto", pidb::Method::Auto},
                                 {"lp", pidb::Method::LP},
                                 {"nlp", pidb::Method::NLP}});
         },
         "Solver route")
      ->check(CLI::IsMember({"auto", "lp", "nlp"}));
  cmd.add_option("--seed", req.seed, "Master seed for all randomness");
  cmd.add_option("--n-starts", req.n_starts, "Random multistart points")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounds on subgroup means from reported covariate-wise summaries"};
  app.require_subcommand(1);
  pidb::RunRequest req;

  auto* bounds = app.add_subcommand("bounds", "Per-cell bounds on the long mean of each arm");
  add_common(*bounds, req, true);

  auto* check = app.add_subcommand("check", "Consistency of the summaries and route classification");
  add_common(*check, req, false);

  auto* contrast = app.add_subcommand("contrast", "Per-cell difference or ratio of two arms");
  add_common(*contrast, req, true);
  contrast
      ->add_option_function<std::string>(
          "--kind",
          [&req](const std::string& v) {
            pick(req.contrast, v, {{"difference", pidb::ContrastKind::Difference},
                                    {"ratio", pidb::ContrastKind::Ratio}});
          },
          "Contrast")
      ->check(CLI::IsMember({"difference", "ratio"}));

  auto* simulate = app.add_subcommand("simulate", "Sampling imprecision of the bounds under a truth");
  add_common(*simulate, req, true);
  simulate->add_option("--n", req.n_total, "Subjects per pseudo-trial")->check(CLI::PositiveNumber);
  simulate->add_option("--reps", req.reps, "Replications")->check(CLI::Range(2, 1'000'000));
  simulate->add_flag("--exact", req.exact, "Use the population summaries in every replication");
  simulate->add_flag("--round", req.round_summaries, "Round summaries to three decimals");
  simulate->add_flag("--joint", req.joint, "Bound all arms in one system");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : 2;
  }
  if (*bounds) req.command = pidb::Subcommand::Bounds;
  if (*check) req.command = pidb::Subcommand::Check;
  if (*contrast) req.command = pidb::Subcommand::Contrast;
  if (*simulate) req.command = pidb::Subcommand::Simulate;

  const auto result = pidb::run(req);
  std::cout << result.output;
  std::cerr << result.diagnostics;
  return result.exit_code;
}
