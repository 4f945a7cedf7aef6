#include "pidb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "pidb/errors.hpp"

namespace pidb {

namespace {

constexpr std::uint64_t kSampleStream = 11;
constexpr std::uint64_t kRefineStream = 12;
// Sampled residuals stay this fraction inside their slack bands so the
// exact re-check is not lost to rounding.
constexpr double kInside = 1.0 - 1e-9;

struct Band {
  double target;
  double slack;
  double at(double theta) const { return target + slack * kInside * (2.0 * theta - 1.0); }
  bool holds(double v) const { return std::abs(v - target) <= slack * kInside; }
};

// Maps theta in [0, 1]^d to a long point satisfying every identification
// row; the caller re-checks boxes and assumptions with max_violation.
class Decoder {
 public:
  explicit Decoder(const ConstraintSystem& system) : system_(system) {
    k_ = system.covariates();
    arms_ = system.arm_count();
    if (k_ > 2 || arms_ > 2) {
      throw InvalidDimension(
          fmt::format("oracle supports K <= 2 and at most two arms (got K={}, {} arms)", k_,
                      arms_));
    }
    marg_.resize(static_cast<std::size_t>(k_));
    rows_.assign(static_cast<std::size_t>(arms_ * k_ * 2), Band{0.0, 0.0});
    for (const auto& eq : system.equalities()) {
      const Band band{eq.target, eq.slack};
      if (eq.family == EqualityFamily::Marginal) {
        marg_[static_cast<std::size_t>(eq.covariate)] = band;
      } else if (eq.family != EqualityFamily::SumToOne) {
        rows_[row(eq.arm, eq.covariate, eq.value)] = band;
      }
    }
  }

  int dimension() const { return k_ + (k_ == 2 ? 1 : 0) + arms_ * (k_ == 1 ? 2 : 4); }

  bool decode(const std::vector<double>& theta, std::vector<double>& z) const {
    const int cells = 1 << k_;
    z.assign(static_cast<std::size_t>(system_.unknown_count()), 0.0);
    std::vector<double> p(static_cast<std::size_t>(cells));
    std::size_t at = 0;
    const double a = std::clamp(marg_[0].at(theta[at++]), 0.0, 1.0);
    if (k_ == 1) {
      p[1] = a;
      p[0] = 1.0 - a;
    } else {
      const double b = std::clamp(marg_[1].at(theta[at++]), 0.0, 1.0);
      const double q_lo = std::max(0.0, a + b - 1.0);
      const double q_hi = std::min(a, b);
      if (q_lo > q_hi) return false;
      const double q = q_lo + theta[at++] * (q_hi - q_lo);
      p[3] = q;
      p[1] = a - q;
      p[2] = b - q;
      p[0] = 1.0 - a - b + q;
    }
    if (!fix_sum(p)) return false;

    for (int arm = 0; arm < arms_; ++arm) {
      std::vector<double> w(static_cast<std::size_t>(cells));
      if (k_ == 1) {
        w[0] = rows_[row(arm, 0, 0)].at(theta[at++]);
        w[1] = rows_[row(arm, 0, 1)].at(theta[at++]);
      } else {
        // Row sums: A = w0 + w2, B = w1 + w3, C = w0 + w1, D = w2 + w3.
        const double big_a = rows_[row(arm, 0, 0)].at(theta[at++]);
        const double big_b = rows_[row(arm, 0, 1)].at(theta[at++]);
        const double big_d = rows_[row(arm, 1, 1)].at(theta[at++]);
        const double tau = theta[at++];
        if (!rows_[row(arm, 1, 0)].holds(big_a + big_b - big_d)) return false;
        const double t_lo = std::max({0.0, big_b - p[1], big_d - p[2], big_d - big_a});
        const double t_hi = std::min({p[3], big_b, big_d, big_d - big_a + p[0]});
        if (t_lo > t_hi) return false;
        const double t = t_lo + tau * (t_hi - t_lo);
        w[3] = t;
        w[1] = big_b - t;
        w[2] = big_d - t;
        w[0] = big_a - big_d + t;
      }
      for (int c = 0; c < cells; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        double m = 0.5;
        if (p[cs] > 0.0) {
          m = w[cs] / p[cs];
        } else if (w[cs] != 0.0) {
          return false;
        }
        if (m < 0.0 || m > 1.0) return false;
        z[static_cast<std::size_t>(system_.mean_index(arm, static_cast<std::uint32_t>(c)))] = m;
      }
    }
    for (int c = 0; c < cells; ++c) {
      z[static_cast<std::size_t>(system_.prob_index(static_cast<std::uint32_t>(c)))] =
          p[static_cast<std::size_t>(c)];
    }
    return system_.max_violation(z) <= 0.0;
  }

 private:
  std::size_t row(int arm, int k, int v) const {
    return static_cast<std::size_t>((arm * k_ + k) * 2 + v);
  }

  // Nudges p[0] until the ascending-order sum is exactly one.
  static bool fix_sum(std::vector<double>& p) {
    for (int pass = 0; pass < 4; ++pass) {
      double s = 0.0;
      for (double v : p) s += v;
      if (s == 1.0) return p[0] >= 0.0;
      p[0] -= s - 1.0;
    }
    return false;
  }

  const ConstraintSystem& system_;
  int k_ = 0;
  int arms_ = 0;
  std::vector<Band> marg_;
  std::vector<Band> rows_;
};

struct ShardResult {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::vector<double>> points;
  long accepted = 0;
};

ShardResult run_shard(const ConstraintSystem& system, const Decoder& decoder,
                      const OracleBudget& budget, long shard, bool keep_points) {
  const int means = system.arm_count() * system.cell_count();
  const auto nm = static_cast<std::size_t>(means);
  const auto d = static_cast<std::size_t>(decoder.dimension());
  ShardResult out;
  out.lo.assign(nm, std::numeric_limits<double>::infinity());
  out.hi.assign(nm, -std::numeric_limits<double>::infinity());
  // Record parameters for the minimum and maximum of each cell mean.
  std::vector<std::vector<double>> rec_lo(nm), rec_hi(nm);

  std::mt19937_64 rng(derive_seed(budget.seed, kSampleStream, static_cast<std::uint64_t>(shard)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> theta(d), z;
  for (long i = 0; i < kOracleShard; ++i) {
    for (auto& t : theta) t = unit(rng);
    if (!decoder.decode(theta, z)) continue;
    ++out.accepted;
    for (std::size_t j = 0; j < nm; ++j) {
      if (z[j] < out.lo[j]) {
        out.lo[j] = z[j];
        rec_lo[j] = theta;
      }
      if (z[j] > out.hi[j]) {
        out.hi[j] = z[j];
        rec_hi[j] = theta;
      }
    }
    if (keep_points) out.points.push_back(z);
  }
  if (out.accepted == 0) return out;

  std::mt19937_64 walk(derive_seed(budget.seed, kRefineStream, static_cast<std::uint64_t>(shard)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < nm; ++j) {
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? -1.0 : 1.0;
      std::vector<double> cur = side == 0 ? rec_lo[j] : rec_hi[j];
      double best = side == 0 ? out.lo[j] : out.hi[j];
      std::vector<double> best_z;
      double sigma = 0.1;
      for (int step = 0; step < budget.refine_steps; ++step) {
        for (std::size_t i = 0; i < d; ++i) theta[i] = std::clamp(cur[i] + sigma * gauss(walk), 0.0, 1.0);
        if (decoder.decode(theta, z) && sign * z[j] > sign * best) {
          best = z[j];
          cur = theta;
          best_z = z;
          sigma = std::min(0.5, sigma * 1.5);
        } else {
          sigma = std::max(1e-7, sigma * 0.85);
        }
      }
      if (best_z.empty()) continue;
      for (std::size_t i = 0; i < nm; ++i) {
        out.lo[i] = std::min(out.lo[i], best_z[i]);
        out.hi[i] = std::max(out.hi[i], best_z[i]);
      }
      if (keep_points) out.points.push_back(std::move(best_z));
    }
  }
  return out;
}

std::vector<ShardResult> run_all(const ConstraintSystem& system, const OracleBudget& budget,
                                 bool keep_points) {
  budget.validate();
  const Decoder decoder(system);
  const long shards = (budget.n_samples + kOracleShard - 1) / kOracleShard;
  std::vector<ShardResult> results(static_cast<std::size_t>(shards));
  const bool parallel = budget.execution == Execution::Parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long s = 0; s < shards; ++s) {
    results[static_cast<std::size_t>(s)] = run_shard(system, decoder, budget, s, keep_points);
  }
  long accepted = 0;
  for (const auto& r : results) accepted += r.accepted;
  if (accepted == 0) {
    throw EmptyOracle(fmt::format("no feasible point among {} samples", shards * kOracleShard));
  }
  return results;
}

}  // namespace

void OracleBudget::validate() const {
  if (n_samples < 1 || refine_steps < 0) {
    throw ValidationError("oracle budget must have positive n_samples and refine_steps >= 0");
  }
}

std::vector<LongPoint> sample_feasible(const ConstraintSystem& system, const OracleBudget& budget) {
  const auto shards = run_all(system, budget, true);
  std::vector<LongPoint> out;
  const auto split = static_cast<std::ptrdiff_t>(system.arm_count() * system.cell_count());
  for (const auto& shard : shards) {
    for (const auto& z : shard.points) {
      LongPoint p = system.make_point();
      std::copy(z.begin(), z.begin() + split, p.means.begin());
      std::copy(z.begin() + split, z.end(), p.probs.begin());
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<OracleInterval> oracle_bounds(const ConstraintSystem& system,
                                          const OracleBudget& budget) {
  const auto shards = run_all(system, budget, false);
  const auto nm = static_cast<std::size_t>(system.arm_count() * system.cell_count());
  std::vector<OracleInterval> out(nm, {std::numeric_limits<double>::infinity(),
                                       -std::numeric_limits<double>::infinity()});
  for (const auto& shard : shards) {
    if (shard.accepted == 0) continue;
    for (std::size_t j = 0; j < nm; ++j) {
      out[j].lo = std::min(out[j].lo, shard.lo[j]);
      out[j].hi = std::max(out[j].hi, shard.hi[j]);
    }
  }
  return out;
}

OracleInterval grid_bounds(const ConstraintSystem& system, std::string_view t,
                           const CellIndex& cell, const OracleBudget& budget) {
  if (cell.dimension() != system.covariates()) throw ShapeError("cell dimension mismatch");
  const int arm = system.arm_position(t);
  const auto all = oracle_bounds(system, budget);
  return all[static_cast<std::size_t>(system.mean_index(arm, cell.rank()))];
}

}  // namespace pidb
