#pragma once

#include <string>
#include <vector>

#include "pidb/model.hpp"

namespace pidb::testing {

inline ArmSummary empagliflozin_arm() {
  return {"empagliflozin", 4687, {0.446, 0.288, 0.315}, {0.097, 0.110, 0.100},
          {0.114, 0.091, 0.114}, OutcomeKind::Binary};
}

inline ArmSummary placebo_arm() {
  return {"placebo", 2333, {0.444, 0.280, 0.311}, {0.093, 0.126, 0.130},
          {0.155, 0.107, 0.101}, OutcomeKind::Binary};
}

inline std::vector<CovariateLabels> age_sex_hba1c() {
  return {{"Y", "O"}, {"M", "F"}, {"L", "H"}};
}

inline TrialSummary empa_trial() {
  return TrialSummary(age_sex_hba1c(), {empagliflozin_arm(), placebo_arm()});
}

inline std::vector<CovariateLabels> generic_labels(int k) {
  std::vector<CovariateLabels> out;
  for (int i = 0; i < k; ++i) {
    out.push_back({"a" + std::to_string(i), "b" + std::to_string(i)});
  }
  return out;
}

/// Exact summaries implied by a long point for one arm (no rounding).
inline ArmSummary summarize(const std::string& id, int k, const std::vector<double>& means,
                            const std::vector<double>& probs) {
  ArmSummary a;
  a.treatment_id = id;
  a.n_subjects = 1000;
  for (int j = 0; j < k; ++j) {
    double p1 = 0, w0 = 0, w1 = 0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
      if ((c >> j) & 1U) {
        p1 += probs[c];
        w1 += means[c] * probs[c];
      } else {
        w0 += means[c] * probs[c];
      }
    }
    a.marginal.push_back(p1);
    a.short_mean_0.push_back(w0 / (1.0 - p1));
    a.short_mean_1.push_back(w1 / p1);
  }
  return a;
}

}  // namespace pidb::testing
