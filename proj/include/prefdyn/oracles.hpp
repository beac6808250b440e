#ifndef PREFDYN_ORACLES_HPP
#define PREFDYN_ORACLES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "prefdyn/dynamics.hpp"
#include "prefdyn/task.hpp"

namespace prefdyn {

// Outcome of one brute-force / Monte-Carlo theorem check. worst_margin is
// the smallest slack seen (negative = violated by that much); skipped counts
// trials excluded by a precondition filter.
struct OracleReport {
  std::string name;
  int trials = 0;
  int violations = 0;
  int skipped = 0;
  double worst_margin = 0.0;
  bool passed = false;
  bool inconclusive = false;
  std::vector<std::string> details;

  std::string to_json() const;
};

// Distribution-shift extrema: w extrema lie outside [mu_p, mu_q]; a w*p
// extremum sits strictly between mu_p and the right-side w extremum; the
// mirrored claim on the left side. Both readings of the third bullet are
// reported; only the symmetric reading is asserted.
OracleReport check_distshift_extrema(const GaussianScenario& scenario);

// Var[f g] >= Var[f] E[g^2] over random finite distributions and random
// bounded increasing positive step functions.
OracleReport mc_check_fym(int trials, uint64_t seed);
// Cov[f g, g] >= E[f] Var[g], same generators.
OracleReport mc_check_fym2(int trials, uint64_t seed);

// Var[w p] - Var[w] E[p^2] >= 2 (Cov[a,b] E[p^2] - Cov[a p, b p]) on tasks
// whose utility ranks align with probability ranks (the no-shift premise);
// generated tasks failing the premise are skipped and counted.
OracleReport check_variance_bound(int trials, uint64_t seed);

// Premise filter for the variance bound: beta nondecreasing along the
// probability order.
bool variance_premise_holds(const std::vector<double>& p,
                            const std::vector<double>& beta);

enum class DataqualitySubset { Whole, TopProbabilityHalf };

// Perturbed-label inequality, asserted in expectation over antithetic
// epsilon draws: (Var[w]-Var[w*]) E_A[p^2] <= Var[w p] - Var[w* p] with the
// variances over the chosen subset. Average slack must be
// >= -1e-3 * epsilon_scale^2.
OracleReport check_dataquality(const PreferenceTask& task, double epsilon_scale,
                               int trials, uint64_t seed,
                               DataqualitySubset subset = DataqualitySubset::Whole);

// A response with exact probability zero (and no training pair) keeps
// probability exactly zero across 100 closed-form epochs, in both update
// branches. Exact equality, not a tolerance.
OracleReport check_ood_zero(int epochs, uint64_t seed);

// sum_j w_j p_j^2 < sum_j w_j p_j E_k[p_k] strictly on tasks whose utility
// ranks are an independent shuffle of probability ranks; degenerate w == 0
// trials are skipped. aligned_control runs the rank-aligned construction
// instead and only reports (the premise matters).
OracleReport check_ood_update(int trials, uint64_t seed,
                              bool aligned_control = false);

// Closed-form Theorem-3 probability updates vs one literal gradient step:
// DPO branch within 1% relative at eta = 1e-4, first-order consistency when
// eta is halved, and the balanced rule within 5% in the small-p regime.
OracleReport check_probupdate(int trials, uint64_t seed);

}  // namespace prefdyn

#endif  // PREFDYN_ORACLES_HPP
