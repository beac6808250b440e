#ifndef PREFDYN_EXPERIMENTS_HPP
#define PREFDYN_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "prefdyn/losses.hpp"
#include "prefdyn/policy.hpp"
#include "prefdyn/task.hpp"

namespace prefdyn {

// Toy-benchmark run configuration. One epoch = one plain gradient-descent
// step on the mean gradient of a pair batch. pairs_per_epoch = 0 draws one
// batch element per unmasked unordered pair ("full sweep"). full_batch
// replaces sampling by the scheme-weighted expected dataset (deterministic).
struct TrainConfig {
  LossSpec loss;
  double eta = 2.0;
  int epochs = 3000;
  int pairs_per_epoch = 1900;
  double mask_rate = 0.0;
  double alpha_utility = 0.6;
  int reference_bootstrap_steps = 300;
  uint64_t seed = 1;
  SamplingKind sampling = SamplingKind::Shiftless;
  bool full_batch = false;
};

struct RewardPair {
  double neg_sqdist = 0.0;   // mean over prompts of E_pi[-(y-x)^2]
  double expected_util = 0.0;  // mean over prompts of E_pi[u(y|x)]
};

struct ExperimentReport {
  TrainConfig config;
  std::vector<double> steps;           // epoch index
  std::vector<RewardPair> reward_trajectory;
  std::vector<double> g_w;             // dataset-mean dL/dpi(y_w|x) per epoch
  std::vector<double> g_l;             // dataset-mean dL/dpi(y_l|x) per epoch
  PolicyTable final_policy;

  std::string to_json() const;
};

// Figure-style w-distribution curves: builds the single-prompt scenario
// task, computes w (DPO curve) and w*p (balanced curve) on the
// scheme-weighted expected dataset, writes CSV columns y, p, u, w_dpo,
// w_balanced. Returns the csv text (also written to out_path when nonempty).
std::string run_gaussian_scenario(const GaussianScenario& scenario,
                                  SamplingKind sampling,
                                  const std::string& out_path);

// Fresh uniform-over-unmasked policy trained `steps` epochs with baseline
// DPO against the uniform reference; the frozen result seeds every
// algorithm of a sweep cell.
ReferencePolicy bootstrap_reference(const PreferenceTask& task, int steps,
                                    uint64_t seed, double eta,
                                    SamplingKind sampling, bool full_batch,
                                    int pairs_per_epoch);

// Train starting from (and referenced to) `reference` under config.loss.
// NaN loss aborts with std::runtime_error.
ExperimentReport train(const PreferenceTask& task, const ReferencePolicy& reference,
                       const TrainConfig& config);

RewardPair eval_reward(const PolicyTable& policy, const PreferenceTask& task);

struct SweepRow {
  std::string loss;
  double mask = 0.0;
  uint64_t seed = 0;
  RewardPair reward;
};

// Full benchmark grid. One bootstrap per (mask, seed) cell, shared by every
// loss; each loss consumes an identical sample stream.
std::vector<SweepRow> table1_sweep(const std::vector<LossSpec>& losses,
                                   const std::vector<double>& mask_rates,
                                   const std::vector<uint64_t>& seeds,
                                   const TrainConfig& base);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

struct BalanceTrajectory {
  bool degenerate = false;  // constant series (e.g. zero learning rate)
  double spearman_g_w = 0.0;
  double spearman_g_l = 0.0;
};

// Spearman rank correlation of the recorded g_w / g_l series with the epoch
// index. Throws std::invalid_argument with fewer than 3 epochs.
BalanceTrajectory gradient_balance_trajectory(const ExperimentReport& report);

double spearman(const std::vector<double>& values);

}  // namespace prefdyn

#endif  // PREFDYN_EXPERIMENTS_HPP
