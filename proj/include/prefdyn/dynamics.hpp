#ifndef PREFDYN_DYNAMICS_HPP
#define PREFDYN_DYNAMICS_HPP

#include <utility>
#include <vector>

#include "prefdyn/losses.hpp"
#include "prefdyn/policy.hpp"
#include "prefdyn/task.hpp"

namespace prefdyn {

// Effective step size gamma = eta g^2; g is exactly 1 for the tabular
// policy. lambda_corr is the optional negative-correlation correction
// (-E[c_ij]); 0 restores the uncorrelated analysis.
struct DynamicsParams {
  double eta = 0.1;
  double g = 1.0;
  double lambda_corr = 0.0;
  double gamma() const { return eta * g * g; }
};

// Per-epoch aggregate for one prompt.
struct EpochDynamics {
  std::vector<double> w;         // sum of tau (1-kappa) over pairs touching i
  std::vector<double> alpha;     // sum_j p_i / (p_i + p_j)
  std::vector<double> beta;      // sum_j u_i / (u_i + u_j)
  std::vector<double> dp_dpo;    // predicted prob update, DPO branch
  std::vector<double> dp_balanced;
};

// Per-sample logit deltas. DPO moves only the two pair logits by
// +- gamma tau (1-kappa); the balanced rule scales each side by its own
// probability times (1 - p_self + p_other). With lambda_corr > 0 the DPO
// deltas shrink by (1 - lambda) and the balanced bracket gains the
// correlation term.
std::pair<double, double> delta_logit_dpo(int tau, double kappa,
                                          const DynamicsParams& params);
std::pair<double, double> delta_logit_balanced(int tau, double kappa,
                                               double p_first, double p_second,
                                               const DynamicsParams& params);

// alpha_i and beta_i for one prompt; r* is realized as log-utility so the
// beta sum uses the task utilities directly.
std::pair<std::vector<double>, std::vector<double>> alpha_beta(
    const PolicyTable& policy, const PreferenceTask& task, int x);

// w_i = sum over dataset pairs containing i of tau (1-kappa), kappa taken
// from the policy's own log-odds (uniform-reference DPO). On the expected
// dataset this equals beta - alpha exactly.
std::vector<double> epoch_weights(const PolicyTable& policy,
                                  const PreferenceTask& task,
                                  const std::vector<WeightedPair>& dataset,
                                  int x);
// Sampled variant; sums are rescaled by (#unordered pairs / n) so the
// result converges to the expected-dataset value.
std::vector<double> epoch_weights(const PolicyTable& policy,
                                  const PreferenceTask& task,
                                  const std::vector<PairSample>& samples,
                                  int x);

// dp_i = gamma p_i (w_i - sum_j w_j p_j)
std::vector<double> prob_update_dpo(const std::vector<double>& p,
                                    const std::vector<double>& w,
                                    const DynamicsParams& params);
// dp_i = gamma p_i (w_i p_i - sum_j w_j p_j^2), small-probability regime;
// max_p_out (optional) reports max p_i so callers can judge the regime.
std::vector<double> prob_update_balanced(const std::vector<double>& p,
                                         const std::vector<double>& w,
                                         const DynamicsParams& params,
                                         double* max_p_out = nullptr);

// One literal full-batch gradient step on the tabular logits over the
// expected dataset (uniform reference), chained through the softmax
// Jacobian; returns the realized probability change per prompt row.
// Independent brute-force oracle for the closed-form updates.
std::vector<std::vector<double>> one_step_gradient_oracle(
    const PolicyTable& policy, const PreferenceTask& task,
    const LossSpec& loss_spec, double eta);

// Full per-prompt dynamics dump (kappa from uniform-reference DPO).
EpochDynamics epoch_dynamics(const PolicyTable& policy,
                             const PreferenceTask& task, int x,
                             const DynamicsParams& params);

// CSV columns: y, p, u, alpha, beta, w, dp_dpo, dp_balanced.
std::string dynamics_csv(const PolicyTable& policy, const PreferenceTask& task,
                         int x, const DynamicsParams& params);

}  // namespace prefdyn

#endif  // PREFDYN_DYNAMICS_HPP
