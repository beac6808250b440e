#ifndef PREFDYN_LOSSES_HPP
#define PREFDYN_LOSSES_HPP

#include <string>

#include "prefdyn/policy.hpp"
#include "prefdyn/task.hpp"

namespace prefdyn {

enum class LossKind { DPO, RewardBT, NbDPO, NbDPOv2, BDPO, BalancedReference };
enum class ClipSymmetry { Asymmetric, Symmetric };

// Loss variant plus hyper-parameters. For the nb variants the clip window is
// [dlambda_min, clip_max] with dlambda_min fixed by the symmetry choice:
// asymmetric => 0, symmetric => 1/(1+clip_max) - 1.
struct LossSpec {
  LossKind kind = LossKind::DPO;
  double beta = 1.0;
  double clip_max = 0.5;
  ClipSymmetry symmetry = ClipSymmetry::Asymmetric;

  double dlambda_min() const {
    return symmetry == ClipSymmetry::Asymmetric ? 0.0
                                                : 1.0 / (1.0 + clip_max) - 1.0;
  }
};

// Per-sample evaluation: scalar value, kappa = e^{-value} (the sigmoid term),
// and gradients with respect to log pi_theta(y_w|x) and log pi_theta(y_l|x).
struct LossEval {
  double value = 0.0;
  double kappa = 0.0;
  double grad_logpi_w = 0.0;
  double grad_logpi_l = 0.0;
};

LossEval dpo_loss(double lr_w, double lr_l, double beta);
LossEval reward_bt_loss(double r_w, double r_l);

double nbdpo_lambda(double pi_w, double pi_l, const LossSpec& spec);

// Value-preserving reweighting: the detached term cancels the lambda scaling
// in the value, so value == dpo value while grad_logpi_w is multiplied by
// lambda. detached_lr_w must equal lr_w numerically at evaluation time.
LossEval nbdpo_loss(double lr_w, double lr_l, double detached_lr_w,
                    double pi_w, double pi_l, const LossSpec& spec);

// Non-detached variant -log sigma(beta lambda lr_w - beta lr_l); gradients
// flow through lambda inside its clip window.
LossEval nbdpov2_loss(double lr_w, double lr_l, double pi_w, double pi_l,
                      const LossSpec& spec);

double bdpo_lambda(double pi_w, double pi_l);

// -log sigma(beta lambda_w lr_w - beta (1-lambda_w) lr_l) with
// lambda_w = log pi_l / (log pi_w + log pi_l), differentiated through.
LossEval bdpo_loss(double lr_w, double lr_l, double pi_w, double pi_l,
                   double beta);

// Gradient rule with equal-magnitude probability-space gradients
// d L / d pi_w = -beta (1-kappa), d L / d pi_l = +beta (1-kappa); kappa is
// the DPO sigmoid term. Chaining these through the softmax reproduces the
// balanced per-sample logit update of the epoch theory.
LossEval balanced_reference_loss(double lr_w, double lr_l, double pi_w,
                                 double pi_l, double beta);

// Dispatcher on log-probabilities (trainer path; immune to probability
// underflow). lp_* are log pi_theta, lpref_* log pi_ref.
LossEval eval_loss(const LossSpec& spec, double lp_w, double lp_l,
                   double lpref_w, double lpref_l);

enum class BalanceVerdict { Balanced, PositivelyImbalanced, NegativelyImbalanced };

struct BalanceEstimate {
  BalanceVerdict verdict = BalanceVerdict::Balanced;
  double mean = 0.0;    // Monte-Carlo estimate of E[dL/dpi_w + dL/dpi_l]
  double stderr_ = 0.0;
  int n = 0;
};

// Monte-Carlo balance classification at pi_theta == pi_ref: samples pairs
// uniformly with Bradley-Terry labels and tests the mean probability-space
// gradient sum against a 3 sigma band around zero. A positive mean means the
// loser gradient dominates (negatively imbalanced).
BalanceEstimate classify_balance(const LossSpec& spec, const PolicyTable& policy,
                                 const PreferenceTask& task, int n_samples,
                                 uint64_t rng_seed);

// CLI names: dpo | reward-bt | nbdpo-asym | nbdpo-sym | nbdpov2-asym |
// nbdpov2-sym | bdpo | balanced-ref. Throws std::invalid_argument on
// unknown names.
LossSpec parse_loss_spec(const std::string& name, double beta = 1.0,
                         double clip_max = 0.5);
std::string loss_name(const LossSpec& spec);

}  // namespace prefdyn

#endif  // PREFDYN_LOSSES_HPP
