#include "prefdyn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prefdyn/rng.hpp"

namespace prefdyn {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// -log sigma(z), computed in log space so saturation never produces inf/nan
double neglogsigmoid(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

void check_prob(double p, const char* what) {
  if (!(p > 0.0) || !(p < 1.0) || !std::isfinite(p))
    throw std::domain_error(std::string(what) + " must lie in (0,1)");
}

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// lambda from log probabilities; chi-out reports whether the log ratio is
// strictly inside the clip window (where d lambda / d log pi_w = 1)
double lambda_from_logs(double lp_w, double lp_l, const LossSpec& spec,
                        double* chi_out = nullptr) {
  double z = lp_w - lp_l;
  double lo = spec.dlambda_min();
  double hi = spec.clip_max;
  if (chi_out) *chi_out = (z > lo && z < hi) ? 1.0 : 0.0;
  return 1.0 + clip(z, lo, hi);
}

}  // namespace

LossEval dpo_loss(double lr_w, double lr_l, double beta) {
  double arg = beta * (lr_w - lr_l);
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);  // 1 - kappa
  e.grad_logpi_w = -beta * om;
  e.grad_logpi_l = beta * om;
  return e;
}

LossEval reward_bt_loss(double r_w, double r_l) {
  double arg = r_w - r_l;
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);
  e.grad_logpi_w = -om;  // gradients wrt the two reward scalars
  e.grad_logpi_l = om;
  return e;
}

double nbdpo_lambda(double pi_w, double pi_l, const LossSpec& spec) {
  check_prob(pi_w, "pi_w");
  check_prob(pi_l, "pi_l");
  return lambda_from_logs(std::log(pi_w), std::log(pi_l), spec);
}

LossEval nbdpo_loss(double lr_w, double lr_l, double detached_lr_w,
                    double pi_w, double pi_l, const LossSpec& spec) {
  double lam = nbdpo_lambda(pi_w, pi_l, spec);
  // the detached term cancels the (lambda-1) lr_w contribution; grouping the
  // cancellation first keeps the value bit-identical to the dpo value
  double arg = spec.beta * (lr_w - lr_l) +
               spec.beta * (lam - 1.0) * (lr_w - detached_lr_w);
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);
  e.grad_logpi_w = -spec.beta * lam * om;
  e.grad_logpi_l = spec.beta * om;
  return e;
}

LossEval nbdpov2_loss(double lr_w, double lr_l, double pi_w, double pi_l,
                      const LossSpec& spec) {
  check_prob(pi_w, "pi_w");
  check_prob(pi_l, "pi_l");
  double chi = 0.0;
  double lam = lambda_from_logs(std::log(pi_w), std::log(pi_l), spec, &chi);
  double arg = spec.beta * (lam * lr_w - lr_l);
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);
  // lambda depends on log pi_w (resp. log pi_l) with slope chi (resp. -chi)
  e.grad_logpi_w = -spec.beta * om * (lam + chi * lr_w);
  e.grad_logpi_l = spec.beta * om * (1.0 + chi * lr_w);
  return e;
}

double bdpo_lambda(double pi_w, double pi_l) {
  check_prob(pi_w, "pi_w");
  check_prob(pi_l, "pi_l");
  double a = std::log(pi_w);
  double b = std::log(pi_l);
  return b / (a + b);
}

LossEval bdpo_loss(double lr_w, double lr_l, double pi_w, double pi_l,
                   double beta) {
  check_prob(pi_w, "pi_w");
  check_prob(pi_l, "pi_l");
  double a = std::log(pi_w);
  double b = std::log(pi_l);
  double aref = a - lr_w;  // log pi_ref recovered from the log ratios
  double bref = b - lr_l;
  // lambda_w lr_w - (1-lambda_w) lr_l collapses to (a bref - b aref)/(a+b)
  double arg = beta * (a * bref - b * aref) / (a + b);
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);
  double denom = (a + b) * (a + b);
  e.grad_logpi_w = -beta * om * b * (aref + bref) / denom;
  e.grad_logpi_l = beta * om * a * (aref + bref) / denom;
  return e;
}

LossEval balanced_reference_loss(double lr_w, double lr_l, double pi_w,
                                 double pi_l, double beta) {
  double arg = beta * (lr_w - lr_l);
  LossEval e;
  e.value = neglogsigmoid(arg);
  e.kappa = sigmoid(arg);
  double om = sigmoid(-arg);
  // equal probability-space gradients; in log space that is -+ (1-kappa) p
  e.grad_logpi_w = -beta * om * pi_w;
  e.grad_logpi_l = beta * om * pi_l;
  return e;
}

LossEval eval_loss(const LossSpec& spec, double lp_w, double lp_l,
                   double lpref_w, double lpref_l) {
  double lr_w = lp_w - lpref_w;
  double lr_l = lp_l - lpref_l;
  switch (spec.kind) {
    case LossKind::DPO:
      return dpo_loss(lr_w, lr_l, spec.beta);
    case LossKind::RewardBT:
      // scores realized as log-probabilities
      return reward_bt_loss(lp_w, lp_l);
    case LossKind::NbDPO: {
      double lam = lambda_from_logs(lp_w, lp_l, spec);
      LossEval e = dpo_loss(lr_w, lr_l, spec.beta);
      e.grad_logpi_w *= lam;
      return e;
    }
    case LossKind::NbDPOv2: {
      double chi = 0.0;
      double lam = lambda_from_logs(lp_w, lp_l, spec, &chi);
      double arg = spec.beta * (lam * lr_w - lr_l);
      LossEval e;
      e.value = neglogsigmoid(arg);
      e.kappa = sigmoid(arg);
      double om = sigmoid(-arg);
      e.grad_logpi_w = -spec.beta * om * (lam + chi * lr_w);
      e.grad_logpi_l = spec.beta * om * (1.0 + chi * lr_w);
      return e;
    }
    case LossKind::BDPO: {
      double arg = spec.beta * (lp_w * lpref_l - lp_l * lpref_w) / (lp_w + lp_l);
      LossEval e;
      e.value = neglogsigmoid(arg);
      e.kappa = sigmoid(arg);
      double om = sigmoid(-arg);
      double denom = (lp_w + lp_l) * (lp_w + lp_l);
      e.grad_logpi_w = -spec.beta * om * lp_l * (lpref_w + lpref_l) / denom;
      e.grad_logpi_l = spec.beta * om * lp_w * (lpref_w + lpref_l) / denom;
      return e;
    }
    case LossKind::BalancedReference:
      return balanced_reference_loss(lr_w, lr_l, std::exp(lp_w), std::exp(lp_l),
                                     spec.beta);
  }
  throw std::logic_error("unknown loss kind");
}

BalanceEstimate classify_balance(const LossSpec& spec, const PolicyTable& policy,
                                 const PreferenceTask& task, int n_samples,
                                 uint64_t rng_seed) {
  if (n_samples < 2) throw std::invalid_argument("need n_samples >= 2");
  SamplingScheme uniform;
  std::vector<PairSample> samples = sample_pairs(task, uniform, n_samples, rng_seed);

  double sum = 0.0;
  double sumsq = 0.0;
  for (const PairSample& s : samples) {
    int w = s.tau > 0 ? s.y1 : s.y2;
    int l = s.tau > 0 ? s.y2 : s.y1;
    std::vector<double> lp = policy.log_probs(s.x);
    // classification at the canonical initial state pi_theta == pi_ref
    LossEval e = eval_loss(spec, lp[w], lp[l], lp[w], lp[l]);
    double g;
    if (spec.kind == LossKind::RewardBT) {
      g = e.grad_logpi_w + e.grad_logpi_l;  // gradients already in score space
    } else {
      g = e.grad_logpi_w / std::exp(lp[w]) + e.grad_logpi_l / std::exp(lp[l]);
    }
    sum += g;
    sumsq += g * g;
  }
  BalanceEstimate out;
  out.n = n_samples;
  out.mean = sum / n_samples;
  double var = (sumsq - sum * sum / n_samples) / (n_samples - 1);
  out.stderr_ = std::sqrt(std::max(var, 0.0) / n_samples);
  if (out.mean > 3.0 * out.stderr_)
    out.verdict = BalanceVerdict::NegativelyImbalanced;
  else if (out.mean < -3.0 * out.stderr_)
    out.verdict = BalanceVerdict::PositivelyImbalanced;
  else
    out.verdict = BalanceVerdict::Balanced;
  return out;
}

LossSpec parse_loss_spec(const std::string& name, double beta, double clip_max) {
  LossSpec spec;
  spec.beta = beta;
  spec.clip_max = clip_max;
  if (name == "dpo") {
    spec.kind = LossKind::DPO;
  } else if (name == "reward-bt") {
    spec.kind = LossKind::RewardBT;
  } else if (name == "nbdpo-asym") {
    spec.kind = LossKind::NbDPO;
    spec.symmetry = ClipSymmetry::Asymmetric;
  } else if (name == "nbdpo-sym") {
    spec.kind = LossKind::NbDPO;
    spec.symmetry = ClipSymmetry::Symmetric;
  } else if (name == "nbdpov2-asym") {
    spec.kind = LossKind::NbDPOv2;
    spec.symmetry = ClipSymmetry::Asymmetric;
  } else if (name == "nbdpov2-sym") {
    spec.kind = LossKind::NbDPOv2;
    spec.symmetry = ClipSymmetry::Symmetric;
  } else if (name == "bdpo") {
    spec.kind = LossKind::BDPO;
  } else if (name == "balanced-ref") {
    spec.kind = LossKind::BalancedReference;
  } else {
    throw std::invalid_argument(
        "unknown loss '" + name +
        "' (valid: dpo nbdpo-asym nbdpo-sym nbdpov2-asym nbdpov2-sym bdpo "
        "balanced-ref reward-bt)");
  }
  return spec;
}

std::string loss_name(const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::DPO: return "dpo";
    case LossKind::RewardBT: return "reward-bt";
    case LossKind::NbDPO:
      return spec.symmetry == ClipSymmetry::Asymmetric ? "nbdpo-asym" : "nbdpo-sym";
    case LossKind::NbDPOv2:
      return spec.symmetry == ClipSymmetry::Asymmetric ? "nbdpov2-asym"
                                                       : "nbdpov2-sym";
    case LossKind::BDPO: return "bdpo";
    case LossKind::BalancedReference: return "balanced-ref";
  }
  return "?";
}

}  // namespace prefdyn
