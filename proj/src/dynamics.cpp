#include "prefdyn/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace prefdyn {

namespace {

void check_kappa(double kappa) {
  if (!(kappa > 0.0) || !(kappa < 1.0))
    throw std::domain_error("kappa must lie in (0,1)");
}

}  // namespace

std::pair<double, double> delta_logit_dpo(int tau, double kappa,
                                          const DynamicsParams& params) {
  check_kappa(kappa);
  double d = params.gamma() * tau * (1.0 - kappa) * (1.0 - params.lambda_corr);
  return {d, -d};
}

std::pair<double, double> delta_logit_balanced(int tau, double kappa,
                                               double p_first, double p_second,
                                               const DynamicsParams& params) {
  check_kappa(kappa);
  double lam = params.lambda_corr;
  auto bracket = [lam](double pi, double pj) {
    double b = 1.0 - pi + pj;
    if (lam > 0.0) b += lam * (pi - pi * pi + pi * pj - 2.0 * pj);
    return b;
  };
  double base = params.gamma() * tau * (1.0 - kappa);
  // each side carries its own probability factor; chaining the equal
  // probability-space gradients through the softmax produces exactly this
  double d1 = base * p_first * bracket(p_first, p_second);
  double d2 = -base * p_second * bracket(p_second, p_first);
  return {d1, d2};
}

std::pair<std::vector<double>, std::vector<double>> alpha_beta(
    const PolicyTable& policy, const PreferenceTask& task, int x) {
  std::vector<double> p = policy.probs(x);
  int m = task.n_responses;
  std::vector<double> a(m, 0.0), b(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double ui = task.u(x, i);
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      a[i] += p[i] / (p[i] + p[j]);
      b[i] += ui / (ui + task.u(x, j));
    }
  }
  return {a, b};
}

namespace {

// kappa for an ordered pair under uniform-reference DPO is the policy's own
// Bradley-Terry odds p_first / (p_first + p_second)
std::vector<double> weights_from_probs(const std::vector<double>& p,
                                       const std::vector<WeightedPair>& dataset,
                                       int x, double scale) {
  std::vector<double> w(p.size(), 0.0);
  for (const WeightedPair& wp : dataset) {
    if (wp.x != x) continue;
    double kappa = p[wp.first] / (p[wp.first] + p[wp.second]);
    double t = wp.weight * scale * (1.0 - kappa);
    w[wp.first] += t;
    w[wp.second] -= t;
  }
  return w;
}

}  // namespace

std::vector<double> epoch_weights(const PolicyTable& policy,
                                  const PreferenceTask& task,
                                  const std::vector<WeightedPair>& dataset,
                                  int x) {
  (void)task;
  return weights_from_probs(policy.probs(x), dataset, x, 1.0);
}

std::vector<double> epoch_weights(const PolicyTable& policy,
                                  const PreferenceTask& task,
                                  const std::vector<PairSample>& samples,
                                  int x) {
  if (samples.empty()) throw std::invalid_argument("empty sample dataset");
  std::vector<double> p = policy.probs(x);
  // rescale so the sampled sum estimates the expected-dataset sum
  // (one unit of weight per unordered pair)
  long total_pairs = 0;
  for (int px = 0; px < task.n_prompts; ++px) {
    long c = task.unmasked_count(px);
    total_pairs += c * (c - 1) / 2;
  }
  double scale = static_cast<double>(total_pairs) / static_cast<double>(samples.size());
  std::vector<double> w(p.size(), 0.0);
  for (const PairSample& s : samples) {
    if (s.x != x) continue;
    int first = s.tau > 0 ? s.y1 : s.y2;
    int second = s.tau > 0 ? s.y2 : s.y1;
    double kappa = p[first] / (p[first] + p[second]);
    double t = scale * (1.0 - kappa);
    w[first] += t;
    w[second] -= t;
  }
  return w;
}

std::vector<double> prob_update_dpo(const std::vector<double>& p,
                                    const std::vector<double>& w,
                                    const DynamicsParams& params) {
  if (p.size() != w.size()) throw std::invalid_argument("p/w size mismatch");
  double wp = 0.0;
  for (size_t j = 0; j < p.size(); ++j) wp += w[j] * p[j];
  std::vector<double> dp(p.size());
  for (size_t i = 0; i < p.size(); ++i)
    dp[i] = params.gamma() * p[i] * (w[i] - wp);
  return dp;
}

std::vector<double> prob_update_balanced(const std::vector<double>& p,
                                         const std::vector<double>& w,
                                         const DynamicsParams& params,
                                         double* max_p_out) {
  if (p.size() != w.size()) throw std::invalid_argument("p/w size mismatch");
  double wp2 = 0.0;
  double pmax = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    wp2 += w[j] * p[j] * p[j];
    pmax = std::max(pmax, p[j]);
  }
  if (max_p_out) *max_p_out = pmax;
  std::vector<double> dp(p.size());
  for (size_t i = 0; i < p.size(); ++i)
    dp[i] = params.gamma() * p[i] * (w[i] * p[i] - wp2);
  return dp;
}

std::vector<std::vector<double>> one_step_gradient_oracle(
    const PolicyTable& policy, const PreferenceTask& task,
    const LossSpec& loss_spec, double eta) {
  // uniform reference: log ratios reduce to log-prob differences, matching
  // the kappa convention of the closed-form weights
  PolicyTable ref(task.n_prompts, task.n_responses, 0.0);
  std::vector<WeightedPair> dataset = expected_pair_dataset(task);

  PolicyTable stepped = policy;
  std::vector<std::vector<double>> before(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) {
    before[x] = policy.probs(x);
    std::vector<double> lp = policy.log_probs(x);
    std::vector<double> lpref = ref.log_probs(x);
    std::vector<double> direct(task.n_responses, 0.0);
    double chain = 0.0;
    for (const WeightedPair& wp : dataset) {
      if (wp.x != x) continue;
      LossEval e = eval_loss(loss_spec, lp[wp.first], lp[wp.second],
                             lpref[wp.first], lpref[wp.second]);
      if (loss_spec.kind == LossKind::BalancedReference) {
        // gradient rule semantics: the pair logits move, nothing else
        double pw = before[x][wp.first], pl = before[x][wp.second];
        direct[wp.first] += wp.weight * e.grad_logpi_w * (1.0 - pw + pl);
        direct[wp.second] += wp.weight * e.grad_logpi_l * (1.0 - pl + pw);
      } else {
        direct[wp.first] += wp.weight * e.grad_logpi_w;
        direct[wp.second] += wp.weight * e.grad_logpi_l;
        chain += wp.weight * (e.grad_logpi_w + e.grad_logpi_l);
      }
    }
    for (int k = 0; k < task.n_responses; ++k) {
      double dLds = direct[k] - before[x][k] * chain;
      stepped.logit(x, k) -= eta * dLds;
    }
  }
  std::vector<std::vector<double>> dp(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) {
    std::vector<double> after = stepped.probs(x);
    dp[x].resize(task.n_responses);
    for (int y = 0; y < task.n_responses; ++y) dp[x][y] = after[y] - before[x][y];
  }
  return dp;
}

EpochDynamics epoch_dynamics(const PolicyTable& policy,
                             const PreferenceTask& task, int x,
                             const DynamicsParams& params) {
  EpochDynamics d;
  auto [a, b] = alpha_beta(policy, task, x);
  d.alpha = std::move(a);
  d.beta = std::move(b);
  d.w = epoch_weights(policy, task, expected_pair_dataset(task), x);
  std::vector<double> p = policy.probs(x);
  d.dp_dpo = prob_update_dpo(p, d.w, params);
  d.dp_balanced = prob_update_balanced(p, d.w, params);
  return d;
}

std::string dynamics_csv(const PolicyTable& policy, const PreferenceTask& task,
                         int x, const DynamicsParams& params) {
  EpochDynamics d = epoch_dynamics(policy, task, x, params);
  std::vector<double> p = policy.probs(x);
  std::ostringstream os;
  os << "y,p,u,alpha,beta,w,dp_dpo,dp_balanced\n";
  char buf[256];
  for (int y = 0; y < task.n_responses; ++y) {
    std::snprintf(buf, sizeof buf,
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", y, p[y],
                  task.u(x, y), d.alpha[y], d.beta[y], d.w[y], d.dp_dpo[y],
                  d.dp_balanced[y]);
    os << buf;
  }
  return os.str();
}

}  // namespace prefdyn
