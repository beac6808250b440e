#ifndef PREFDYN_POLICY_HPP
#define PREFDYN_POLICY_HPP

#include <string>
#include <vector>

#include "prefdyn/task.hpp"

namespace prefdyn {

// Tabular softmax policy: one raw logit per (prompt, response) cell, each
// logit its own parameter. This realizes the analysis assumptions exactly:
// per-logit parameter-gradient norm g = 1 and zero cross-logit correlation.
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(int n_prompts, int n_responses, double init_logit = 0.0);

  int n_prompts() const { return rows_; }
  int n_responses() const { return cols_; }

  double logit(int x, int y) const { return logits_[x * cols_ + y]; }
  double& logit(int x, int y) { return logits_[x * cols_ + y]; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  // softmax over responses, max-subtracted; throws std::domain_error on
  // non-finite logits
  std::vector<double> probs(int x) const;
  std::vector<double> log_probs(int x) const;

  double log_prob(int x, int y) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> logits_;
};

// Frozen copy of a policy (the pi_ref of the DPO loss).
class ReferencePolicy {
 public:
  ReferencePolicy() = default;
  explicit ReferencePolicy(const PolicyTable& policy) : table_(policy) {}
  const PolicyTable& table() const { return table_; }
  std::vector<double> log_probs(int x) const { return table_.log_probs(x); }
  double log_prob(int x, int y) const { return table_.log_prob(x, y); }

 private:
  PolicyTable table_;
};

// d p_i / d s_j = p_i (delta_ij - p_j); returned row-major n x n.
std::vector<double> prob_jacobian(const PolicyTable& policy, int x);

// log pi_theta(y|x) - log pi_ref(y|x)
double log_ratio(const PolicyTable& policy, const ReferencePolicy& reference,
                 int x, int y);

// Uniform logits over unmasked responses. Masked cells share the same
// logit; exact zero probabilities exist only in the closed-form dynamics
// layer, not in any softmax output.
PolicyTable masked_uniform_init(const PreferenceTask& task);

// Checkpoint CSV: one row per prompt, one column per response, logits.
std::string policy_to_csv(const PolicyTable& policy);
PolicyTable policy_from_csv(const std::string& text);

}  // namespace prefdyn

#endif  // PREFDYN_POLICY_HPP
