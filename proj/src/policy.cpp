#include "prefdyn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace prefdyn {

PolicyTable::PolicyTable(int n_prompts, int n_responses, double init_logit)
    : rows_(n_prompts), cols_(n_responses),
      logits_(static_cast<size_t>(n_prompts) * n_responses, init_logit) {}

std::vector<double> PolicyTable::log_probs(int x) const {
  const double* s = logits_.data() + static_cast<size_t>(x) * cols_;
  double mx = s[0];
  for (int y = 1; y < cols_; ++y) mx = std::max(mx, s[y]);
  if (!std::isfinite(mx)) throw std::domain_error("non-finite logit");
  double sum = 0.0;
  for (int y = 0; y < cols_; ++y) sum += std::exp(s[y] - mx);
  double lz = mx + std::log(sum);
  std::vector<double> out(cols_);
  for (int y = 0; y < cols_; ++y) out[y] = s[y] - lz;
  return out;
}

std::vector<double> PolicyTable::probs(int x) const {
  std::vector<double> lp = log_probs(x);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double PolicyTable::log_prob(int x, int y) const { return log_probs(x)[y]; }

std::vector<double> prob_jacobian(const PolicyTable& policy, int x) {
  std::vector<double> p = policy.probs(x);
  int n = static_cast<int>(p.size());
  std::vector<double> jac(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      jac[i * n + j] = p[i] * ((i == j ? 1.0 : 0.0) - p[j]);
  return jac;
}

double log_ratio(const PolicyTable& policy, const ReferencePolicy& reference,
                 int x, int y) {
  return policy.log_prob(x, y) - reference.log_prob(x, y);
}

PolicyTable masked_uniform_init(const PreferenceTask& task) {
  // all logits equal; masked cells are only treated as probability zero by
  // the closed-form dynamics layer, never by the softmax
  return PolicyTable(task.n_prompts, task.n_responses, 0.0);
}

std::string policy_to_csv(const PolicyTable& policy) {
  std::ostringstream os;
  char buf[40];
  for (int x = 0; x < policy.n_prompts(); ++x) {
    for (int y = 0; y < policy.n_responses(); ++y) {
      std::snprintf(buf, sizeof buf, "%.17g", policy.logit(x, y));
      os << (y ? "," : "") << buf;
    }
    os << "\n";
  }
  return os.str();
}

PolicyTable policy_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("empty policy csv");
  PolicyTable out(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t x = 0; x < rows.size(); ++x) {
    if (rows[x].size() != rows[0].size())
      throw std::invalid_argument("ragged policy csv");
    for (size_t y = 0; y < rows[x].size(); ++y)
      out.logit(static_cast<int>(x), static_cast<int>(y)) = rows[x][y];
  }
  return out;
}

}  // namespace prefdyn
