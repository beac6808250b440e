#include "prefdyn/task.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "prefdyn/policy.hpp"

namespace prefdyn {

int PreferenceTask::unmasked_count(int x) const {
  int c = 0;
  for (int y = 0; y < n_responses; ++y)
    if (!masked(x, y)) ++c;
  return c;
}

void PreferenceTask::validate() const {
  if (n_prompts < 1 || n_responses < 2)
    throw std::invalid_argument("task needs >=1 prompt and >=2 responses");
  if (static_cast<int>(utility.size()) != n_prompts * n_responses ||
      static_cast<int>(mask.size()) != n_prompts * n_responses)
    throw std::invalid_argument("task matrix size mismatch");
  for (double v : utility)
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("utilities must be strictly positive and finite");
  for (int x = 0; x < n_prompts; ++x)
    if (unmasked_count(x) < 2)
      throw std::invalid_argument("every prompt needs >=2 unmasked responses");
}

double gaussian_utility(int x, int y, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  double d = static_cast<double>(y) - static_cast<double>(x);
  return std::exp(-alpha * d * d);
}

double preference_probability(const PreferenceTask& task, int x, int y1, int y2) {
  if (y1 == y2) throw std::domain_error("degenerate pair: y1 == y2");
  if (task.masked(x, y1) || task.masked(x, y2))
    throw std::domain_error("masked pair requested");
  double u1 = task.u(x, y1);
  double u2 = task.u(x, y2);
  return u1 / (u1 + u2);
}

PreferenceTask make_toy_task(int n_prompts, int n_responses, double alpha) {
  PreferenceTask task;
  task.n_prompts = n_prompts;
  task.n_responses = n_responses;
  task.utility.resize(n_prompts * n_responses);
  task.mask.assign(n_prompts * n_responses, 0);
  for (int x = 0; x < n_prompts; ++x)
    for (int y = 0; y < n_responses; ++y)
      task.utility[x * n_responses + y] = gaussian_utility(x, y, alpha);
  task.validate();
  return task;
}

PreferenceTask make_scenario_task(const GaussianScenario& sc) {
  if (!(sc.sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (sc.n_responses < 2) throw std::invalid_argument("need >=2 responses");
  PreferenceTask task;
  task.n_prompts = 1;
  task.n_responses = sc.n_responses;
  task.utility.resize(sc.n_responses);
  task.mask.assign(sc.n_responses, 0);
  for (int y = 0; y < sc.n_responses; ++y) {
    double d = static_cast<double>(y) - sc.mu_q;
    task.utility[y] = std::exp(-d * d / (2.0 * sc.sigma2));
  }
  task.validate();
  return task;
}

namespace {

// Unordered unmasked pairs of one prompt.
std::vector<std::pair<int, int>> prompt_pairs(const PreferenceTask& task, int x) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < task.n_responses; ++i) {
    if (task.masked(x, i)) continue;
    for (int j = i + 1; j < task.n_responses; ++j) {
      if (task.masked(x, j)) continue;
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

std::vector<double> pair_weights_for_scheme(const SamplingScheme& scheme, int x,
                                            const std::vector<std::pair<int, int>>& pairs) {
  std::vector<double> wts(pairs.size(), 1.0);
  if (scheme.kind == SamplingKind::Shiftless) {
    if (scheme.policy == nullptr)
      throw std::invalid_argument("shiftless scheme needs a live policy");
    std::vector<double> p = scheme.policy->probs(x);
    for (size_t k = 0; k < pairs.size(); ++k)
      wts[k] = p[pairs[k].first] * p[pairs[k].second];
  }
  return wts;
}

}  // namespace

std::vector<PairSample> sample_pairs(const PreferenceTask& task,
                                     const SamplingScheme& scheme, int n,
                                     uint64_t rng_seed) {
  if (n < 1) throw std::invalid_argument("need n >= 1 samples");
  task.validate();
  Rng rng = make_rng(rng_seed);

  // per-prompt pair lists and scheme CDFs; shiftless weights are read from
  // the policy as it is NOW (callers refresh per epoch)
  std::vector<std::vector<std::pair<int, int>>> pairs(task.n_prompts);
  std::vector<std::vector<double>> cdf(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) {
    pairs[x] = prompt_pairs(task, x);
    if (pairs[x].empty()) throw std::invalid_argument("prompt without valid pairs");
    std::vector<double> w = pair_weights_for_scheme(scheme, x, pairs[x]);
    cdf[x].resize(w.size());
    double acc = 0.0;
    for (size_t k = 0; k < w.size(); ++k) {
      acc += w[k];
      cdf[x][k] = acc;
    }
  }

  std::vector<PairSample> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    int x = uniform_int(rng, task.n_prompts);
    double r = uniform01(rng) * cdf[x].back();
    size_t k = std::upper_bound(cdf[x].begin(), cdf[x].end(), r) - cdf[x].begin();
    if (k >= pairs[x].size()) k = pairs[x].size() - 1;
    auto [a, b] = pairs[x][k];
    double q = preference_probability(task, x, a, b);
    int tau = bernoulli(rng, q) ? 1 : -1;
    out.push_back(PairSample{x, a, b, tau});
  }
  return out;
}

std::vector<WeightedPair> expected_pair_dataset(const PreferenceTask& task) {
  SamplingScheme uniform;
  return expected_pair_dataset(task, uniform);
}

std::vector<WeightedPair> expected_pair_dataset(const PreferenceTask& task,
                                                const SamplingScheme& scheme) {
  task.validate();
  std::vector<WeightedPair> out;
  for (int x = 0; x < task.n_prompts; ++x) {
    auto pairs = prompt_pairs(task, x);
    std::vector<double> w = pair_weights_for_scheme(scheme, x, pairs);
    double total = 0.0;
    for (double v : w) total += v;
    // rescale so the prompt's total weight equals its pair count; uniform
    // weights then collapse to 1 per unordered pair
    double scale = static_cast<double>(pairs.size()) / total;
    for (size_t k = 0; k < pairs.size(); ++k) {
      auto [a, b] = pairs[k];
      double q = preference_probability(task, x, a, b);
      out.push_back(WeightedPair{x, a, b, w[k] * scale * q});
      out.push_back(WeightedPair{x, b, a, w[k] * scale * (1.0 - q)});
    }
  }
  return out;
}

PreferenceTask apply_mask(const PreferenceTask& task, double rate, uint64_t rng_seed) {
  if (!(rate >= 0.0) || rate >= 1.0)
    throw std::invalid_argument("mask rate must be in [0, 1)");
  PreferenceTask out = task;
  if (rate == 0.0) return out;
  Rng rng = make_rng(rng_seed);
  for (int x = 0; x < out.n_prompts; ++x) {
    // each prompt's most preferred response stays in-distribution; masking
    // it would change the task optimum, which the benchmark design fixes
    int best = 0;
    for (int y = 1; y < out.n_responses; ++y)
      if (task.u(x, y) > task.u(x, best)) best = y;
    while (true) {
      int kept = 0;
      std::vector<uint8_t> row(out.n_responses, 0);
      for (int y = 0; y < out.n_responses; ++y) {
        bool already = task.masked(x, y);
        bool hit = y != best && bernoulli(rng, rate);
        row[y] = (already || hit) ? 1 : 0;
        if (!row[y]) ++kept;
      }
      if (kept >= 2) {
        for (int y = 0; y < out.n_responses; ++y)
          out.mask[x * out.n_responses + y] = row[y];
        break;
      }
      // row would go degenerate: redraw it
    }
  }
  out.validate();
  return out;
}

std::string task_to_json(const PreferenceTask& task, double alpha) {
  nlohmann::json j;
  j["prompts"] = task.n_prompts;
  j["responses"] = task.n_responses;
  j["alpha"] = alpha;
  std::vector<std::vector<bool>> mask(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) {
    mask[x].resize(task.n_responses);
    for (int y = 0; y < task.n_responses; ++y) mask[x][y] = task.masked(x, y);
  }
  j["mask"] = mask;
  return j.dump(2);
}

PreferenceTask task_from_json(const std::string& text, double* alpha_out) {
  nlohmann::json j = nlohmann::json::parse(text);
  double alpha = j.at("alpha").get<double>();
  PreferenceTask task = make_toy_task(j.at("prompts").get<int>(),
                                      j.at("responses").get<int>(), alpha);
  auto mask = j.at("mask").get<std::vector<std::vector<bool>>>();
  for (int x = 0; x < task.n_prompts; ++x)
    for (int y = 0; y < task.n_responses; ++y)
      task.mask[x * task.n_responses + y] = mask.at(x).at(y) ? 1 : 0;
  task.validate();
  if (alpha_out) *alpha_out = alpha;
  return task;
}

}  // namespace prefdyn
