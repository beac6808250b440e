#ifndef PREFDYN_TASK_HPP
#define PREFDYN_TASK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "prefdyn/rng.hpp"

namespace prefdyn {

// Discrete preference task: prompts x in {0..n_prompts-1}, responses y in
// {0..n_responses-1}, positive utility u(y|x), boolean OOD mask (true =
// the (prompt, response) cell never appears in training data).
struct PreferenceTask {
  int n_prompts = 0;
  int n_responses = 0;
  std::vector<double> utility;  // row-major [x * n_responses + y]
  std::vector<uint8_t> mask;    // same layout; 1 = masked out

  double u(int x, int y) const { return utility[x * n_responses + y]; }
  bool masked(int x, int y) const { return mask[x * n_responses + y] != 0; }
  int unmasked_count(int x) const;
  void validate() const;  // throws std::invalid_argument on broken invariants
};

// Single-prompt Gaussian world of the w-distribution simulation: model
// distribution centered at mu_p, utility centered at mu_q, shared variance.
struct GaussianScenario {
  double mu_p = 45.0;
  double mu_q = 55.0;
  double sigma2 = 100.0;
  int n_responses = 100;
};

struct PairSample {
  int x = 0;
  int y1 = 0;
  int y2 = 0;
  int tau = 1;  // +1: y1 beats y2, -1: y2 beats y1
};

// Ordered pair with expectation weight; "first" beats "second".
struct WeightedPair {
  int x = 0;
  int first = 0;
  int second = 0;
  double weight = 0.0;
};

enum class SamplingKind { Uniform, Shiftless };

class PolicyTable;  // policy.hpp

// Pair sampling scheme. Uniform picks every unmasked unordered pair of a
// prompt with equal probability; Shiftless weights pairs by the product of
// the live policy's probabilities (no train/deploy distribution shift).
struct SamplingScheme {
  SamplingKind kind = SamplingKind::Uniform;
  const PolicyTable* policy = nullptr;  // required for Shiftless
};

double gaussian_utility(int x, int y, double alpha);

// Bradley-Terry preference probability u(y1|x) / (u(y1|x) + u(y2|x)).
double preference_probability(const PreferenceTask& task, int x, int y1, int y2);

// 20x20 toy task with u(y|x) = exp(-alpha (y-x)^2), nothing masked.
PreferenceTask make_toy_task(int n_prompts, int n_responses, double alpha);

// Single-prompt task for a Gaussian scenario; utility kernel exp(-(y-mu_q)^2/(2 sigma^2)).
PreferenceTask make_scenario_task(const GaussianScenario& sc);

// n pair samples: prompt uniform, unordered pair by scheme, winner by
// Bradley-Terry draw. Deterministic per seed.
std::vector<PairSample> sample_pairs(const PreferenceTask& task,
                                     const SamplingScheme& scheme, int n,
                                     uint64_t rng_seed);

// Every unmasked ordered pair weighted by its Bradley-Terry probability,
// so each unordered pair carries total weight 1. Epoch weights computed
// from this set are exact expectations (no Monte-Carlo noise).
std::vector<WeightedPair> expected_pair_dataset(const PreferenceTask& task);

// Scheme-weighted variant: unordered-pair weights follow the sampling
// scheme, rescaled so the total weight per prompt equals its pair count
// (Uniform therefore reduces to expected_pair_dataset).
std::vector<WeightedPair> expected_pair_dataset(const PreferenceTask& task,
                                                const SamplingScheme& scheme);

// Bernoulli(rate) mask per cell; rows that would drop below two unmasked
// responses are redrawn. rate must be in [0, 1).
PreferenceTask apply_mask(const PreferenceTask& task, double rate, uint64_t rng_seed);

// JSON round trip {prompts, responses, alpha, mask}; utilities are
// regenerated from alpha, never stored.
std::string task_to_json(const PreferenceTask& task, double alpha);
PreferenceTask task_from_json(const std::string& text, double* alpha_out = nullptr);

}  // namespace prefdyn

#endif  // PREFDYN_TASK_HPP
