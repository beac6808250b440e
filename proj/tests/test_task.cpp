#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <stdexcept>

#include "doctest.h"
#include "prefdyn/policy.hpp"
#include "prefdyn/task.hpp"

using namespace prefdyn;

TEST_CASE("gaussian utility values") {
  CHECK(gaussian_utility(5, 5, 0.6) == doctest::Approx(1.0));
  CHECK(gaussian_utility(5, 6, 0.6) == doctest::Approx(std::exp(-0.6)));
  CHECK(gaussian_utility(3, 7, 0.6) == gaussian_utility(7, 3, 0.6));
  CHECK_THROWS_AS(gaussian_utility(0, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_utility(0, 0, -1.0), std::invalid_argument);
}

TEST_CASE("utility peaks on the diagonal and decays with distance") {
  PreferenceTask task = make_toy_task(20, 20, 0.6);
  for (int x = 0; x < 20; ++x) {
    for (int y = 0; y < 20; ++y) {
      if (y == x) continue;
      CHECK(task.u(x, y) < task.u(x, x));
      if (y > x && y + 1 < 20) CHECK(task.u(x, y + 1) < task.u(x, y));
    }
  }
}

TEST_CASE("preference probability") {
  PreferenceTask task = make_toy_task(10, 10, 0.6);
  CHECK(preference_probability(task, 5, 5, 6) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-0.6))).epsilon(1e-12));
  // equal utilities
  CHECK(preference_probability(task, 5, 4, 6) == doctest::Approx(0.5));
  // complementarity
  for (int y1 = 0; y1 < 10; ++y1)
    for (int y2 = 0; y2 < 10; ++y2) {
      if (y1 == y2) continue;
      double s = preference_probability(task, 3, y1, y2) +
                 preference_probability(task, 3, y2, y1);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK_THROWS_AS(preference_probability(task, 0, 2, 2), std::domain_error);
  task.mask[0 * 10 + 4] = 1;
  CHECK_THROWS_AS(preference_probability(task, 0, 4, 5), std::domain_error);
}

TEST_CASE("uniform pair sampling frequencies") {
  PreferenceTask task = make_toy_task(1, 3, 0.6);
  SamplingScheme uniform;
  auto samples = sample_pairs(task, uniform, 100000, 7);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : samples) counts[{s.y1, s.y2}]++;
  CHECK(counts.size() == 3);
  for (const auto& [k, c] : counts)
    CHECK(static_cast<double>(c) / 100000 == doctest::Approx(1.0 / 3).epsilon(0.03));
}

TEST_CASE("tau frequency matches the Bradley-Terry probability") {
  PreferenceTask task = make_toy_task(1, 2, 0.6);
  SamplingScheme uniform;
  int n = 100000;
  auto samples = sample_pairs(task, uniform, n, 11);
  double q = preference_probability(task, 0, 0, 1);
  int wins = 0;
  for (const auto& s : samples) wins += (s.tau > 0) ? 1 : 0;
  double freq = static_cast<double>(wins) / n;
  double sigma = std::sqrt(q * (1 - q) / n);
  CHECK(std::abs(freq - q) < 4.0 * sigma);
}

TEST_CASE("shiftless sampling under a uniform policy matches uniform") {
  PreferenceTask task = make_toy_task(1, 4, 0.6);
  PolicyTable flat(1, 4, 0.0);
  SamplingScheme shiftless{SamplingKind::Shiftless, &flat};
  auto samples = sample_pairs(task, shiftless, 120000, 3);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : samples) counts[{s.y1, s.y2}]++;
  CHECK(counts.size() == 6);
  for (const auto& [k, c] : counts)
    CHECK(static_cast<double>(c) / 120000 == doctest::Approx(1.0 / 6).epsilon(0.05));
}

TEST_CASE("sampling is deterministic per seed") {
  PreferenceTask task = make_toy_task(4, 6, 0.6);
  SamplingScheme uniform;
  auto a = sample_pairs(task, uniform, 500, 42);
  auto b = sample_pairs(task, uniform, 500, 42);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y1 == b[i].y1);
    CHECK(a[i].y2 == b[i].y2);
    CHECK(a[i].tau == b[i].tau);
  }
}

TEST_CASE("samples never touch masked cells") {
  PreferenceTask task = apply_mask(make_toy_task(20, 20, 0.6), 0.4, 9);
  SamplingScheme uniform;
  auto samples = sample_pairs(task, uniform, 100000, 5);
  for (const auto& s : samples) {
    CHECK_FALSE(task.masked(s.x, s.y1));
    CHECK_FALSE(task.masked(s.x, s.y2));
  }
}

TEST_CASE("expected pair dataset") {
  PreferenceTask task = make_toy_task(1, 2, 0.6);
  task.utility = {1.0, 1.0};
  auto ds = expected_pair_dataset(task);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].weight == doctest::Approx(0.5));
  CHECK(ds[1].weight == doctest::Approx(0.5));

  // each unordered pair carries total weight one
  PreferenceTask big = make_toy_task(3, 8, 0.6);
  auto ds2 = expected_pair_dataset(big);
  std::map<std::tuple<int, int, int>, double> totals;
  for (const auto& wp : ds2) {
    int lo = std::min(wp.first, wp.second), hi = std::max(wp.first, wp.second);
    totals[{wp.x, lo, hi}] += wp.weight;
  }
  for (const auto& [k, v] : totals) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scheme-weighted expected dataset reduces to uniform for a flat policy") {
  PreferenceTask task = make_toy_task(2, 5, 0.6);
  PolicyTable flat(2, 5, 0.0);
  SamplingScheme shiftless{SamplingKind::Shiftless, &flat};
  auto a = expected_pair_dataset(task);
  auto b = expected_pair_dataset(task, shiftless);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].weight == doctest::Approx(b[i].weight).epsilon(1e-12));
}

TEST_CASE("apply_mask") {
  PreferenceTask toy = make_toy_task(20, 20, 0.6);
  SUBCASE("rate zero leaves the task unchanged") {
    PreferenceTask same = apply_mask(toy, 0.0, 1);
    CHECK(same.mask == toy.mask);
  }
  SUBCASE("rate 0.2 masks about 80 cells and keeps rows usable") {
    PreferenceTask masked = apply_mask(toy, 0.2, 1);
    int count = 0;
    for (uint8_t m : masked.mask) count += m;
    CHECK(count > 80 - 32);  // 4 sigma binomial band around 400 * 0.2
    CHECK(count < 80 + 32);
    for (int x = 0; x < 20; ++x) CHECK(masked.unmasked_count(x) >= 2);
  }
  SUBCASE("deterministic per seed") {
    CHECK(apply_mask(toy, 0.3, 5).mask == apply_mask(toy, 0.3, 5).mask);
  }
  SUBCASE("rate must stay below one") {
    CHECK_THROWS_AS(apply_mask(toy, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(apply_mask(toy, -0.1, 1), std::invalid_argument);
  }
}

TEST_CASE("masking never removes a prompt's most preferred response") {
  PreferenceTask toy = make_toy_task(20, 20, 0.6);
  for (uint64_t seed : {1, 2, 3}) {
    PreferenceTask masked = apply_mask(toy, 0.4, seed);
    for (int x = 0; x < 20; ++x) CHECK_FALSE(masked.masked(x, x));
  }
}

TEST_CASE("task json round trip regenerates utilities from alpha") {
  PreferenceTask task = apply_mask(make_toy_task(6, 7, 0.6), 0.25, 3);
  std::string js = task_to_json(task, 0.6);
  double alpha = 0.0;
  PreferenceTask back = task_from_json(js, &alpha);
  CHECK(alpha == doctest::Approx(0.6));
  CHECK(back.n_prompts == task.n_prompts);
  CHECK(back.n_responses == task.n_responses);
  CHECK(back.mask == task.mask);
  for (size_t i = 0; i < task.utility.size(); ++i)
    CHECK(back.utility[i] == doctest::Approx(task.utility[i]).epsilon(1e-15));
}

TEST_CASE("scenario task uses the gaussian utility kernel") {
  GaussianScenario sc;
  sc.mu_p = 45;
  sc.mu_q = 55;
  sc.sigma2 = 100;
  sc.n_responses = 100;
  PreferenceTask task = make_scenario_task(sc);
  CHECK(task.n_prompts == 1);
  CHECK(task.u(0, 55) == doctest::Approx(1.0));
  CHECK(task.u(0, 45) == doctest::Approx(std::exp(-100.0 / 200.0)));
}
