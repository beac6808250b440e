#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "prefdyn/oracles.hpp"

using namespace prefdyn;

TEST_CASE("fym inequality: hand-checked moments and random trials") {
  // f = g = identity on a fine uniform grid over [0,1]:
  // Var[X^2] -> 4/45 and Var[X] E[X^2] -> 1/36
  int k = 2001;
  double ex = 0, ex2 = 0, ex4 = 0;
  for (int i = 0; i < k; ++i) {
    double x = static_cast<double>(i) / (k - 1);
    ex += x;
    ex2 += x * x;
    ex4 += x * x * x * x;
  }
  ex /= k;
  ex2 /= k;
  ex4 /= k;
  double lhs = ex4 - ex2 * ex2;
  double rhs = (ex2 - ex * ex) * ex2;
  CHECK(lhs == doctest::Approx(4.0 / 45).epsilon(1e-3));
  CHECK(rhs == doctest::Approx(1.0 / 36).epsilon(1e-3));
  CHECK(lhs >= rhs);

  OracleReport rep = mc_check_fym(10000, 1);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
  CHECK(rep.worst_margin >= -1e-12);
}

TEST_CASE("fym2 inequality: two-point distribution and random trials") {
  // X fair coin on {0,1}, f = g = identity: Cov[X^2, X] = 1/4 >= E[X]Var[X] = 1/8
  double ex = 0.5, ex2 = 0.5, ex3 = 0.5;
  double covv = ex3 - ex2 * ex;
  CHECK(covv == doctest::Approx(0.25));
  CHECK(ex * (ex2 - ex * ex) == doctest::Approx(0.125));

  OracleReport rep = mc_check_fym2(10000, 1);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
  CHECK(rep.worst_margin >= -1e-12);
}

TEST_CASE("variance bound holds on rank-aligned tasks") {
  OracleReport rep = check_variance_bound(1000, 1);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
  CHECK(rep.skipped == 0);  // the generator satisfies its own premise
}

TEST_CASE("variance premise filter rejects anti-aligned tasks") {
  std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  std::vector<double> beta_up{1.0, 2.0, 3.0, 4.0};
  std::vector<double> beta_down{4.0, 3.0, 2.0, 1.0};
  CHECK(variance_premise_holds(p, beta_up));
  CHECK_FALSE(variance_premise_holds(p, beta_down));
}

TEST_CASE("dataquality expectation holds for whole set and top subset") {
  PreferenceTask task;
  task.n_prompts = 1;
  task.n_responses = 30;
  task.mask.assign(30, 0);
  task.utility.resize(30);
  Rng rng = make_rng(5);
  for (int i = 0; i < 30; ++i) task.utility[i] = std::exp(0.8 * normal(rng));

  OracleReport whole = check_dataquality(task, 0.01, 1000, 2, DataqualitySubset::Whole);
  CHECK(whole.passed);
  CHECK(whole.worst_margin >= -1e-3 * 0.01 * 0.01);

  OracleReport top =
      check_dataquality(task, 0.01, 1000, 2, DataqualitySubset::TopProbabilityHalf);
  CHECK(top.passed);
  // strict subset concentrates E[p^2], so the expected slack is positive
  CHECK(top.worst_margin > 0.0);

  CHECK_THROWS_AS(check_dataquality(task, 0.9, 10, 2, DataqualitySubset::Whole),
                  std::invalid_argument);
}

TEST_CASE("ood zero probability is absorbing over 100 epochs") {
  OracleReport rep = check_ood_zero(100, 7);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
}

TEST_CASE("ood update inequality under independent ranks") {
  OracleReport rep = check_ood_update(1000, 3, false);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
  CHECK(rep.worst_margin > 1e-12);
}

TEST_CASE("ood update aligned control shows the premise matters") {
  OracleReport rep = check_ood_update(500, 3, true);
  CHECK(rep.passed);  // control reports, never fails
  CHECK(rep.violations > 0);
}

TEST_CASE("distribution-shift extrema for the three figure rows") {
  for (auto [mp, mq] : {std::pair{45.0, 55.0}, {30.0, 70.0}, {48.0, 52.0}}) {
    GaussianScenario sc;
    sc.mu_p = mp;
    sc.mu_q = mq;
    OracleReport rep = check_distshift_extrema(sc);
    INFO("mu_p=", mp, " mu_q=", mq);
    CHECK(rep.passed);
    CHECK_FALSE(rep.inconclusive);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("no distribution shift leaves w flat and the check inconclusive") {
  GaussianScenario sc;
  sc.mu_p = 50.0;
  sc.mu_q = 50.0;
  OracleReport rep = check_distshift_extrema(sc);
  CHECK(rep.inconclusive);
  CHECK(rep.passed);
}

TEST_CASE("probupdate oracle passes in a short run") {
  OracleReport rep = check_probupdate(10, 4);
  CHECK(rep.passed);
  CHECK(rep.violations == 0);
}

TEST_CASE("oracle report serializes to json") {
  OracleReport rep = mc_check_fym(10, 1);
  std::string js = rep.to_json();
  CHECK(js.find("\"name\"") != std::string::npos);
  CHECK(js.find("\"violations\"") != std::string::npos);
  CHECK(js.find("\"worst_margin\"") != std::string::npos);
}
