#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "prefdyn/policy.hpp"
#include "prefdyn/rng.hpp"

using namespace prefdyn;

TEST_CASE("softmax probabilities") {
  PolicyTable p(1, 4, 0.0);
  SUBCASE("equal logits give the uniform vector") {
    for (double v : p.probs(0)) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("s = [0, ln 2] gives [1/3, 2/3]") {
    PolicyTable q(1, 2, 0.0);
    q.logit(0, 1) = std::log(2.0);
    auto pr = q.probs(0);
    CHECK(pr[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(pr[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  }
  SUBCASE("shift invariance to 1e-12") {
    Rng rng = make_rng(1);
    PolicyTable a(1, 10, 0.0), b(1, 10, 0.0);
    for (int y = 0; y < 10; ++y) {
      double s = 3.0 * normal(rng);
      a.logit(0, y) = s;
      b.logit(0, y) = s + 123.456;
    }
    auto pa = a.probs(0), pb = b.probs(0);
    for (int y = 0; y < 10; ++y) CHECK(std::abs(pa[y] - pb[y]) < 1e-12);
  }
  SUBCASE("rows sum to one within 1e-12") {
    Rng rng = make_rng(2);
    PolicyTable a(5, 30, 0.0);
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 30; ++y) a.logit(x, y) = 5.0 * normal(rng);
    for (int x = 0; x < 5; ++x) {
      double sum = 0.0;
      for (double v : a.probs(x)) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  SUBCASE("non-finite logits raise a numeric error") {
    PolicyTable a(1, 2, 0.0);
    a.logit(0, 0) = std::nan("");
    CHECK_THROWS_AS(a.probs(0), std::domain_error);
  }
}

TEST_CASE("probability jacobian") {
  SUBCASE("two symmetric responses") {
    PolicyTable p(1, 2, 0.0);
    auto j = prob_jacobian(p, 0);
    CHECK(j[0] == doctest::Approx(0.25));
    CHECK(j[1] == doctest::Approx(-0.25));
    CHECK(j[2] == doctest::Approx(-0.25));
    CHECK(j[3] == doctest::Approx(0.25));
  }
  SUBCASE("rows sum to zero") {
    Rng rng = make_rng(3);
    PolicyTable p(1, 12, 0.0);
    for (int y = 0; y < 12; ++y) p.logit(0, y) = 2.0 * normal(rng);
    auto j = prob_jacobian(p, 0);
    for (int i = 0; i < 12; ++i) {
      double s = 0.0;
      for (int k = 0; k < 12; ++k) s += j[i * 12 + k];
      CHECK(std::abs(s) < 1e-14);
    }
  }
  SUBCASE("matches central finite differences on 100 random instances") {
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng = make_rng(100, trial);
      PolicyTable p(1, 10, 0.0);
      for (int y = 0; y < 10; ++y) p.logit(0, y) = 2.0 * normal(rng);
      auto jac = prob_jacobian(p, 0);
      double worst = 0.0;
      for (int j = 0; j < 10; ++j) {
        PolicyTable up = p, dn = p;
        up.logit(0, j) += h;
        dn.logit(0, j) -= h;
        auto pu = up.probs(0), pd = dn.probs(0);
        for (int i = 0; i < 10; ++i) {
          double fd = (pu[i] - pd[i]) / (2 * h);
          worst = std::max(worst, std::abs(fd - jac[i * 10 + j]));
        }
      }
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("log probabilities and ratios") {
  SUBCASE("policy equal to reference gives zero ratio") {
    PolicyTable p(2, 5, 0.0);
    p.logit(1, 3) = 0.7;
    ReferencePolicy ref(p);
    for (int y = 0; y < 5; ++y) CHECK(log_ratio(p, ref, 1, y) == doctest::Approx(0.0));
  }
  SUBCASE("doubled probability against a flat reference") {
    PolicyTable p(1, 2, 0.0);
    p.logit(0, 0) = std::log(2.0);
    ReferencePolicy ref(PolicyTable(1, 2, 0.0));
    CHECK(log_ratio(p, ref, 0, 0) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
  }
  SUBCASE("ratio differences are shift invariant") {
    PolicyTable p(1, 3, 0.0);
    p.logit(0, 0) = 0.3;
    p.logit(0, 1) = -0.4;
    ReferencePolicy ref(PolicyTable(1, 3, 0.0));
    double d0 = log_ratio(p, ref, 0, 0) - log_ratio(p, ref, 0, 1);
    for (int y = 0; y < 3; ++y) p.logit(0, y) += 55.0;
    double d1 = log_ratio(p, ref, 0, 0) - log_ratio(p, ref, 0, 1);
    CHECK(d0 == doctest::Approx(d1).epsilon(1e-12));
  }
}

TEST_CASE("masked uniform init is row stochastic and uniform") {
  PreferenceTask task = make_toy_task(4, 20, 0.6);
  PolicyTable p = masked_uniform_init(task);
  for (int x = 0; x < 4; ++x)
    for (double v : p.probs(x)) CHECK(v == doctest::Approx(0.05).epsilon(1e-13));
  PolicyTable q = masked_uniform_init(task);
  CHECK(p.logits() == q.logits());
}

TEST_CASE("plain descent moves each logit by its own gradient only") {
  // tabular parameters: the update for s_k reads nothing but dL/ds_k
  PolicyTable p(1, 6, 0.0);
  std::vector<double> grad(6, 0.0);
  grad[2] = 1.0;
  for (int y = 0; y < 6; ++y) p.logit(0, y) -= 0.5 * grad[y];
  for (int y = 0; y < 6; ++y)
    CHECK(p.logit(0, y) == doctest::Approx(y == 2 ? -0.5 : 0.0));
}

TEST_CASE("policy csv round trip") {
  Rng rng = make_rng(8);
  PolicyTable p(3, 4, 0.0);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y) p.logit(x, y) = normal(rng);
  PolicyTable q = policy_from_csv(policy_to_csv(p));
  REQUIRE(q.n_prompts() == 3);
  REQUIRE(q.n_responses() == 4);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y) CHECK(q.logit(x, y) == p.logit(x, y));
}
