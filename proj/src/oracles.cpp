#include "prefdyn/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "prefdyn/policy.hpp"

namespace prefdyn {

std::string OracleReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["trials"] = trials;
  j["violations"] = violations;
  j["skipped"] = skipped;
  j["worst_margin"] = worst_margin;
  j["passed"] = passed;
  j["inconclusive"] = inconclusive;
  j["details"] = details;
  return j.dump(2);
}

namespace {

struct Extremum {
  double pos = 0.0;  // plateau midpoint
  bool is_max = false;
};

// discrete 3-point extrema with plateau handling: a flat run bounded by
// lower (or higher) neighbours counts once, at its midpoint. Differences
// below a relative noise floor count as flat so an identically-zero series
// (up to rounding) yields no extrema.
std::vector<Extremum> interior_extrema(const std::vector<double>& v,
                                       double noise_floor = 0.0) {
  std::vector<Extremum> out;
  int n = static_cast<int>(v.size());
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  double eps = std::max(noise_floor, 1e-12 * std::max(scale, 1e-300));
  auto flat = [eps](double a, double b) { return std::abs(a - b) <= eps; };
  int k = 1;
  while (k < n - 1) {
    int j = k;
    while (j < n - 1 && flat(v[j + 1], v[k])) ++j;
    if (j >= n - 1) break;
    double left = v[k - 1];
    double right = v[j + 1];
    double mid = 0.5 * (k + j);
    if (v[k] > left + eps && v[k] > right + eps) out.push_back({mid, true});
    else if (v[k] < left - eps && v[k] < right - eps) out.push_back({mid, false});
    k = j + 1;
  }
  return out;
}

std::vector<double> scenario_probs(const GaussianScenario& sc) {
  std::vector<double> p(sc.n_responses);
  double sum = 0.0;
  for (int y = 0; y < sc.n_responses; ++y) {
    double d = static_cast<double>(y) - sc.mu_p;
    p[y] = std::exp(-d * d / (2.0 * sc.sigma2));
    sum += p[y];
  }
  for (double& v : p) v /= sum;
  return p;
}

char fmtbuf[512];

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  std::snprintf(fmtbuf, sizeof fmtbuf, f, a, b, c);
  return fmtbuf;
}

// random nondecreasing positive step function on a K-point grid:
// positive offset plus a cumulative sum of nonnegative increments
std::vector<double> random_increasing(Rng& rng, int k) {
  std::vector<double> f(k);
  double acc = uniform(rng, 0.1, 1.0);
  for (int i = 0; i < k; ++i) {
    if (i > 0 && bernoulli(rng, 0.6)) acc += uniform(rng, 0.0, 1.0);
    f[i] = acc;
  }
  return f;
}

std::vector<double> random_weights(Rng& rng, int k) {
  std::vector<double> w(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    w[i] = std::exp(normal(rng));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var(const std::vector<double>& v) {
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double cov(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size());
}

// single-prompt random task + policy used by several checks
struct RandomInstance {
  PreferenceTask task;
  PolicyTable policy;
};

RandomInstance random_instance(Rng& rng, int m, double logit_sd, double logu_sd,
                               bool align_ranks, bool shuffle_u) {
  RandomInstance inst;
  inst.task.n_prompts = 1;
  inst.task.n_responses = m;
  inst.task.mask.assign(m, 0);
  inst.task.utility.resize(m);
  inst.policy = PolicyTable(1, m, 0.0);
  std::vector<double> logits(m);
  for (int i = 0; i < m; ++i) logits[i] = logit_sd * normal(rng);
  std::vector<double> uvals(m);
  for (int i = 0; i < m; ++i) uvals[i] = std::exp(logu_sd * normal(rng));
  if (align_ranks) {
    // utility ranks = probability ranks (no-shift premise)
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return logits[a] < logits[b]; });
    std::sort(uvals.begin(), uvals.end());
    for (int r = 0; r < m; ++r) inst.task.utility[order[r]] = uvals[r];
  } else if (shuffle_u) {
    for (int i = m - 1; i > 0; --i)
      std::swap(uvals[i], uvals[uniform_int(rng, i + 1)]);
    inst.task.utility = uvals;
  } else {
    inst.task.utility = uvals;
  }
  for (int i = 0; i < m; ++i) inst.policy.logit(0, i) = logits[i];
  return inst;
}

}  // namespace

OracleReport check_distshift_extrema(const GaussianScenario& scenario) {
  OracleReport rep;
  rep.name = "distshift_extrema";
  GaussianScenario sc = scenario;
  if (sc.mu_p > sc.mu_q) std::swap(sc.mu_p, sc.mu_q);  // w.l.o.g.

  PreferenceTask task = make_scenario_task(sc);
  std::vector<double> p = scenario_probs(sc);
  PolicyTable policy(1, sc.n_responses, 0.0);
  for (int y = 0; y < sc.n_responses; ++y) policy.logit(0, y) = std::log(p[y]);
  auto [a, b] = alpha_beta(policy, task, 0);
  std::vector<double> w(sc.n_responses), wp(sc.n_responses);
  for (int y = 0; y < sc.n_responses; ++y) {
    w[y] = b[y] - a[y];
    wp[y] = w[y] * p[y];
  }

  // alpha/beta are O(n) sums, so their rounding noise is about n ulp
  double floor_w = 1e-12 * sc.n_responses;
  std::vector<Extremum> ew = interior_extrema(w, floor_w);
  std::vector<Extremum> ewp = interior_extrema(wp, floor_w);
  rep.trials = static_cast<int>(ew.size());
  if (ew.empty()) {
    rep.inconclusive = true;
    rep.passed = true;
    rep.details.push_back("no interior extrema of w; claims not triggered");
    return rep;
  }

  double worst = 1e300;
  // (i) every extremum of w outside [mu_p, mu_q]
  for (const Extremum& e : ew) {
    double margin = std::max(sc.mu_p - e.pos, e.pos - sc.mu_q);
    worst = std::min(worst, margin);
    if (margin <= 0.0) ++rep.violations;
    rep.details.push_back(fmt("w extremum at y=%.1f (band margin %.2f)", e.pos, margin));
  }
  // (ii) right side: for the w extremum just above mu_q, some w*p extremum
  // lies strictly between mu_p and it
  double right = 1e300;
  for (const Extremum& e : ew)
    if (e.pos > sc.mu_q) right = std::min(right, e.pos);
  if (right < 1e300) {
    bool found = false;
    for (const Extremum& e : ewp)
      if (e.pos > sc.mu_p && e.pos < right) found = true;
    if (!found) ++rep.violations;
    rep.details.push_back(fmt("right-side claim: w* at %.1f, w*p extremum inside (mu_p, w*): %g",
                              right, found ? 1.0 : 0.0));
    if (!found) worst = std::min(worst, -1.0);
  }
  // (iii) stated as y* < y_hat < mu_p for y* > mu_q, which cannot hold as
  // written; tested under the mirrored reading (left-side w extremum,
  // w*p extremum in (y*, mu_q)) and the literal reading only reported
  double left = -1e300;
  for (const Extremum& e : ew)
    if (e.pos < sc.mu_p) left = std::max(left, e.pos);
  if (left > -1e300) {
    bool mirrored = false;
    for (const Extremum& e : ewp)
      if (e.pos > left && e.pos < sc.mu_q) mirrored = true;
    bool literal = false;
    if (right < 1e300)
      for (const Extremum& e : ewp)
        if (e.pos > right && e.pos < sc.mu_p) literal = true;
    if (!mirrored) ++rep.violations;
    if (!mirrored) worst = std::min(worst, -1.0);
    rep.details.push_back(fmt("left-side mirrored reading holds: %g; literal text reading holds: %g",
                              mirrored ? 1.0 : 0.0, literal ? 1.0 : 0.0));
  }
  rep.worst_margin = worst;
  rep.passed = rep.violations == 0;
  return rep;
}

OracleReport mc_check_fym(int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  OracleReport rep;
  rep.name = "fym_variance_product";
  rep.trials = trials;
  rep.worst_margin = 1e300;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, static_cast<uint64_t>(t));
    int k = 8 + uniform_int(rng, 33);
    std::vector<double> wts = random_weights(rng, k);
    std::vector<double> f = random_increasing(rng, k);
    std::vector<double> g = random_increasing(rng, k);
    double efg = 0.0, ef = 0.0, eg2 = 0.0, efg2 = 0.0, ef2 = 0.0;
    for (int i = 0; i < k; ++i) {
      efg += wts[i] * f[i] * g[i];
      efg2 += wts[i] * f[i] * f[i] * g[i] * g[i];
      ef += wts[i] * f[i];
      ef2 += wts[i] * f[i] * f[i];
      eg2 += wts[i] * g[i] * g[i];
    }
    double slack = (efg2 - efg * efg) - (ef2 - ef * ef) * eg2;
    rep.worst_margin = std::min(rep.worst_margin, slack);
    if (slack < -1e-12) ++rep.violations;
  }
  rep.passed = rep.violations == 0;
  return rep;
}

OracleReport mc_check_fym2(int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  OracleReport rep;
  rep.name = "fym2_covariance_bound";
  rep.trials = trials;
  rep.worst_margin = 1e300;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed ^ 0xf2f2f2f2ULL, static_cast<uint64_t>(t));
    int k = 8 + uniform_int(rng, 33);
    std::vector<double> wts = random_weights(rng, k);
    std::vector<double> f = random_increasing(rng, k);
    std::vector<double> g = random_increasing(rng, k);
    double efg = 0.0, eg = 0.0, ef = 0.0, eg2 = 0.0, efgg = 0.0;
    for (int i = 0; i < k; ++i) {
      efg += wts[i] * f[i] * g[i];
      efgg += wts[i] * f[i] * g[i] * g[i];
      ef += wts[i] * f[i];
      eg += wts[i] * g[i];
      eg2 += wts[i] * g[i] * g[i];
    }
    double slack = (efgg - efg * eg) - ef * (eg2 - eg * eg);
    rep.worst_margin = std::min(rep.worst_margin, slack);
    if (slack < -1e-12) ++rep.violations;
  }
  rep.passed = rep.violations == 0;
  return rep;
}

bool variance_premise_holds(const std::vector<double>& p,
                            const std::vector<double>& beta) {
  // beta must be nondecreasing along the probability order
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return p[a] < p[b]; });
  for (size_t r = 1; r < order.size(); ++r)
    if (beta[order[r]] < beta[order[r - 1]] - 1e-12) return false;
  return true;
}

OracleReport check_variance_bound(int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  OracleReport rep;
  rep.name = "variance_bound";
  rep.trials = trials;
  rep.worst_margin = 1e300;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed ^ 0x5a5a5a5aULL, static_cast<uint64_t>(t));
    int m = 5 + uniform_int(rng, 35);
    RandomInstance inst = random_instance(rng, m, 1.5, 1.5, true, false);
    std::vector<double> p = inst.policy.probs(0);
    auto [a, b] = alpha_beta(inst.policy, inst.task, 0);
    if (!variance_premise_holds(p, b)) {
      ++rep.skipped;
      continue;
    }
    std::vector<double> w(m), vwp(m), ap(m), bp(m);
    double ep2 = 0.0;
    for (int i = 0; i < m; ++i) {
      w[i] = b[i] - a[i];
      vwp[i] = w[i] * p[i];
      ap[i] = a[i] * p[i];
      bp[i] = b[i] * p[i];
      ep2 += p[i] * p[i];
    }
    ep2 /= m;
    double lhs = var(vwp) - var(w) * ep2;
    double rhs = 2.0 * (cov(a, b) * ep2 - cov(ap, bp));
    double slack = lhs - rhs;
    rep.worst_margin = std::min(rep.worst_margin, slack);
    if (slack < -1e-10) ++rep.violations;
  }
  rep.passed = rep.violations == 0;
  return rep;
}

OracleReport check_dataquality(const PreferenceTask& task, double epsilon_scale,
                               int trials, uint64_t seed,
                               DataqualitySubset subset) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (!(epsilon_scale > 0.0)) throw std::invalid_argument("epsilon_scale must be > 0");
  task.validate();
  int m = task.n_responses;
  // perturbed pairwise probabilities must stay in (0,1)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      double q = task.u(0, i) / (task.u(0, i) + task.u(0, j));
      if (q - epsilon_scale <= 0.0 || q + epsilon_scale >= 1.0)
        throw std::invalid_argument(
            "epsilon_scale too large: perturbed preference would leave (0,1)");
    }

  OracleReport rep;
  rep.name = subset == DataqualitySubset::Whole ? "dataquality_whole"
                                                : "dataquality_subset";
  rep.trials = trials;
  double slack_sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed ^ 0xdadadadaULL, static_cast<uint64_t>(t));
    PolicyTable policy(1, m, 0.0);
    for (int i = 0; i < m; ++i) policy.logit(0, i) = 1.5 * normal(rng);
    std::vector<double> p = policy.probs(0);
    auto [a, b] = alpha_beta(policy, task, 0);

    std::vector<int> subset_idx(m);
    std::iota(subset_idx.begin(), subset_idx.end(), 0);
    if (subset == DataqualitySubset::TopProbabilityHalf) {
      std::sort(subset_idx.begin(), subset_idx.end(),
                [&](int i, int j) { return p[i] * p[i] > p[j] * p[j]; });
      subset_idx.resize(m / 2);
    }
    double ep2_all = 0.0;
    for (int i = 0; i < m; ++i) ep2_all += p[i] * p[i];
    ep2_all /= m;
    double ep2_sub = 0.0;
    for (int i : subset_idx) ep2_sub += p[i] * p[i];
    ep2_sub /= static_cast<double>(subset_idx.size());
    if (ep2_sub + 1e-15 < ep2_all)
      throw std::invalid_argument("subset violates E[p^2] precondition");

    std::vector<double> eps(m);
    for (int i = 0; i < m; ++i) eps[i] = uniform(rng, -epsilon_scale, epsilon_scale);

    auto slack_for = [&](double sign) {
      size_t n0 = subset_idx.size();
      std::vector<double> wc(n0), wp(n0), wcp(n0), wpp(n0);
      for (size_t r = 0; r < n0; ++r) {
        int i = subset_idx[r];
        double wstar = b[i] - a[i];
        // label noise perturbs the aggregate win mass: w = w* + eps, the
        // exact object the statement's variances compare
        double wpert = wstar + sign * eps[i];
        wc[r] = wstar;
        wp[r] = wpert;
        wcp[r] = wstar * p[i];
        wpp[r] = wpert * p[i];
      }
      double lhs = (var(wp) - var(wc)) * ep2_all;
      double rhs = var(wpp) - var(wcp);
      return rhs - lhs;
    };
    // antithetic pair: epsilon-linear terms cancel exactly, leaving the
    // population quantities the statement is about
    slack_sum += 0.5 * (slack_for(1.0) + slack_for(-1.0));
  }
  double mean_slack = slack_sum / trials;
  rep.worst_margin = mean_slack;
  rep.violations = mean_slack < -1e-3 * epsilon_scale * epsilon_scale ? 1 : 0;
  rep.passed = rep.violations == 0;
  rep.details.push_back(fmt("mean slack %.3e (threshold %.3e)", mean_slack,
                            -1e-3 * epsilon_scale * epsilon_scale));
  return rep;
}

OracleReport check_ood_zero(int epochs, uint64_t seed) {
  OracleReport rep;
  rep.name = "ood_zero_absorption";
  rep.trials = epochs;
  Rng rng = make_rng(seed ^ 0x00d00dULL);
  int m = 8;
  RandomInstance inst = random_instance(rng, m, 0.8, 0.8, false, false);
  int ood = uniform_int(rng, m);
  inst.task.mask[ood] = 1;  // never trained
  std::vector<WeightedPair> dataset = expected_pair_dataset(inst.task);

  // dynamics-layer probability vector with an exact zero
  std::vector<double> p = inst.policy.probs(0);
  double z = 1.0 - p[ood];
  p[ood] = 0.0;
  for (double& v : p) v /= z;
  std::vector<double> pb = p;

  DynamicsParams params;
  params.eta = 0.1;
  auto weights_at = [&](const std::vector<double>& probs) {
    std::vector<double> w(m, 0.0);
    for (const WeightedPair& wp : dataset) {
      double kappa = probs[wp.first] / (probs[wp.first] + probs[wp.second]);
      double t = wp.weight * (1.0 - kappa);
      w[wp.first] += t;
      w[wp.second] -= t;
    }
    return w;
  };
  rep.worst_margin = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::vector<double> dp = prob_update_dpo(p, weights_at(p), params);
    for (int i = 0; i < m; ++i) p[i] += dp[i];
    std::vector<double> dpb = prob_update_balanced(pb, weights_at(pb), params);
    for (int i = 0; i < m; ++i) pb[i] += dpb[i];
    if (p[ood] != 0.0 || pb[ood] != 0.0) ++rep.violations;
  }
  rep.details.push_back(fmt("ood response index %g stayed exactly zero over both branches", (double)ood));
  rep.passed = rep.violations == 0;
  return rep;
}

OracleReport check_ood_update(int trials, uint64_t seed, bool aligned_control) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  OracleReport rep;
  rep.name = aligned_control ? "ood_update_aligned_control" : "ood_update_strict";
  rep.trials = trials;
  rep.worst_margin = 1e300;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed ^ 0x0d0d0d0dULL, static_cast<uint64_t>(t));
    int m = 20 + uniform_int(rng, 40);
    RandomInstance inst = aligned_control
                              ? random_instance(rng, m, 1.5, 0.8, true, false)
                              : random_instance(rng, m, 1.5, 0.8, false, true);
    std::vector<double> p = inst.policy.probs(0);
    auto [a, b] = alpha_beta(inst.policy, inst.task, 0);
    double lhs = 0.0, wpsum = 0.0, pmean = 0.0, wnorm = 0.0;
    for (int i = 0; i < m; ++i) {
      double w = b[i] - a[i];
      lhs += w * p[i] * p[i];
      wpsum += w * p[i];
      pmean += p[i];
      wnorm += w * w;
    }
    pmean /= m;
    if (wnorm < 1e-20) {
      ++rep.skipped;  // degenerate w == 0
      continue;
    }
    double slack = wpsum * pmean - lhs;
    rep.worst_margin = std::min(rep.worst_margin, slack);
    if (!(slack > 1e-12)) ++rep.violations;
  }
  // the control demonstrates the independence premise matters; it reports
  // and never fails
  rep.passed = aligned_control ? true : rep.violations == 0;
  if (aligned_control)
    rep.details.push_back(fmt("aligned construction violations: %g / %g",
                              (double)rep.violations, (double)rep.trials));
  return rep;
}

OracleReport check_probupdate(int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  OracleReport rep;
  rep.name = "probupdate_oracle";
  rep.trials = trials;
  rep.worst_margin = 1e300;
  LossSpec dpo;
  DynamicsParams params;
  params.g = 1.0;

  auto rel_err = [](const std::vector<double>& got, const std::vector<double>& ref) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
      num = std::max(num, std::abs(got[i] - ref[i]));
      den = std::max(den, std::abs(ref[i]));
    }
    return den > 0.0 ? num / den : 0.0;
  };

  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed ^ 0x9b9b9b9bULL, static_cast<uint64_t>(t));
    RandomInstance inst = random_instance(rng, 10, 1.5, 1.0, false, false);
    std::vector<double> p = inst.policy.probs(0);
    std::vector<double> w =
        epoch_weights(inst.policy, inst.task, expected_pair_dataset(inst.task), 0);

    params.eta = 1e-4;
    std::vector<double> closed = prob_update_dpo(p, w, params);
    std::vector<double> realized =
        one_step_gradient_oracle(inst.policy, inst.task, dpo, 1e-4)[0];
    double e1 = rel_err(closed, realized);

    params.eta = 5e-5;
    std::vector<double> closed2 = prob_update_dpo(p, w, params);
    std::vector<double> realized2 =
        one_step_gradient_oracle(inst.policy, inst.task, dpo, 5e-5)[0];
    double e2 = rel_err(closed2, realized2);

    if (e1 > 0.01) ++rep.violations;
    if (e1 > 1e-12 && e2 / e1 > 0.6) ++rep.violations;
    rep.worst_margin = std::min(rep.worst_margin, 0.01 - e1);
  }

  // balanced rule in the small-probability regime
  LossSpec balref;
  balref.kind = LossKind::BalancedReference;
  for (int t = 0; t < std::min(trials, 10); ++t) {
    Rng rng = make_rng(seed ^ 0xba1ba1ULL, static_cast<uint64_t>(t));
    RandomInstance inst = random_instance(rng, 100, 0.5, 0.8, false, false);
    std::vector<double> p = inst.policy.probs(0);
    double pmax = 0.0;
    std::vector<double> w =
        epoch_weights(inst.policy, inst.task, expected_pair_dataset(inst.task), 0);
    params.eta = 1e-4;
    std::vector<double> closed = prob_update_balanced(p, w, params, &pmax);
    std::vector<double> realized =
        one_step_gradient_oracle(inst.policy, inst.task, balref, 1e-4)[0];
    double e = rel_err(closed, realized);
    if (pmax > 0.05) {
      ++rep.skipped;  // outside the stated regime
      continue;
    }
    if (e > 0.05) ++rep.violations;
    rep.details.push_back(fmt("balanced small-p: max p %.3f rel err %.4f", pmax, e));
  }
  rep.passed = rep.violations == 0;
  return rep;
}

}  // namespace prefdyn
