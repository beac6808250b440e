#include "prefdyn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "prefdyn/dynamics.hpp"

namespace prefdyn {

namespace {

struct BatchItem {
  int x;
  int winner;
  int loser;
  double weight;
};

// One mean-gradient descent step; returns dataset-mean probability-space
// gradients for the balance diagnostics.
void apply_batch(PolicyTable& policy, const std::vector<std::vector<double>>& lpref,
                 const LossSpec& spec, const std::vector<BatchItem>& batch,
                 double eta, double* gw_out, double* gl_out) {
  int P = policy.n_prompts();
  int R = policy.n_responses();
  std::vector<std::vector<double>> lp(P), probs(P);
  for (int x = 0; x < P; ++x) {
    lp[x] = policy.log_probs(x);
    probs[x].resize(R);
    for (int y = 0; y < R; ++y) probs[x][y] = std::exp(lp[x][y]);
  }
  std::vector<std::vector<double>> direct(P, std::vector<double>(R, 0.0));
  std::vector<double> chain(P, 0.0);
  double total_w = 0.0, gw_mean = 0.0, gl_mean = 0.0;
  for (const BatchItem& it : batch) {
    LossEval e = eval_loss(spec, lp[it.x][it.winner], lp[it.x][it.loser],
                           lpref[it.x][it.winner], lpref[it.x][it.loser]);
    if (!std::isfinite(e.value))
      throw std::runtime_error("NaN/inf loss at prompt " + std::to_string(it.x));
    double pw = probs[it.x][it.winner];
    double pl = probs[it.x][it.loser];
    if (spec.kind == LossKind::BalancedReference) {
      // gradient rule: only the two pair logits move
      direct[it.x][it.winner] += it.weight * e.grad_logpi_w * (1.0 - pw + pl);
      direct[it.x][it.loser] += it.weight * e.grad_logpi_l * (1.0 - pl + pw);
    } else {
      direct[it.x][it.winner] += it.weight * e.grad_logpi_w;
      direct[it.x][it.loser] += it.weight * e.grad_logpi_l;
      chain[it.x] += it.weight * (e.grad_logpi_w + e.grad_logpi_l);
    }
    gw_mean += it.weight * e.grad_logpi_w / pw;
    gl_mean += it.weight * e.grad_logpi_l / pl;
    total_w += it.weight;
  }
  for (int x = 0; x < P; ++x)
    for (int y = 0; y < R; ++y) {
      double dLds = direct[x][y] - probs[x][y] * chain[x];
      policy.logit(x, y) -= eta * dLds;
    }
  if (gw_out) *gw_out = gw_mean / total_w;
  if (gl_out) *gl_out = gl_mean / total_w;
}

// expected full batch under the scheme, normalized to mean weights with
// every prompt carrying equal mass
std::vector<BatchItem> expected_batch(const PreferenceTask& task,
                                      const PolicyTable& policy,
                                      SamplingKind sampling) {
  SamplingScheme scheme{sampling, &policy};
  std::vector<WeightedPair> ds = expected_pair_dataset(task, scheme);
  std::vector<double> prompt_mass(task.n_prompts, 0.0);
  for (const WeightedPair& wp : ds) prompt_mass[wp.x] += wp.weight;
  std::vector<BatchItem> batch;
  batch.reserve(ds.size());
  for (const WeightedPair& wp : ds)
    batch.push_back({wp.x, wp.first, wp.second,
                     wp.weight / prompt_mass[wp.x] / task.n_prompts});
  return batch;
}

// Pair lists and Bradley-Terry odds are fixed per task; only the shiftless
// weights track the live policy. Cached so per-epoch sampling stays cheap.
struct EpochSampler {
  const PreferenceTask* task = nullptr;
  std::vector<std::vector<std::pair<int, int>>> pairs;
  std::vector<std::vector<double>> q;    // P(first beats second)
  std::vector<std::vector<double>> cdf;

  explicit EpochSampler(const PreferenceTask& t) : task(&t) {
    pairs.resize(t.n_prompts);
    q.resize(t.n_prompts);
    cdf.resize(t.n_prompts);
    for (int x = 0; x < t.n_prompts; ++x) {
      for (int i = 0; i < t.n_responses; ++i) {
        if (t.masked(x, i)) continue;
        for (int j = i + 1; j < t.n_responses; ++j) {
          if (t.masked(x, j)) continue;
          pairs[x].emplace_back(i, j);
          q[x].push_back(t.u(x, i) / (t.u(x, i) + t.u(x, j)));
        }
      }
      cdf[x].resize(pairs[x].size());
    }
  }

  void refresh(const PolicyTable& policy, SamplingKind sampling) {
    for (int x = 0; x < task->n_prompts; ++x) {
      double acc = 0.0;
      if (sampling == SamplingKind::Uniform) {
        for (size_t k = 0; k < pairs[x].size(); ++k) cdf[x][k] = acc += 1.0;
      } else {
        std::vector<double> p = policy.probs(x);
        for (size_t k = 0; k < pairs[x].size(); ++k)
          cdf[x][k] = acc += p[pairs[x][k].first] * p[pairs[x][k].second];
      }
    }
  }

  void draw(int n, Rng& rng, std::vector<BatchItem>& batch) const {
    batch.clear();
    batch.reserve(n);
    double w = 1.0 / static_cast<double>(n);
    for (int s = 0; s < n; ++s) {
      int x = uniform_int(rng, task->n_prompts);
      double r = uniform01(rng) * cdf[x].back();
      size_t k = std::upper_bound(cdf[x].begin(), cdf[x].end(), r) - cdf[x].begin();
      if (k >= pairs[x].size()) k = pairs[x].size() - 1;
      auto [a, b] = pairs[x][k];
      if (bernoulli(rng, q[x][k]))
        batch.push_back({x, a, b, w});
      else
        batch.push_back({x, b, a, w});
    }
  }
};

int default_pairs_per_epoch(const PreferenceTask& task) {
  long total = 0;
  for (int x = 0; x < task.n_prompts; ++x) {
    long c = task.unmasked_count(x);
    total += c * (c - 1) / 2;
  }
  return static_cast<int>(total);
}

PolicyTable train_policy(const PreferenceTask& task, const PolicyTable& start,
                         const std::vector<std::vector<double>>& lpref,
                         const TrainConfig& cfg, ExperimentReport* report) {
  PolicyTable policy = start;
  int ppe = cfg.pairs_per_epoch > 0 ? cfg.pairs_per_epoch
                                    : default_pairs_per_epoch(task);
  EpochSampler sampler(task);
  Rng rng = make_rng(cfg.seed, 0xe70000ULL);
  std::vector<BatchItem> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.full_batch) {
      batch = expected_batch(task, policy, cfg.sampling);
    } else {
      sampler.refresh(policy, cfg.sampling);
      sampler.draw(ppe, rng, batch);
    }
    double gw = 0.0, gl = 0.0;
    apply_batch(policy, lpref, cfg.loss, batch, cfg.eta, &gw, &gl);
    if (report) {
      report->steps.push_back(epoch);
      report->reward_trajectory.push_back(eval_reward(policy, task));
      report->g_w.push_back(gw);
      report->g_l.push_back(gl);
    }
  }
  return policy;
}

}  // namespace

RewardPair eval_reward(const PolicyTable& policy, const PreferenceTask& task) {
  RewardPair r;
  for (int x = 0; x < task.n_prompts; ++x) {
    std::vector<double> p = policy.probs(x);
    for (int y = 0; y < task.n_responses; ++y) {
      double d = static_cast<double>(y) - static_cast<double>(x);
      r.neg_sqdist += p[y] * -(d * d);
      r.expected_util += p[y] * task.u(x, y);
    }
  }
  r.neg_sqdist /= task.n_prompts;
  r.expected_util /= task.n_prompts;
  return r;
}

ReferencePolicy bootstrap_reference(const PreferenceTask& task, int steps,
                                    uint64_t seed, double eta,
                                    SamplingKind sampling, bool full_batch,
                                    int pairs_per_epoch) {
  if (steps < 0) throw std::invalid_argument("bootstrap steps must be >= 0");
  PolicyTable policy = masked_uniform_init(task);
  std::vector<std::vector<double>> lpref(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) lpref[x] = policy.log_probs(x);

  TrainConfig cfg;
  cfg.loss = LossSpec{};  // baseline DPO against the uniform reference
  cfg.eta = eta;
  cfg.epochs = steps;
  cfg.pairs_per_epoch = pairs_per_epoch;
  cfg.seed = mix_seed(seed, 0xb007ULL);
  cfg.sampling = sampling;
  cfg.full_batch = full_batch;
  PolicyTable trained = train_policy(task, policy, lpref, cfg, nullptr);
  return ReferencePolicy(trained);
}

ExperimentReport train(const PreferenceTask& task, const ReferencePolicy& reference,
                       const TrainConfig& config) {
  task.validate();
  if (!(config.eta >= 0.0)) throw std::invalid_argument("eta must be nonnegative");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  ExperimentReport report;
  report.config = config;
  std::vector<std::vector<double>> lpref(task.n_prompts);
  for (int x = 0; x < task.n_prompts; ++x) lpref[x] = reference.log_probs(x);
  report.final_policy =
      train_policy(task, reference.table(), lpref, config, &report);
  return report;
}

std::string run_gaussian_scenario(const GaussianScenario& scenario,
                                  SamplingKind sampling,
                                  const std::string& out_path) {
  PreferenceTask task = make_scenario_task(scenario);
  PolicyTable policy(1, scenario.n_responses, 0.0);
  for (int y = 0; y < scenario.n_responses; ++y) {
    double d = static_cast<double>(y) - scenario.mu_p;
    policy.logit(0, y) = -d * d / (2.0 * scenario.sigma2);
  }
  SamplingScheme scheme{sampling, &policy};
  std::vector<WeightedPair> dataset = expected_pair_dataset(task, scheme);
  std::vector<double> w = epoch_weights(policy, task, dataset, 0);
  std::vector<double> p = policy.probs(0);

  std::ostringstream os;
  os << "y,p,u,w_dpo,w_balanced\n";
  char buf[200];
  for (int y = 0; y < scenario.n_responses; ++y) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", y, p[y],
                  task.u(0, y), w[y], w[y] * p[y]);
    os << buf;
  }
  std::string csv = os.str();
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot open " + out_path);
    f << csv;
  }
  return csv;
}

std::vector<SweepRow> table1_sweep(const std::vector<LossSpec>& losses,
                                   const std::vector<double>& mask_rates,
                                   const std::vector<uint64_t>& seeds,
                                   const TrainConfig& base) {
  PreferenceTask toy = make_toy_task(20, 20, base.alpha_utility);
  // one (mask, seed) cell per task; cells are independent and deterministic,
  // so they run in parallel and land in a fixed order
  struct Cell {
    double mask_rate;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double m : mask_rates)
    for (uint64_t s : seeds) cells.push_back({m, s});

  auto run_cell = [&](const Cell& cell) {
    PreferenceTask task = cell.mask_rate > 0.0
                              ? apply_mask(toy, cell.mask_rate,
                                           mix_seed(cell.seed, 0x3a5cULL))
                              : toy;
    ReferencePolicy ref = bootstrap_reference(
        task, base.reference_bootstrap_steps, cell.seed, base.eta, base.sampling,
        base.full_batch, base.pairs_per_epoch);
    std::vector<SweepRow> out;
    for (const LossSpec& loss : losses) {
      TrainConfig cfg = base;
      cfg.loss = loss;
      cfg.mask_rate = cell.mask_rate;
      cfg.seed = cell.seed;  // identical sample stream for every loss in the cell
      ExperimentReport rep = train(task, ref, cfg);
      out.push_back(SweepRow{loss_name(loss), cell.mask_rate, cell.seed,
                             eval_reward(rep.final_policy, task)});
    }
    return out;
  };

  std::vector<std::future<std::vector<SweepRow>>> futures;
  futures.reserve(cells.size());
  for (const Cell& cell : cells)
    futures.push_back(std::async(std::launch::async, run_cell, cell));
  std::vector<SweepRow> rows;
  for (auto& f : futures)
    for (SweepRow& r : f.get()) rows.push_back(std::move(r));
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "loss,mask,seed,reward_negsq,reward_util\n";
  char buf[200];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%.17g,%.17g\n", r.loss.c_str(),
                  r.mask, static_cast<unsigned long long>(r.seed),
                  r.reward.neg_sqdist, r.reward.expected_util);
    os << buf;
  }
  return os.str();
}

double spearman(const std::vector<double>& values) {
  size_t n = values.size();
  std::vector<double> rank(n);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = 0.5 * (i + j);  // average rank over ties
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double mr = 0.0, mt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mr += rank[i];
    mt += static_cast<double>(i);
  }
  mr /= n;
  mt /= n;
  double num = 0.0, dr = 0.0, dt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    num += (rank[i] - mr) * (static_cast<double>(i) - mt);
    dr += (rank[i] - mr) * (rank[i] - mr);
    dt += (static_cast<double>(i) - mt) * (static_cast<double>(i) - mt);
  }
  if (dr == 0.0 || dt == 0.0) return std::nan("");
  return num / std::sqrt(dr * dt);
}

BalanceTrajectory gradient_balance_trajectory(const ExperimentReport& report) {
  if (report.g_w.size() < 3)
    throw std::invalid_argument("need at least 3 epochs for the trend diagnostic");
  BalanceTrajectory out;
  out.spearman_g_w = spearman(report.g_w);
  out.spearman_g_l = spearman(report.g_l);
  if (std::isnan(out.spearman_g_w) || std::isnan(out.spearman_g_l)) {
    out.degenerate = true;
    out.spearman_g_w = 0.0;
    out.spearman_g_l = 0.0;
  }
  return out;
}

std::string ExperimentReport::to_json() const {
  nlohmann::json j;
  j["config"] = {
      {"loss", loss_name(config.loss)},
      {"beta", config.loss.beta},
      {"clip_max", config.loss.clip_max},
      {"eta", config.eta},
      {"epochs", config.epochs},
      {"pairs_per_epoch", config.pairs_per_epoch},
      {"mask_rate", config.mask_rate},
      {"alpha_utility", config.alpha_utility},
      {"reference_bootstrap_steps", config.reference_bootstrap_steps},
      {"seed", config.seed},
      {"sampling", config.sampling == SamplingKind::Uniform ? "uniform" : "shiftless"},
      {"full_batch", config.full_batch},
  };
  nlohmann::json traj = nlohmann::json::array();
  for (size_t i = 0; i < reward_trajectory.size(); ++i)
    traj.push_back({steps[i], reward_trajectory[i].neg_sqdist,
                    reward_trajectory[i].expected_util});
  j["reward_trajectory"] = traj;
  nlohmann::json gb = nlohmann::json::array();
  for (size_t i = 0; i < g_w.size(); ++i) gb.push_back({steps[i], g_w[i], g_l[i]});
  j["gradient_balance"] = gb;
  j["final_policy"] = final_policy.logits();
  j["final_policy_shape"] = {final_policy.n_prompts(), final_policy.n_responses()};
  return j.dump();
}

}  // namespace prefdyn
