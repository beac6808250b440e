#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefdyn/dynamics.hpp"
#include "prefdyn/experiments.hpp"
#include "prefdyn/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prefdyn;

namespace {

constexpr const char* kVersion = "0.1.0";

// echoed into every artifact; generated_at is the only non-reproducible field
json manifest(const std::string& subcommand, const json& flags, uint64_t seed,
              const std::vector<std::string>& outputs) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return json{{"tool", "prefdyn"},       {"version", kVersion},
              {"subcommand", subcommand}, {"flags", flags},
              {"seed", seed},             {"outputs", outputs},
              {"generated_at", stamp}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open output file " + path);
  f << text;
}

void write_csv_with_manifest(const std::string& path, const json& man,
                             const std::string& csv) {
  write_text(path, "# manifest " + man.dump() + "\n" + csv);
}

SamplingKind parse_sampling(const std::string& s) {
  if (s == "uniform") return SamplingKind::Uniform;
  if (s == "shiftless") return SamplingKind::Shiftless;
  throw CLI::ValidationError("--sampling", "must be uniform or shiftless");
}

int cmd_simulate(const std::string& sampling, double mu_p, double mu_q,
                 double sigma2, int n, const std::string& out,
                 const std::string& dynamics_out, const json& flags) {
  GaussianScenario sc;
  sc.mu_p = mu_p;
  sc.mu_q = mu_q;
  sc.sigma2 = sigma2;
  sc.n_responses = n;
  std::string csv = run_gaussian_scenario(sc, parse_sampling(sampling), "");
  write_csv_with_manifest(out, manifest("simulate", flags, 0, {out}), csv);
  if (!dynamics_out.empty()) {
    PreferenceTask task = make_scenario_task(sc);
    PolicyTable policy(1, sc.n_responses, 0.0);
    for (int y = 0; y < sc.n_responses; ++y) {
      double d = static_cast<double>(y) - sc.mu_p;
      policy.logit(0, y) = -d * d / (2.0 * sc.sigma2);
    }
    DynamicsParams params;
    write_csv_with_manifest(dynamics_out,
                            manifest("simulate", flags, 0, {dynamics_out}),
                            dynamics_csv(policy, task, 0, params));
  }
  return 0;
}

int cmd_train(const std::string& loss_name_, double mask, uint64_t seed,
              const std::string& out, double eta, int steps, double clip,
              double alpha, int pairs, const std::string& sampling,
              bool full_batch, bool sweep, int n_seeds, const json& flags) {
  TrainConfig base;
  base.eta = eta;
  base.epochs = steps;
  base.pairs_per_epoch = pairs;
  base.alpha_utility = alpha;
  base.sampling = parse_sampling(sampling);
  base.full_batch = full_batch;

  if (sweep) {
    std::vector<LossSpec> losses;
    for (const char* n : {"dpo", "nbdpo-asym", "nbdpo-sym", "nbdpov2-asym",
                          "nbdpov2-sym", "bdpo"})
      losses.push_back(parse_loss_spec(n, 1.0, clip));
    std::vector<uint64_t> seeds;
    for (int s = 0; s < n_seeds; ++s) seeds.push_back(seed + s);
    auto rows = table1_sweep(losses, {0.0, 0.2, 0.4}, seeds, base);
    write_csv_with_manifest(out, manifest("train", flags, seed, {out}),
                            sweep_to_csv(rows));
    // table-shaped means on stdout
    for (const LossSpec& l : losses) {
      std::cout << loss_name(l);
      for (double m : {0.0, 0.2, 0.4}) {
        double acc = 0.0;
        int cnt = 0;
        for (const auto& r : rows)
          if (r.loss == loss_name(l) && r.mask == m) {
            acc += r.reward.expected_util;
            ++cnt;
          }
        std::cout << "\t" << acc / cnt;
      }
      std::cout << "\n";
    }
    return 0;
  }

  base.loss = parse_loss_spec(loss_name_, 1.0, clip);
  base.mask_rate = mask;
  base.seed = seed;
  PreferenceTask toy = make_toy_task(20, 20, alpha);
  PreferenceTask task =
      mask > 0.0 ? apply_mask(toy, mask, mix_seed(seed, 0x3a5cULL)) : toy;
  ReferencePolicy ref =
      bootstrap_reference(task, base.reference_bootstrap_steps, seed, base.eta,
                          base.sampling, base.full_batch, base.pairs_per_epoch);
  ExperimentReport rep = train(task, ref, base);

  std::string csv_path = out;
  size_t dot = csv_path.find_last_of('.');
  if (dot != std::string::npos) csv_path = csv_path.substr(0, dot);
  csv_path += ".csv";

  std::string policy_path = out;
  size_t dot2 = policy_path.find_last_of('.');
  if (dot2 != std::string::npos) policy_path = policy_path.substr(0, dot2);
  policy_path += ".policy.csv";

  json man = manifest("train", flags, seed, {out, csv_path, policy_path});
  json j = json::parse(rep.to_json());
  j["manifest"] = man.dump();  // single line; the only non-reproducible bytes
  write_text(out, j.dump(2));
  std::vector<SweepRow> row{
      {loss_name(base.loss), mask, seed, eval_reward(rep.final_policy, task)}};
  write_csv_with_manifest(csv_path, man, sweep_to_csv(row));
  write_csv_with_manifest(policy_path, man, policy_to_csv(rep.final_policy));
  return 0;
}

int cmd_verify(const std::string& suite, int trials, uint64_t seed,
               const std::string& out_dir, const json& flags) {
  std::vector<OracleReport> reports;
  auto want = [&](const std::string& name) { return suite == "all" || suite == name; };

  if (want("fym")) reports.push_back(mc_check_fym(trials, seed));
  if (want("fym2")) reports.push_back(mc_check_fym2(trials, seed));
  if (want("variance"))
    reports.push_back(check_variance_bound(std::max(1, trials / 10), seed));
  if (want("dataquality")) {
    PreferenceTask task;
    task.n_prompts = 1;
    task.n_responses = 30;
    task.mask.assign(30, 0);
    task.utility.resize(30);
    Rng rng = make_rng(seed, 0xda7aULL);
    for (int i = 0; i < 30; ++i) task.utility[i] = std::exp(0.8 * normal(rng));
    int t = std::max(1, trials / 10);
    reports.push_back(check_dataquality(task, 0.01, t, seed, DataqualitySubset::Whole));
    reports.push_back(
        check_dataquality(task, 0.01, t, seed, DataqualitySubset::TopProbabilityHalf));
  }
  if (want("distshift")) {
    for (auto [mp, mq] : {std::pair{45.0, 55.0}, {30.0, 70.0}, {48.0, 52.0}}) {
      GaussianScenario sc;
      sc.mu_p = mp;
      sc.mu_q = mq;
      OracleReport rep = check_distshift_extrema(sc);
      rep.name += "_" + std::to_string(static_cast<int>(mp)) + "_" +
                  std::to_string(static_cast<int>(mq));
      reports.push_back(rep);
    }
  }
  if (want("ood")) {
    reports.push_back(check_ood_zero(100, seed));
    reports.push_back(check_ood_update(std::max(1, trials / 10), seed, false));
    reports.push_back(check_ood_update(std::max(1, trials / 20), seed, true));
  }
  if (want("probupdate")) reports.push_back(check_probupdate(50, seed));

  if (reports.empty()) {
    std::cerr << "unknown suite '" << suite << "'\n";
    return 2;
  }

  bool all_passed = true;
  std::vector<std::string> outputs;
  for (const OracleReport& rep : reports) {
    all_passed = all_passed && rep.passed;
    std::cout << (rep.passed ? "PASS " : "FAIL ") << rep.name << " trials="
              << rep.trials << " violations=" << rep.violations
              << " worst_margin=" << rep.worst_margin << "\n";
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::string path = out_dir + "/" + rep.name + ".json";
      json j = json::parse(rep.to_json());
      j["manifest"] = manifest("verify", flags, seed, {path}).dump();
      write_text(path, j.dump(2));
      outputs.push_back(path);
    }
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefdyn: preference-loss gradient dynamics laboratory"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config");
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "w-distribution curves for a Gaussian scenario");
  double mu_p = 45, mu_q = 55, sigma2 = 100;
  int sim_n = 100;
  std::string sim_sampling = "uniform", sim_out, sim_dyn_out;
  sim->add_option("--mu-p", mu_p, "model distribution center")->required();
  sim->add_option("--mu-q", mu_q, "utility center")->required();
  sim->add_option("--sigma2", sigma2, "shared variance")->required();
  sim->add_option("--n", sim_n, "response count")->required();
  sim->add_option("--sampling", sim_sampling, "uniform|shiftless")->required();
  sim->add_option("--out", sim_out, "output csv")->required();
  sim->add_option("--dynamics-out", sim_dyn_out, "optional per-response dynamics dump csv");

  // train
  auto* tr = app.add_subcommand("train", "toy benchmark: single run or full sweep");
  std::string tr_loss = "dpo", tr_out, tr_sampling = "shiftless";
  double tr_mask = 0.0, tr_eta = 2.0, tr_clip = 0.5, tr_alpha = 0.6;
  uint64_t tr_seed = 1;
  int tr_steps = 3000, tr_pairs = 1900, tr_seeds = 5;
  bool tr_sweep = false, tr_full = false;
  tr->add_option("--loss", tr_loss, "dpo|nbdpo-asym|nbdpo-sym|nbdpov2-asym|nbdpov2-sym|bdpo|balanced-ref");
  tr->add_option("--mask", tr_mask, "mask rate in [0,1)");
  tr->add_option("--seed", tr_seed, "root seed");
  tr->add_option("--out", tr_out, "output json (single) or csv (sweep)")->required();
  tr->add_option("--eta", tr_eta, "learning rate on logits");
  tr->add_option("--steps", tr_steps, "training epochs after the bootstrap");
  tr->add_option("--clip", tr_clip, "nbDPO clip (dlambda_max)");
  tr->add_option("--alpha", tr_alpha, "utility sharpness");
  tr->add_option("--pairs", tr_pairs, "pair samples per epoch (0 = one per unmasked pair)");
  tr->add_option("--sampling", tr_sampling, "uniform|shiftless");
  tr->add_flag("--full-batch", tr_full, "deterministic expected batch instead of sampling");
  tr->add_flag("--sweep", tr_sweep, "run the full loss x mask grid");
  tr->add_option("--seeds", tr_seeds, "seed count for --sweep");

  // verify
  auto* ver = app.add_subcommand("verify", "brute-force and Monte-Carlo theorem checks");
  std::string ver_suite = "all", ver_out;
  int ver_trials = 10000;
  uint64_t ver_seed = 1;
  ver->add_option("--suite", ver_suite,
                  "all|fym|fym2|variance|dataquality|distshift|ood|probupdate");
  ver->add_option("--trials", ver_trials, "trial count for the Monte-Carlo checks")
      ->check(CLI::PositiveNumber);
  ver->add_option("--seed", ver_seed, "root seed");
  ver->add_option("--out", ver_out, "directory for per-check json reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  json flags;
  for (int i = 1; i < argc; ++i) flags.push_back(argv[i]);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_sampling, mu_p, mu_q, sigma2, sim_n, sim_out, sim_dyn_out, flags);
    if (tr->parsed())
      return cmd_train(tr_loss, tr_mask, tr_seed, tr_out, tr_eta, tr_steps, tr_clip,
                       tr_alpha, tr_pairs, tr_sampling, tr_full, tr_sweep, tr_seeds,
                       flags);
    if (ver->parsed())
      return cmd_verify(ver_suite, ver_trials, ver_seed, ver_out, flags);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
