// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: acceptance [work_dir]. Exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ganno/env/environment.hpp"
#include "ganno/format.hpp"
#include "ganno/harness/experiment.hpp"
#include "ganno/harness/presets.hpp"
#include "ganno/marl/ppo.hpp"
#include "ganno/nn/network.hpp"
#include "ganno/nn/optim.hpp"
#include "ganno/random.hpp"
#include "ganno/schedules.hpp"
#include "support/oracles.hpp"

using namespace ganno;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " ["
            << fixed(secs, 1) << " s]" << std::endl;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Byte comparison of every regular file under two directories.
bool same_tree(const fs::path& a, const fs::path& b, std::string& diff, int& files) {
  std::set<std::string> names;
  for (const fs::path& root : {a, b}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).generic_string());
    }
  }
  files = static_cast<int>(names.size());
  for (const auto& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n) || read_file(a / n) != read_file(b / n)) {
      diff = n;
      return false;
    }
  }
  return true;
}

void log_line(const std::string& line) { std::cerr << "  " << line << '\n'; }

Outcome difference_reward_identity() {
  int checks = 0;
  for (const auto& name : harness::preset_names()) {
    harness::LoadedEnv le = harness::load_env(harness::preset(name));
    le.config.difference_rewards = true;
    env::Environment e(le.config, le.data);
    const std::vector<int> noop(static_cast<std::size_t>(e.num_agents()), env::kNoOp);
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      e.reset(seed);
      Rng rng(seed);
      for (int step = 0; step < 3 && !e.done(); ++step) {
        if (step == 1) {
          std::vector<int> acts;
          for (int a = 0; a < e.num_agents(); ++a) acts.push_back(1 + static_cast<int>(rng.below(8)));
          e.step(acts);
          continue;
        }
        const env::StepResult r = e.step(noop);
        ++checks;
        if (r.reward != 0.0 || std::signbit(r.reward)) {
          return {false, name + " seed " + std::to_string(seed) + " reward " + exact(r.reward)};
        }
      }
    }
  }
  return {true, std::to_string(checks) + " joint no-op steps over " +
                    std::to_string(harness::preset_names().size()) +
                    " presets, every reward exactly 0"};
}

double gradient_error(const nn::NetworkSpec& spec, std::uint64_t seed, int batch) {
  Rng rng(seed);
  Split data;
  data.shape = spec.input;
  for (std::size_t i = 0; i < batch * spec.input.size(); ++i) {
    data.inputs.push_back(static_cast<float>(rng.uniform()));
  }
  for (int i = 0; i < batch; ++i) data.labels.push_back(i % spec.num_classes);
  nn::NetworkState state = nn::init_state(spec, seed);
  for (auto& layer : state.layers) {
    for (float& b : layer.bias) b = static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  nn::Model model(spec);
  nn::Gradients analytic;
  model.forward_backward(state, data.view(), analytic);
  nn::Model probe(spec);
  const auto numeric = test::finite_difference_gradients(
      state, [&](const nn::NetworkState& s) { return probe.evaluate(s, data.view()).loss; });
  return test::max_relative_error(analytic, numeric);
}

Outcome gradient_oracle() {
  using nn::Activation;
  using nn::LayerKind;
  const std::vector<nn::NetworkSpec> nets = {
      {{16, 1, 1},
       {{LayerKind::dense, 64, 3, Activation::relu, false},
        {LayerKind::dense, 10, 3, Activation::none, false}},
       10},
      {{8, 1, 1},
       {{LayerKind::dense, 16, 3, Activation::relu, false},
        {LayerKind::dense, 4, 3, Activation::none, false}},
       4},
      {{2, 6, 6},
       {{LayerKind::conv2d, 3, 3, Activation::relu, true},
        {LayerKind::dense, 4, 3, Activation::none, false}},
       4},
      {{1, 5, 5},
       {{LayerKind::conv2d, 2, 5, Activation::relu, false},
        {LayerKind::conv2d, 2, 3, Activation::relu, true},
        {LayerKind::dense, 3, 3, Activation::none, false}},
       3},
      {{1, 8, 8},
       {{LayerKind::conv2d, 4, 3, Activation::relu, true},
        {LayerKind::conv2d, 4, 3, Activation::relu, true},
        {LayerKind::dense, 8, 3, Activation::relu, false},
        {LayerKind::dense, 3, 3, Activation::none, false}},
       3},
  };
  double worst = 0.0;
  std::size_t largest = 0;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const std::size_t params = nn::Model(nets[i]).parameter_count();
    if (params > 2000) return {false, "network " + std::to_string(i) + " too large"};
    largest = std::max(largest, params);
    for (std::uint64_t seed : {1u, 2u, 3u}) worst = std::max(worst, gradient_error(nets[i], seed, 4));
  }
  return {worst < 1e-4, std::to_string(nets.size()) + " dense/conv/pool networks (<= " +
                            std::to_string(largest) + " params), max relative error " +
                            exact(worst) + " (< 1e-4)"};
}

Outcome gae_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(1 + rng.below(64));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = rng.normal();
      v[t] = rng.normal();
      d[t] = rng.uniform() < 0.1 ? 1 : 0;
    }
    const double bootstrap = rng.uniform() < 0.5 ? 0.0 : rng.normal();
    const double gamma = rng.uniform(0.5, 1.0);
    const double lambda = rng.uniform(0.0, 1.0);
    const marl::GaeResult g = marl::compute_gae(r, v, d, bootstrap, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      const double want = test::brute_force_advantage(r, v, d, bootstrap, gamma, lambda, t);
      worst = std::max(worst, std::abs(g.advantages[t] - want));
      worst = std::max(worst, std::abs(g.returns[t] - (want + v[t])));
    }
  }
  return {worst <= 1e-10, "1000 trajectories, max abs error " + exact(worst) + " (<= 1e-10)"};
}

Outcome action_semantics() {
  const double lr_max = 0.5;
  int clamped_low = 0, clamped_high = 0;
  for (int i = 0; i < 1000; ++i) {
    const double a = i == 0 ? 0.0 : lr_max * std::pow(10.0, -7.0 * (999 - i) / 998.0);
    const double raw[env::kNumActions] = {a,          a * 1.01,   a * 1.10,
                                          a / 1.01,   a / 1.10,   a + 0.0005,
                                          a - 0.0005, a + 0.001,  a - 0.001};
    for (int id = 0; id < env::kNumActions; ++id) {
      const double want = std::min(std::max(raw[id], 0.0), lr_max);
      clamped_low += raw[id] < 0.0;
      clamped_high += raw[id] > lr_max;
      const double got = env::apply_action(a, id, lr_max);
      if (got != want) {
        return {false, "action " + std::string(env::kActions[id].name) + " at " + exact(a) +
                           " gave " + exact(got) + ", expected " + exact(want)};
      }
    }
  }
  return {clamped_low > 0 && clamped_high > 0,
          "9 actions x 1000 rates exact; " + std::to_string(clamped_low) + " clamped at 0, " +
              std::to_string(clamped_high) + " at lr_max"};
}

Outcome initial_condition_sampler() {
  const env::EnvConfig c = harness::preset("mlp2");
  std::vector<double> logs;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto ic = env::sample_initial_conditions(c, seed);
    if (ic.lr < 1e-5 || ic.lr > 1e-2) return {false, "sample out of bounds: " + exact(ic.lr)};
    logs.push_back(std::log10(ic.lr));
  }
  const double d = test::ks_uniform(logs, -5.0, -2.0);
  return {d < 0.02, "10000 draws within [1e-5, 1e-2], KS statistic " + fixed(d, 5) + " (< 0.02)"};
}

// Directions come from a real LAMB step; both the optimizer's record and
// layer_stats are checked against long-double norms.
Outcome trust_ratio() {
  Rng rng(99);
  nn::NetworkState state;
  nn::Gradients grads;
  for (int l = 0; l < 100; ++l) {
    const auto n = static_cast<std::size_t>(1 + rng.below(400));
    const double ws = std::pow(10.0, rng.uniform(-2.0, 0.5));
    nn::LayerParams p;
    nn::LayerGrads g;
    for (std::size_t i = 0; i < n; ++i) {
      p.weights.push_back(static_cast<float>(ws * rng.normal()));
      g.weights.push_back(rng.normal());
    }
    p.m_weights.assign(n, 0.0f);
    p.v_weights.assign(n, 0.0f);
    state.layers.push_back(std::move(p));
    grads.push_back(std::move(g));
  }
  nn::OptimConfig cfg;
  cfg.optimizer = nn::OptimizerKind::lamb;
  cfg.weight_decay = 0.01;
  nn::NetworkState stepped = state;
  nn::StepRecord record;
  // Warm the moments so the direction is not just sign(g).
  for (int k = 0; k < 3; ++k) {
    state = stepped;
    nn::lamb_step(stepped, grads, std::vector<double>(100, 1e-3), cfg, &record);
    for (auto& g : grads) {
      for (double& v : g.weights) v = 0.5 * v + rng.normal();
    }
  }
  const auto stats = nn::layer_stats(state, grads, record);
  double worst = 0.0, largest = 0.0;
  for (std::size_t l = 0; l < stats.size(); ++l) {
    const long double wn = test::reference_stats(state.layers[l].weights).norm;
    const long double un = test::reference_stats(record[l].direction).norm;
    const double want = static_cast<double>(wn / un);
    largest = std::max(largest, want);
    worst = std::max(worst, std::abs(stats[l].trust_ratio - want));
    worst = std::max(worst, std::abs(record[l].trust_ratio - want));
  }
  return {worst <= 1e-12, "100 layers (ratios up to " + fixed(largest, 3) +
                              "), max abs error " + exact(worst) + " (<= 1e-12)"};
}

Outcome schedule_closed_forms() {
  using schedules::lr_at;
  using schedules::ScheduleKind;
  using schedules::ScheduleSpec;
  auto make = [](ScheduleKind kind, double lr, std::int64_t steps) {
    ScheduleSpec s;
    s.kind = kind;
    s.base_lr = lr;
    s.total_steps = steps;
    return s;
  };
  double worst = 0.0;
  int points = 0;
  auto expect = [&](const ScheduleSpec& s, std::int64_t t, double want) {
    worst = std::max(worst, std::abs(lr_at(s, t) - want));
    ++points;
  };

  const auto constant = make(ScheduleKind::constant, 0.003, 500);
  for (std::int64_t t : {0, 250, 500}) expect(constant, t, 0.003);

  auto linear = make(ScheduleKind::linear, 0.001, 300);
  expect(linear, 0, 0.001);
  expect(linear, 150, 0.0005);
  expect(linear, 300, 0.0);

  const auto cosine = make(ScheduleKind::cosine, 0.01, 1000);
  expect(cosine, 0, 0.01);
  expect(cosine, 500, 0.005);
  expect(cosine, 1000, 0.0);

  const auto sgdr = make(ScheduleKind::sgdr, 0.004, 400);
  expect(sgdr, 0, 0.004);
  for (std::int64_t r : schedules::sgdr_restarts(sgdr)) expect(sgdr, r, 0.004);
  expect(sgdr, 50, 0.002);
  expect(sgdr, 350, 0.002);
  const bool restarts_ok =
      schedules::sgdr_restarts(sgdr) == std::vector<std::int64_t>{100, 200, 300, 400};

  for (ScheduleKind kind : {ScheduleKind::cosine_one_cycle, ScheduleKind::warmup_cosine}) {
    const auto s = make(kind, 0.002, 500);
    expect(s, 0, 0.002 * 1e-3);
    expect(s, s.warmup_steps(), 0.002);
    expect(s, 500, 0.0);
  }

  bool monotone = true;
  for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::quadratic, ScheduleKind::cosine,
                            ScheduleKind::exponential, ScheduleKind::piecewise}) {
    const auto s = make(kind, 0.01, 1234);
    for (std::int64_t t = 1; t <= 1234; ++t) monotone = monotone && lr_at(s, t) <= lr_at(s, t - 1);
  }
  return {worst <= 1e-12 && monotone && restarts_ok,
          std::to_string(points) + " endpoint values, max abs error " + exact(worst) +
              " (<= 1e-12); decay family " + (monotone ? "monotone" : "NOT monotone") +
              "; SGDR restarts " + (restarts_ok ? "as configured" : "wrong")};
}

// The grid shared by the behavioural checks.
harness::ExperimentConfig behaviour_config() {
  harness::ExperimentConfig cfg;
  cfg.mode = harness::Mode::ablate;
  cfg.train_env = harness::preset("mlp2");
  cfg.eval_env = cfg.train_env;
  cfg.ppo.total_timesteps = 2000;
  cfg.grid_lrs = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  cfg.grid_weight_decays = {0.01};
  cfg.seeds = 3;
  cfg.seed = 0;
  cfg.metric = "val";
  cfg.random_baseline = true;
  harness::Baseline constant;
  constant.name = "constant";
  cfg.baselines = {constant};
  cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cfg;
}

// Distinct per-layer lr sequences in one episode trace.
int distinct_schedules(const std::vector<env::TraceRow>& trace) {
  if (trace.empty()) return 0;
  std::set<std::vector<double>> seqs;
  for (std::size_t l = 0; l < trace.front().layer_lrs.size(); ++l) {
    std::vector<double> s;
    for (const auto& row : trace) s.push_back(row.layer_lrs[l]);
    seqs.insert(s);
  }
  return static_cast<int>(seqs.size());
}

harness::ExperimentConfig depth_config(const fs::path& policies, bool greedy) {
  harness::ExperimentConfig cfg = behaviour_config();
  cfg.mode = harness::Mode::evaluate;
  cfg.eval_env = harness::preset("cnn5");
  cfg.policy = policies;
  cfg.random_baseline = false;
  cfg.greedy = greedy;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "ganno_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  report("difference-reward identity", difference_reward_identity);
  report("gradient oracle", gradient_oracle);
  report("GAE oracle", gae_oracle);
  report("action semantics", action_semantics);
  report("initial-condition sampler", initial_condition_sampler);
  report("trust ratio", trust_ratio);
  report("schedule closed forms", schedule_closed_forms);

  // One ablate-mode run trains full GANNO and the three masked variants on the
  // 2-layer preset and evaluates them with the random and constant baselines.
  std::cerr << "training and evaluating the behaviour grid\n";
  harness::ExperimentResult behaviour;
  std::string behaviour_error;
  try {
    behaviour = harness::run_experiment(behaviour_config(), work / "behaviour", log_line);
  } catch (const std::exception& e) {
    behaviour_error = e.what();
  }
  auto need_behaviour = [&] {
    if (!behaviour_error.empty()) throw std::runtime_error(behaviour_error);
  };

  report("depth generalisation", [&]() -> Outcome {
    need_behaviour();
    const auto cfg = depth_config(work / "behaviour/policies/ganno", true);
    const auto r = harness::run_experiment(cfg, work / "depth");
    int lo = 1 << 30, hi = 0, episodes = 0, layers = 0;
    for (const auto& e : r.episodes) {
      if (e.cell.method != "ganno") continue;
      const int d = distinct_schedules(e.trace);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      layers = static_cast<int>(e.trace.front().layer_lrs.size());
      ++episodes;
    }
    const auto& table = r.table;
    std::string detail = "0 interface errors, " + std::to_string(episodes) +
                         " greedy episodes on the " + std::to_string(layers) +
                         "-layer preset, distinct per-layer schedules per episode min " +
                         std::to_string(lo) + " max " + std::to_string(hi) +
                         " (need 5); val acc ganno " +
                         fixed(table.average("ganno")->mean_acc, 2) + " vs constant " +
                         fixed(table.average("constant")->mean_acc, 2);
    const auto sampled = harness::run_experiment(
        depth_config(work / "behaviour/policies/ganno", false));
    int sampled_hi = 0;
    for (const auto& e : sampled.episodes) {
      if (e.cell.method == "ganno") sampled_hi = std::max(sampled_hi, distinct_schedules(e.trace));
    }
    detail += "; sampled actions reach " + std::to_string(sampled_hi) + " (informational)";
    return {layers == 5 && lo == 5, detail};
  });

  report("learning signal", [&]() -> Outcome {
    need_behaviour();
    const auto& t = behaviour.table;
    const double g = t.average("ganno")->mean_acc;
    const double r = t.average("random")->mean_acc;
    const double c = t.average("constant")->mean_acc;
    return {g >= r + 2.0 && g >= c - 1.0,
            "mean final val acc over 3 seeds: ganno " + fixed(g, 2) + ", random " + fixed(r, 2) +
                " (need <= " + fixed(g - 2.0, 2) + "), constant " + fixed(c, 2) +
                " (need <= " + fixed(g + 1.0, 2) + ")"};
  });

  report("ablation ordering", [&]() -> Outcome {
    need_behaviour();
    std::vector<harness::CellResult> cells;
    for (const auto& e : behaviour.episodes) {
      harness::CellResult c = e.cell;
      c.accuracy = e.final_test_acc;
      cells.push_back(c);
    }
    const auto t = harness::aggregate(cells, 3);
    const double full = t.average("ganno")->mean_acc;
    bool ok = true;
    std::string detail = "average test acc over the lr grid: ganno " + fixed(full, 2);
    for (const char* m : {"ganno_lr_only", "ganno_timestep_only", "ganno_single_agent_global"}) {
      const double v = t.average(m)->mean_acc;
      ok = ok && full >= v - 0.5;
      detail += std::string(", ") + m + " " + fixed(v, 2);
    }
    return {ok, detail + " (ties within 0.5)"};
  });

  report("determinism", [&]() -> Outcome {
    need_behaviour();
    // Rerun the depth evaluation job and a short training job from scratch.
    harness::run_experiment(depth_config(work / "behaviour/policies/ganno", true),
                            work / "depth_rerun");
    harness::ExperimentConfig small = behaviour_config();
    small.mode = harness::Mode::train;
    small.ppo.total_timesteps = 256;
    small.seeds = 1;
    small.grid_lrs = {1e-3};
    for (const char* dir : {"train_a", "train_b"}) harness::run_experiment(small, work / dir);
    std::string diff;
    int depth_files = 0, train_files = 0;
    if (!same_tree(work / "depth", work / "depth_rerun", diff, depth_files)) {
      return {false, "evaluation rerun differs in " + diff};
    }
    if (!same_tree(work / "train_a", work / "train_b", diff, train_files)) {
      return {false, "training rerun differs in " + diff};
    }
    return {true, "evaluation rerun (" + std::to_string(depth_files) + " files) and training rerun (" +
                      std::to_string(train_files) + " files) byte-identical"};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
