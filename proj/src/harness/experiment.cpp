#include "ganno/harness/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "ganno/errors.hpp"
#include "ganno/format.hpp"
#include "ganno/harness/pool.hpp"
#include "ganno/harness/presets.hpp"
#include "ganno/random.hpp"

namespace ganno::harness {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::train: return "train";
    case Mode::evaluate: return "evaluate";
    case Mode::baseline: return "baseline";
    case Mode::ablate: return "ablate";
  }
  return "train";
}

Mode mode_from_string(const std::string& name) {
  if (name == "train") return Mode::train;
  if (name == "evaluate") return Mode::evaluate;
  if (name == "baseline") return Mode::baseline;
  if (name == "ablate") return Mode::ablate;
  throw ConfigError("unknown mode '" + name + "'");
}

std::string method_name(env::AblationMode mode) {
  return mode == env::AblationMode::full ? "ganno" : "ganno_" + env::to_string(mode);
}

std::uint64_t training_seed(std::uint64_t base, int k) {
  return derive_seed(base, 2 * static_cast<std::uint64_t>(k));
}

std::uint64_t episode_seed(std::uint64_t base, int k) {
  return derive_seed(base, 2 * static_cast<std::uint64_t>(k) + 1);
}

RunError::RunError(std::string kind, std::string context, const std::string& message)
    : std::runtime_error(context + ": " + message),
      kind_(std::move(kind)),
      context_(std::move(context)) {}

std::string error_kind(const std::exception& e) {
  if (const auto* r = dynamic_cast<const RunError*>(&e)) return r->kind();
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const DecodeError*>(&e)) return "DecodeError";
  if (dynamic_cast<const LoadError*>(&e)) return "LoadError";
  if (dynamic_cast<const ContractViolation*>(&e)) return "ContractViolation";
  if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
  if (dynamic_cast<const AggregationError*>(&e)) return "AggregationError";
  return "Error";
}

namespace {

bool is_trained_method(const std::string& method) {
  return method == "ganno" || method.rfind("ganno_", 0) == 0;
}

env::AblationMode trained_ablation(const std::string& method) {
  return method == "ganno" ? env::AblationMode::full
                           : env::ablation_mode_from_string(method.substr(6));
}

// Datasets are generated or read once per data configuration.
std::shared_ptr<const Dataset> shared_dataset(const env::EnvConfig& cfg,
                                              env::EnvConfig& resolved) {
  static std::mutex mu;
  static std::map<std::string, LoadedEnv> cache;
  const std::string key = to_json(cfg.data).dump() + to_json(cfg.network).dump();
  {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = cache.find(key);
    if (it != cache.end()) {
      resolved.network = it->second.config.network;
      return it->second.data;
    }
  }
  LoadedEnv loaded = load_env(cfg);
  resolved.network = loaded.config.network;
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, std::move(loaded)).first->second.data;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw LoadError("cannot write " + path.string());
}

std::string cell_context(const CellResult& c) {
  return c.method + " lr=" + exact(c.lr) + " wd=" + exact(c.weight_decay) +
         " seed=" + std::to_string(c.seed);
}

std::string trace_name(const CellResult& c) {
  return c.method + "/lr_" + exact(c.lr) + "_wd_" + exact(c.weight_decay) + "_seed_" +
         std::to_string(c.seed);
}

[[noreturn]] void rethrow_with_context(const std::exception_ptr& err,
                                       const std::string& context) {
  try {
    std::rethrow_exception(err);
  } catch (const std::exception& e) {
    throw RunError(error_kind(e), context, e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (grid_lrs.empty() || grid_weight_decays.empty()) {
    throw ConfigError("evaluation grid must be nonempty");
  }
  for (double lr : grid_lrs) {
    if (!(lr > 0.0)) throw ConfigError("grid learning rates must be positive");
  }
  for (double wd : grid_weight_decays) {
    if (!(wd >= 0.0)) throw ConfigError("grid weight decays must be >= 0");
  }
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (metric != "test" && metric != "val") throw ConfigError("metric must be test or val");
  train_env.validate();
  eval_env.validate();
  ppo.validate();
  std::vector<std::string> names;
  for (const auto& b : baselines) {
    if (b.name.empty() || b.name == "random" || is_trained_method(b.name)) {
      throw ConfigError("baseline name '" + b.name + "' is empty or reserved");
    }
    if (std::find(names.begin(), names.end(), b.name) != names.end()) {
      throw ConfigError("duplicate baseline name '" + b.name + "'");
    }
    names.push_back(b.name);
  }
  if (mode == Mode::evaluate && policy.empty()) {
    throw ConfigError("evaluate mode needs a policy directory");
  }
  if (mode == Mode::baseline && baselines.empty() && !random_baseline) {
    throw ConfigError("baseline mode needs at least one baseline");
  }
  if (mode == Mode::ablate && ablations.empty()) {
    throw ConfigError("ablate mode needs at least one ablation");
  }
}

ExperimentConfig experiment_from_json(const Json& j) {
  const char* ctx = "experiment";
  check_keys(j, {"mode", "train_env", "eval_env", "ppo", "baselines", "random_baseline",
                 "ablations", "grid", "seeds", "seed", "metric", "policy", "workers",
                 "greedy", "write_traces"},
             ctx);
  ExperimentConfig c;
  std::string mode = to_string(c.mode);
  read(j, "mode", mode, ctx);
  c.mode = mode_from_string(mode);
  if (j.contains("train_env")) c.train_env = env_config_from_json(j["train_env"]);
  if (j.contains("eval_env")) c.eval_env = env_config_from_json(j["eval_env"]);
  if (!j.contains("train_env") && !j.contains("eval_env")) {
    throw ConfigError("experiment needs train_env or eval_env");
  }
  if (!j.contains("eval_env")) c.eval_env = c.train_env;
  if (!j.contains("train_env")) c.train_env = c.eval_env;
  if (j.contains("ppo")) c.ppo = ppo_from_json(j["ppo"]);
  if (j.contains("baselines")) {
    if (!j["baselines"].is_array()) throw ConfigError("experiment.baselines: expected a list");
    for (Json b : j["baselines"]) {
      Baseline base;
      if (b.is_object() && b.contains("name")) {
        read(b, "name", base.name, "experiment.baselines");
        b.erase("name");
      }
      base.schedule = schedule_from_json(b);
      if (base.name.empty()) base.name = schedules::to_string(base.schedule.kind);
      c.baselines.push_back(std::move(base));
    }
  }
  read(j, "random_baseline", c.random_baseline, ctx);
  if (j.contains("ablations")) {
    std::vector<std::string> names;
    read(j, "ablations", names, ctx);
    c.ablations.clear();
    for (const auto& n : names) c.ablations.push_back(env::ablation_mode_from_string(n));
  }
  if (j.contains("grid")) {
    check_keys(j["grid"], {"lrs", "weight_decays"}, "experiment.grid");
    read(j["grid"], "lrs", c.grid_lrs, "experiment.grid");
    read(j["grid"], "weight_decays", c.grid_weight_decays, "experiment.grid");
  }
  read(j, "seeds", c.seeds, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "metric", c.metric, ctx);
  std::string policy;
  read(j, "policy", policy, ctx);
  c.policy = policy;
  read(j, "workers", c.workers, ctx);
  read(j, "greedy", c.greedy, ctx);
  read(j, "write_traces", c.write_traces, ctx);
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json baselines = Json::array();
  for (const auto& b : c.baselines) {
    Json bj = to_json(b.schedule);
    bj["name"] = b.name;
    baselines.push_back(bj);
  }
  std::vector<std::string> ablations;
  for (auto m : c.ablations) ablations.push_back(env::to_string(m));
  return {{"mode", to_string(c.mode)},
          {"train_env", to_json(c.train_env)},
          {"eval_env", to_json(c.eval_env)},
          {"ppo", to_json(c.ppo)},
          {"baselines", baselines},
          {"random_baseline", c.random_baseline},
          {"ablations", ablations},
          {"grid", {{"lrs", c.grid_lrs}, {"weight_decays", c.grid_weight_decays}}},
          {"seeds", c.seeds},
          {"seed", c.seed},
          {"metric", c.metric},
          {"policy", c.policy.string()},
          {"workers", c.workers},
          {"greedy", c.greedy},
          {"write_traces", c.write_traces}};
}

env::EnvConfig training_env_config(const ExperimentConfig& cfg, env::AblationMode ablation) {
  env::EnvConfig tc = cfg.train_env;
  tc.ablation = ablation;
  tc.difference_rewards = true;
  return tc;
}

env::EnvConfig evaluation_env_config(const ExperimentConfig& cfg, const std::string& method,
                                     double lr, double weight_decay) {
  env::EnvConfig ec = cfg.eval_env;
  ec.difference_rewards = false;
  ec.fixed_lr_init = lr;
  ec.fixed_weight_decay = weight_decay;
  if (is_trained_method(method)) ec.ablation = trained_ablation(method);
  return ec;
}

marl::TrainResult train_agent(const ExperimentConfig& cfg, env::AblationMode ablation, int k,
                              const std::function<void(const marl::TrainLogRow&)>& on_row) {
  env::EnvConfig tc = training_env_config(cfg, ablation);
  const auto data = shared_dataset(tc, tc);
  const marl::EnvFactory factory = [&tc, &data](int) {
    return std::make_unique<env::Environment>(tc, data);
  };
  return marl::train(factory, cfg.ppo, training_seed(cfg.seed, k), on_row);
}

EpisodeRecord run_cell(const ExperimentConfig& cfg, const std::string& method, double lr,
                       double weight_decay, int k, const marl::TrainedPolicy* policy) {
  env::EnvConfig ec = evaluation_env_config(cfg, method, lr, weight_decay);
  const bool trained = is_trained_method(method);
  const auto data = shared_dataset(ec, ec);
  env::Environment environment(ec, data);
  const std::uint64_t seed = episode_seed(cfg.seed, k);

  marl::EpisodeResult r;
  if (trained) {
    if (!policy) throw ContractViolation("method " + method + " needs a trained policy");
    r = marl::evaluate_policy(*policy, environment, {seed}, cfg.greedy).front();
  } else if (method == "random") {
    marl::RandomController controller(derive_seed(seed, 2));
    r = marl::run_episode(environment, controller, seed);
  } else {
    const auto it = std::find_if(cfg.baselines.begin(), cfg.baselines.end(),
                                 [&](const Baseline& b) { return b.name == method; });
    if (it == cfg.baselines.end()) throw ConfigError("unknown method '" + method + "'");
    schedules::ScheduleSpec spec = it->schedule;
    spec.base_lr = lr;
    spec.total_steps = static_cast<std::int64_t>(environment.episode_length()) * ec.tau;
    spec.validate();
    environment.set_lr_schedule(
        [spec](std::int64_t step) { return schedules::lr_at(spec, step); });
    marl::NoOpController controller;
    r = marl::run_episode(environment, controller, seed);
  }
  EpisodeRecord rec;
  rec.cell = {method, lr, weight_decay, k, cfg.metric == "val" ? r.final_val_acc
                                                               : r.final_test_acc};
  rec.final_val_acc = r.final_val_acc;
  rec.final_test_acc = r.final_test_acc;
  rec.trace = std::move(r.trace);
  return rec;
}

namespace {

std::string episodes_csv(const std::vector<const EpisodeRecord*>& episodes) {
  std::ostringstream out;
  out << "method,lr,weight_decay,seed,final_val_acc,final_test_acc\n";
  for (const EpisodeRecord* e : episodes) {
    out << e->cell.method << ',' << exact(e->cell.lr) << ',' << exact(e->cell.weight_decay)
        << ',' << e->cell.seed << ',' << exact(e->final_val_acc) << ','
        << exact(e->final_test_acc) << '\n';
  }
  return out.str();
}

void write_schedule_curves(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  env::EnvConfig ec = cfg.eval_env;
  const auto data = shared_dataset(ec, ec);
  const env::Environment probe(ec, data);
  for (const auto& b : cfg.baselines) {
    for (double lr : cfg.grid_lrs) {
      schedules::ScheduleSpec spec = b.schedule;
      spec.base_lr = lr;
      spec.total_steps = static_cast<std::int64_t>(probe.episode_length()) * ec.tau;
      write_text(out / "schedules" / (b.name + "_lr_" + exact(lr) + ".csv"),
                 schedules::schedule_csv(spec, 1));
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const std::function<void(const std::string&)>& log) {
  cfg.validate();
  const bool persist = !out.empty();
  auto say = [&](const std::string& line) {
    if (log) log(line);
  };
  if (persist) write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  const std::string mode = to_string(cfg.mode);

  // Trained methods, in table order.
  std::vector<env::AblationMode> trained;
  if (cfg.mode == Mode::train) trained = {cfg.train_env.ablation};
  if (cfg.mode == Mode::ablate) trained = cfg.ablations;

  ExperimentResult result;
  result.agents.resize(trained.size() * static_cast<std::size_t>(cfg.seeds));
  std::mutex log_mu;
  const auto train_errors = parallel_for(result.agents.size(), cfg.workers, [&](std::size_t i) {
    const auto ablation = trained[i / static_cast<std::size_t>(cfg.seeds)];
    const int k = static_cast<int>(i % static_cast<std::size_t>(cfg.seeds));
    TrainedAgent& agent = result.agents[i];
    agent.method = method_name(ablation);
    agent.seed = k;
    std::ofstream stream;
    const auto stem = agent.method + "_seed_" + std::to_string(k);
    if (persist) {
      std::filesystem::create_directories(out / "train_logs");
      stream.open(out / "train_logs" / (stem + ".csv"), std::ios::binary);
      stream << marl::train_log_csv({});
    }
    agent.result = train_agent(cfg, ablation, k, [&](const marl::TrainLogRow& row) {
      if (!persist) return;
      const std::string csv = marl::train_log_csv({row});
      stream << csv.substr(csv.find('\n') + 1) << std::flush;
    });
    if (persist) marl::save_policy(agent.result.policy, out / "policies" / agent.method /
                                                            ("seed_" + std::to_string(k)));
    std::lock_guard<std::mutex> lock(log_mu);
    say("trained " + stem + ": " + std::to_string(agent.result.timesteps) + " timesteps, " +
        std::to_string(agent.result.log.size()) + " episodes, " +
        std::to_string(agent.result.skipped_minibatches) + " skipped minibatches");
  });
  for (std::size_t i = 0; i < train_errors.size(); ++i) {
    if (train_errors[i]) {
      rethrow_with_context(train_errors[i], mode + ": training " + result.agents[i].method +
                                                " seed " + std::to_string(result.agents[i].seed));
    }
  }

  std::vector<marl::TrainedPolicy> loaded;
  std::vector<std::string> methods;
  for (auto m : trained) methods.push_back(method_name(m));
  if (cfg.mode == Mode::evaluate) {
    methods.push_back(method_name(cfg.eval_env.ablation));
    try {
      if (std::filesystem::exists(cfg.policy / "policy.json")) {
        loaded.assign(static_cast<std::size_t>(cfg.seeds), marl::load_policy(cfg.policy));
      } else {
        for (int k = 0; k < cfg.seeds; ++k) {
          loaded.push_back(marl::load_policy(cfg.policy / ("seed_" + std::to_string(k))));
        }
      }
    } catch (const std::exception& e) {
      throw RunError(error_kind(e), mode + ": loading policy " + cfg.policy.string(), e.what());
    }
  }
  for (const auto& b : cfg.baselines) methods.push_back(b.name);
  if (cfg.random_baseline) methods.push_back("random");

  auto policy_for = [&](const std::string& method, int k) -> const marl::TrainedPolicy* {
    if (!is_trained_method(method)) return nullptr;
    if (cfg.mode == Mode::evaluate) return &loaded[static_cast<std::size_t>(k)];
    for (const auto& a : result.agents) {
      if (a.method == method && a.seed == k) return &a.result.policy;
    }
    return nullptr;
  };

  std::vector<CellResult> cells;
  for (const auto& m : methods) {
    for (double lr : cfg.grid_lrs) {
      for (double wd : cfg.grid_weight_decays) {
        for (int k = 0; k < cfg.seeds; ++k) cells.push_back({m, lr, wd, k, 0.0});
      }
    }
  }
  result.episodes.resize(cells.size());
  std::vector<char> finished(cells.size(), 0);
  const auto cell_errors = parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const CellResult& c = cells[i];
    result.episodes[i] =
        run_cell(cfg, c.method, c.lr, c.weight_decay, c.seed, policy_for(c.method, c.seed));
    finished[i] = 1;
    std::lock_guard<std::mutex> lock(log_mu);
    say("[" + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + "] " +
        cell_context(c) + ": " + fixed(100.0 * result.episodes[i].cell.accuracy, 2) + "%");
  });

  if (persist) {
    std::vector<const EpisodeRecord*> done;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (finished[i]) done.push_back(&result.episodes[i]);
    }
    write_text(out / "episodes.csv", episodes_csv(done));
    if (cfg.write_traces) {
      for (const EpisodeRecord* e : done) {
        write_text(out / "traces" / (trace_name(e->cell) + ".csv"), env::trace_csv(e->trace));
      }
    }
  }
  for (std::size_t i = 0; i < cell_errors.size(); ++i) {
    if (cell_errors[i]) rethrow_with_context(cell_errors[i], mode + ": " + cell_context(cells[i]));
  }
  if (persist && !cfg.baselines.empty()) write_schedule_curves(cfg, out);

  std::vector<CellResult> accs;
  for (const auto& e : result.episodes) accs.push_back(e.cell);
  result.table = aggregate(accs, cfg.seeds);
  if (persist) write_text(out / "results.csv", result_csv(result.table));
  return result;
}

}  // namespace ganno::harness
