#include "ganno/marl/trainer.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "ganno/config_json.hpp"
#include "ganno/errors.hpp"
#include "ganno/format.hpp"
#include "ganno/nn/snapshot.hpp"

namespace ganno::marl {

env::Observation prepare_observation(const env::Observation& raw,
                                     const env::ObservationNormalizer& normalizer,
                                     bool normalize, env::AblationMode mode) {
  return env::ablation_mask(normalize ? normalizer.normalize(raw) : raw, mode);
}

void save_policy(const TrainedPolicy& policy, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_snapshot(policy.params.state, dir / "policy.bin");
  Json j = to_json(policy.params.config);
  j["normalize_observations"] = policy.normalize_observations;
  j["normalizer"] = policy.normalizer.to_json();
  std::ofstream out(dir / "policy.json");
  out << j.dump(2) << '\n';
  if (!out) throw LoadError("cannot write " + (dir / "policy.json").string());
}

TrainedPolicy load_policy(const std::filesystem::path& dir) {
  std::ifstream in(dir / "policy.json");
  if (!in) throw LoadError("cannot open " + (dir / "policy.json").string());
  TrainedPolicy p;
  try {
    Json j = Json::parse(in);
    p.normalize_observations = j.at("normalize_observations").get<bool>();
    p.normalizer = env::ObservationNormalizer::from_json(j.at("normalizer"));
    j.erase("normalize_observations");
    j.erase("normalizer");
    p.params.config = policy_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad policy.json: ") + e.what());
  } catch (const ConfigError& e) {
    throw DecodeError(std::string("bad policy.json: ") + e.what());
  }
  if (!std::filesystem::is_regular_file(dir / "policy.bin")) {
    throw LoadError("missing " + (dir / "policy.bin").string());
  }
  p.params.state = nn::load_snapshot(dir / "policy.bin");
  try {
    check_policy(p.params);
  } catch (const ContractViolation& e) {
    throw DecodeError(e.what());
  }
  return p;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream out;
  out << "timestep,episode,mean_reward,mean_val_acc,policy_loss,value_loss,entropy\n";
  for (const auto& r : rows) {
    out << r.timestep << ',' << r.episode << ',' << exact(r.mean_reward) << ','
        << exact(r.val_acc) << ',' << exact(r.policy_loss) << ','
        << exact(r.value_loss) << ',' << exact(r.entropy) << '\n';
  }
  return out.str();
}

namespace {

struct AgentStep {
  env::Observation obs;  // prepared
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;  // denormalized
  double reward = 0.0;
  std::uint8_t done = 0;
  std::uint8_t reset = 0;
  Hidden h_before;
};

struct FinishedEpisode {
  double mean_reward = 0.0;
  double val_acc = 0.0;
};

class Executor {
 public:
  Executor(std::unique_ptr<env::MultiAgentEnv> environment, std::uint64_t seed, int hidden)
      : env_(std::move(environment)),
        rng_(derive_seed(seed, 1)),
        seed_base_(derive_seed(seed, 2)),
        hidden_size_(hidden) {
    if (!env_) throw ConfigError("environment factory returned null");
  }

  int agents() const { return env_->num_agents(); }
  const std::vector<env::Observation>& raw() const { return raw_; }

  void start() { begin_episode(); }

  // Collects `steps` steps; afterwards rollout()[agent] holds the agent's
  // steps and bootstrap()[agent] the value estimate of the state reached.
  void collect(const PolicyNet& net, const TrainedPolicy& frozen,
               const ValueNormalizer& values, int steps) {
    const int n = agents();
    const env::AblationMode mode = env_->ablation();
    rollout_.assign(static_cast<std::size_t>(n), {});
    seen_.clear();
    finished_.clear();
    std::vector<double> logits;
    Hidden next;
    std::vector<int> actions(static_cast<std::size_t>(n));
    for (int k = 0; k < steps; ++k) {
      std::vector<AgentStep> now(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        auto& s = now[static_cast<std::size_t>(a)];
        s.obs = prepare_observation(raw_[a], frozen.normalizer,
                                    frozen.normalize_observations, mode);
        s.h_before = hidden_[a];
        s.reset = fresh_ ? 1 : 0;
        net.actor_step(s.obs, hidden_[a], logits, next);
        const Sample smp = sample_action(logits, rng_);
        s.action = smp.action;
        s.log_prob = smp.log_prob;
        s.value = values.denormalize(net.value(s.obs));
        hidden_[a] = next;
        actions[static_cast<std::size_t>(a)] = smp.action;
      }
      fresh_ = false;
      const env::StepResult r = env_->step(actions);
      reward_sum_ += r.reward;
      ++episode_steps_;
      for (int a = 0; a < n; ++a) {
        now[a].reward = r.reward;
        now[a].done = r.done ? 1 : 0;
        rollout_[a].push_back(std::move(now[a]));
      }
      if (r.done) {
        finished_.push_back({reward_sum_ / episode_steps_, r.value_action});
        begin_episode();
      } else {
        raw_ = r.observations;
        seen_.insert(seen_.end(), raw_.begin(), raw_.end());
      }
    }
    bootstrap_.assign(static_cast<std::size_t>(n), 0.0);
    for (int a = 0; a < n; ++a) {
      if (rollout_[a].back().done) continue;
      const env::Observation o = prepare_observation(
          raw_[a], frozen.normalizer, frozen.normalize_observations, mode);
      bootstrap_[a] = values.denormalize(net.value(o));
    }
  }

  const std::vector<std::vector<AgentStep>>& rollout() const { return rollout_; }
  const std::vector<double>& bootstrap() const { return bootstrap_; }
  const std::vector<FinishedEpisode>& finished() const { return finished_; }
  const std::vector<env::Observation>& seen() const { return seen_; }

 private:
  void begin_episode() {
    raw_ = env_->reset(derive_seed(seed_base_, episodes_++));
    if (raw_.size() != static_cast<std::size_t>(agents())) {
      throw ContractViolation("environment returned the wrong number of observations");
    }
    seen_.insert(seen_.end(), raw_.begin(), raw_.end());
    hidden_.assign(raw_.size(), Hidden(static_cast<std::size_t>(hidden_size_), 0.0));
    fresh_ = true;
    reward_sum_ = 0.0;
    episode_steps_ = 0;
  }

  std::unique_ptr<env::MultiAgentEnv> env_;
  Rng rng_;
  std::uint64_t seed_base_;
  int hidden_size_;
  std::uint64_t episodes_ = 0;
  std::vector<env::Observation> raw_;
  std::vector<Hidden> hidden_;
  bool fresh_ = true;
  double reward_sum_ = 0.0;
  int episode_steps_ = 0;
  std::vector<std::vector<AgentStep>> rollout_;
  std::vector<double> bootstrap_;
  std::vector<FinishedEpisode> finished_;
  std::vector<env::Observation> seen_;  // raw observations for the normalizer
};

}  // namespace

TrainResult train(const EnvFactory& make_env, const PPOConfig& cfg, std::uint64_t seed,
                  const std::function<void(const TrainLogRow&)>& on_row) {
  cfg.validate();
  if (cfg.policy.obs_dim != env::obs::kWidth) {
    throw ConfigError("policy obs_dim must equal the observation width (" +
                      std::to_string(env::obs::kWidth) + ")");
  }
  if (cfg.policy.num_actions != env::kNumActions) {
    throw ConfigError("policy must have one logit per action");
  }
  TrainResult result;
  result.policy.params = init_policy(cfg.policy, derive_seed(seed, 0));
  result.policy.normalize_observations = cfg.normalize_observations;
  ValueNormalizer values;
  Rng update_rng(derive_seed(seed, 1));

  std::vector<Executor> executors;
  for (int e = 0; e < cfg.executors; ++e) {
    executors.emplace_back(make_env(e), derive_seed(seed, 100 + e), cfg.policy.recurrent);
  }
  const int agents = executors.front().agents();
  for (auto& ex : executors) {
    if (ex.agents() != agents) {
      throw ConfigError("all executors must expose the same number of agents");
    }
    ex.start();
    if (cfg.normalize_observations) result.policy.normalizer.update(ex.raw());
  }
  const int rollout = cfg.rollout_length(agents);
  const int L = cfg.sequence_length;
  const auto d = static_cast<std::size_t>(env::obs::kWidth);
  int episode_counter = 0;

  while (result.timesteps < cfg.total_timesteps) {
    // The last round is shortened so the budget is never exceeded.
    const std::int64_t remaining = cfg.total_timesteps - result.timesteps;
    const int steps = static_cast<int>(std::min<std::int64_t>(
        rollout, (remaining + cfg.executors - 1) / cfg.executors));
    const PolicyNet net(result.policy.params);
    const TrainedPolicy& frozen = result.policy;
    std::vector<std::exception_ptr> errors(executors.size());
    std::vector<std::thread> threads;
    for (std::size_t e = 0; e < executors.size(); ++e) {
      threads.emplace_back([&, e] {
        try {
          executors[e].collect(net, frozen, values, steps);
        } catch (...) {
          errors[e] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
    result.timesteps += static_cast<std::int64_t>(steps) * cfg.executors;

    // Advantages and raw targets per executor and agent, then sequences.
    std::vector<std::vector<GaeResult>> gae(executors.size());
    std::vector<double> all_targets;
    for (std::size_t e = 0; e < executors.size(); ++e) {
      for (int a = 0; a < agents; ++a) {
        const auto& agent_steps = executors[e].rollout()[a];
        std::vector<double> r, v;
        std::vector<std::uint8_t> dn;
        for (const auto& s : agent_steps) {
          r.push_back(s.reward);
          v.push_back(s.value);
          dn.push_back(s.done);
        }
        gae[e].push_back(compute_gae(r, v, dn, executors[e].bootstrap()[a], cfg.gamma,
                                     cfg.gae_lambda));
        all_targets.insert(all_targets.end(), gae[e].back().returns.begin(),
                           gae[e].back().returns.end());
      }
    }
    if (cfg.normalize_values) values.update(all_targets);
    auto to_model_space = [&](double x) {
      return cfg.normalize_values ? values.normalize(x) : x;
    };

    std::vector<Sequence> data;
    for (std::size_t e = 0; e < executors.size(); ++e) {
      for (int a = 0; a < agents; ++a) {
        const auto& agent_steps = executors[e].rollout()[a];
        const GaeResult& g = gae[e][a];
        for (int first = 0; first < steps; first += L) {
          Sequence s;
          s.h0 = agent_steps[first].h_before;
          for (int k = first; k < std::min(first + L, steps); ++k) {
            const AgentStep& st = agent_steps[k];
            s.obs.insert(s.obs.end(), st.obs.begin(), st.obs.begin() + d);
            s.actions.push_back(st.action);
            s.old_log_probs.push_back(st.log_prob);
            s.old_values.push_back(to_model_space(st.value));
            s.advantages.push_back(g.advantages[k]);
            s.targets.push_back(to_model_space(g.returns[k]));
            s.resets.push_back(k == first ? 0 : st.reset);
          }
          data.push_back(std::move(s));
        }
      }
    }

    const UpdateStats us = ppo_update(result.policy.params, data, cfg, update_rng);
    result.updates += 1;
    result.skipped_minibatches += us.skipped;
    if (cfg.normalize_observations) {
      for (const auto& ex : executors) result.policy.normalizer.update(ex.seen());
    }

    for (const auto& ex : executors) {
      for (const auto& f : ex.finished()) {
        TrainLogRow row{result.timesteps, episode_counter++, f.mean_reward, f.val_acc,
                        us.loss.policy_loss, us.loss.value_loss, us.loss.entropy};
        result.log.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  return result;
}

PolicyController::PolicyController(const TrainedPolicy& policy, bool greedy,
                                   std::uint64_t seed)
    : policy_(policy), net_(policy.params), greedy_(greedy), rng_(seed) {}

void PolicyController::reset(int agents, env::AblationMode mode) {
  mode_ = mode;
  hidden_.assign(static_cast<std::size_t>(agents),
                 Hidden(static_cast<std::size_t>(net_.config().recurrent), 0.0));
}

std::vector<int> PolicyController::act(const std::vector<env::Observation>& obs) {
  if (obs.size() != hidden_.size()) {
    throw ContractViolation("controller was reset for a different agent count");
  }
  std::vector<int> actions;
  std::vector<double> logits;
  Hidden next;
  for (std::size_t a = 0; a < obs.size(); ++a) {
    const env::Observation o = prepare_observation(
        obs[a], policy_.normalizer, policy_.normalize_observations, mode_);
    net_.actor_step(o, hidden_[a], logits, next);
    hidden_[a] = next;
    actions.push_back(greedy_ ? greedy_action(logits) : sample_action(logits, rng_).action);
  }
  return actions;
}

std::vector<int> NoOpController::act(const std::vector<env::Observation>& obs) {
  return std::vector<int>(obs.size(), env::kNoOp);
}

std::vector<int> RandomController::act(const std::vector<env::Observation>& obs) {
  std::vector<int> actions;
  for (std::size_t a = 0; a < obs.size(); ++a) {
    actions.push_back(static_cast<int>(rng_.below(env::kNumActions)));
  }
  return actions;
}

EpisodeResult run_episode(env::Environment& environment, Controller& controller,
                          std::uint64_t seed) {
  EpisodeResult out;
  out.seed = seed;
  std::vector<env::Observation> obs = environment.reset(seed);
  controller.reset(environment.num_agents(), environment.ablation());
  while (!environment.done()) {
    const env::StepResult r = environment.step(controller.act(obs));
    out.rewards.push_back(r.reward);
    obs = r.observations;
  }
  out.final_val_acc = environment.state().val_stats.accuracy;
  out.final_test_acc = environment.test_stats().accuracy;
  out.trace = environment.trace();
  return out;
}

std::vector<EpisodeResult> evaluate_policy(const TrainedPolicy& policy,
                                           env::Environment& environment,
                                           const std::vector<std::uint64_t>& seeds,
                                           bool greedy) {
  if (environment.config().difference_rewards) {
    throw ContractViolation("evaluation environments must not compute difference rewards");
  }
  if (policy.params.config.obs_dim != env::obs::kWidth) {
    throw ContractViolation("policy observation width does not match the environment");
  }
  std::vector<EpisodeResult> out;
  for (std::uint64_t seed : seeds) {
    PolicyController controller(policy, greedy, derive_seed(seed, 7));
    out.push_back(run_episode(environment, controller, seed));
  }
  return out;
}

}  // namespace ganno::marl
