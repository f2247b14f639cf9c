#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ganno/errors.hpp"
#include "ganno/marl/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ganno;
using namespace ganno::marl;

namespace {

std::vector<double> random_obs(Rng& rng, int d) {
  std::vector<double> x(static_cast<std::size_t>(d));
  for (double& v : x) v = rng.normal();
  return x;
}

PolicyConfig tiny_policy() {
  PolicyConfig c;
  c.obs_dim = 4;
  c.actor_hidden = {5};
  c.recurrent = 3;
  c.post_recurrent = 4;
  c.critic_hidden = {4};
  c.num_actions = 3;
  c.head_init_scale = 1.0;
  return c;
}

// Every executor steps a fixed-length episode with noise observations;
// action 1 earns reward 1.
class BanditEnv : public env::MultiAgentEnv {
 public:
  BanditEnv(int agents, int length, int fail_after = -1)
      : agents_(agents), length_(length), fail_after_(fail_after) {}

  int num_agents() const override { return agents_; }

  std::vector<env::Observation> reset(std::uint64_t seed) override {
    rng_ = Rng(seed);
    t_ = 0;
    return draw();
  }

  env::StepResult step(std::span<const int> actions) override {
    if (fail_after_ >= 0 && steps_++ >= fail_after_) {
      throw std::runtime_error("stub failure");
    }
    env::StepResult r;
    double sum = 0.0;
    for (int a : actions) sum += a == 1 ? 1.0 : 0.0;
    r.reward = sum / static_cast<double>(actions.size());
    r.done = ++t_ >= length_;
    r.observations = draw();
    return r;
  }

 private:
  std::vector<env::Observation> draw() {
    std::vector<env::Observation> out(static_cast<std::size_t>(agents_));
    for (auto& o : out) {
      for (double& v : o) v = rng_.normal();
    }
    return out;
  }

  int agents_;
  int length_;
  int fail_after_;
  int steps_ = 0;
  int t_ = 0;
  Rng rng_;
};

PPOConfig smoke_config() {
  PPOConfig c;
  c.total_timesteps = 200;
  return c;
}

EnvFactory tiny_env_factory(int depth = 2) {
  auto cfg = test::tiny_env_config(depth);
  auto data = test::load(cfg);
  return [cfg, data](int) { return std::make_unique<env::Environment>(cfg, data); };
}

}  // namespace

TEST_CASE("policy forward pass") {
  const PolicyParams params = init_policy(PolicyConfig{}, 3);
  const PolicyNet net(params);
  CHECK(net.config().num_actions == 9);
  Rng rng(1);
  const Hidden h0(64, 0.0);
  std::vector<double> obs = random_obs(rng, 31);

  SUBCASE("shared weights give identical outputs for identical inputs") {
    std::vector<double> a, b;
    Hidden ha, hb;
    net.actor_step(obs, h0, a, ha);
    net.actor_step(obs, h0, b, hb);
    CHECK(a == b);
    CHECK(ha == hb);
    CHECK(a.size() == 9);
    CHECK(ha.size() == 64);
    CHECK(std::any_of(ha.begin(), ha.end(), [](double x) { return x != 0.0; }));
  }
  SUBCASE("depth embedding changes the output") {
    std::fill(obs.begin() + env::obs::kDepth, obs.begin() + env::obs::kDepth + 3, 0.0);
    std::vector<double> first = obs, last = obs;
    first[env::obs::kDepth] = 1.0;
    last[env::obs::kDepth + 2] = 1.0;
    std::vector<double> a, b;
    Hidden ha, hb;
    net.actor_step(first, h0, a, ha);
    net.actor_step(last, h0, b, hb);
    CHECK(a != b);
  }
  SUBCASE("zero input through a zero head is uniform") {
    PolicyParams p = params;
    auto& head = p.state.layers[static_cast<std::size_t>(net.layout().head)];
    std::fill(head.weights.begin(), head.weights.end(), 0.0f);
    std::fill(head.bias.begin(), head.bias.end(), 0.0f);
    const PolicyNet zero(p);
    std::vector<double> logits;
    Hidden next;
    zero.actor_step(std::vector<double>(31, 0.0), h0, logits, next);
    for (double z : logits) CHECK(z == 0.0);
    CHECK(entropy(logits) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch") {
    std::vector<double> logits;
    Hidden next;
    CHECK_THROWS_AS(net.actor_step(std::vector<double>(30, 0.0), h0, logits, next),
                    ContractViolation);
    CHECK_THROWS_AS(net.actor_step(obs, Hidden(63, 0.0), logits, next),
                    ContractViolation);
  }
}

TEST_CASE("recorded forward pass matches single steps and honours resets") {
  const PolicyParams params = init_policy(tiny_policy(), 8);
  const PolicyNet net(params);
  Rng rng(2);
  const std::size_t steps = 5;
  std::vector<double> obs;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto o = random_obs(rng, 4);
    obs.insert(obs.end(), o.begin(), o.end());
  }
  const Hidden h0 = random_obs(rng, 3);
  const std::vector<std::uint8_t> resets{0, 0, 1, 0, 0};
  PolicyNet::ActorTape tape;
  net.actor_forward(obs, steps, h0, resets, tape);
  Hidden h = h0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (resets[k]) h.assign(3, 0.0);
    std::vector<double> logits;
    Hidden next;
    net.actor_step(std::span<const double>(obs.data() + 4 * k, 4), h, logits, next);
    CHECK(logits == tape.logits[k]);
    h = next;
  }
}

TEST_CASE("sample_action") {
  Rng rng(5);
  SUBCASE("dominant logit") {
    std::vector<double> logits(9, -1e9);
    logits[3] = 10.0;
    const Sample s = sample_action(logits, rng);
    CHECK(s.action == 3);
    CHECK(std::abs(s.log_prob) < 1e-12);
  }
  SUBCASE("uniform logits give uniform frequencies") {
    const std::vector<double> logits(9, 0.7);
    std::vector<int> counts(9, 0);
    const int n = 90000;
    for (int i = 0; i < n; ++i) counts[sample_action(logits, rng).action]++;
    for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 9.0) <= 0.01);
  }
  SUBCASE("log_prob is the log softmax") {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> logits = random_obs(rng, 9);
      for (double& z : logits) z *= 3.0;
      const Sample s = sample_action(logits, rng);
      long double denom = 0;
      for (double z : logits) denom += std::exp(static_cast<long double>(z));
      const double direct =
          static_cast<double>(std::log(std::exp(static_cast<long double>(logits[s.action])) / denom));
      CHECK(std::abs(s.log_prob - direct) <= 1e-12);
    }
  }
  SUBCASE("non-finite logits") {
    std::vector<double> logits(9, 0.0);
    logits[2] = std::nan("");
    CHECK_THROWS_AS(sample_action(logits, rng), ContractViolation);
    logits[2] = INFINITY;
    CHECK_THROWS_AS(sample_action(logits, rng), ContractViolation);
    CHECK_THROWS_AS(greedy_action(logits), ContractViolation);
  }
  SUBCASE("greedy picks the argmax") {
    std::vector<double> logits(9, 0.0);
    logits[7] = 0.5;
    CHECK(greedy_action(logits) == 7);
  }
}

TEST_CASE("entropy is bounded by ln 9") {
  Rng rng(11);
  CHECK(entropy(std::vector<double>(9, -2.5)) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> logits = random_obs(rng, 9);
    const double scale = rng.uniform(0.0, 20.0);
    for (double& z : logits) z *= scale;
    const double h = entropy(logits);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(9.0) + 1e-12);
  }
}

TEST_CASE("generalized advantage estimation") {
  SUBCASE("undiscounted returns") {
    const std::vector<double> r{1, 1, 1}, v{0, 0, 0};
    const std::vector<std::uint8_t> d{0, 0, 1};
    const GaeResult g = compute_gae(r, v, d, 0.0, 1.0, 1.0);
    CHECK(g.advantages == std::vector<double>{3, 2, 1});
    CHECK(g.returns == std::vector<double>{3, 2, 1});
  }
  SUBCASE("discounted two steps") {
    const std::vector<double> r{1, 1}, v{0, 0};
    const std::vector<std::uint8_t> d{0, 1};
    CHECK(compute_gae(r, v, d, 0.0, 0.5, 1.0).returns == std::vector<double>{1.5, 1.0});
  }
  SUBCASE("length mismatch") {
    const std::vector<double> r{1, 1}, v{0};
    const std::vector<std::uint8_t> d{0, 1};
    CHECK_THROWS_AS(compute_gae(r, v, d, 0.0, 0.9, 0.9), ContractViolation);
  }
  SUBCASE("matches a brute-force sum on random trajectories") {
    Rng rng(17);
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
      const GaeResult g = compute_gae(r, v, d, bootstrap, gamma, lambda);
      for (std::size_t t = 0; t < n; ++t) {
        const double want = test::brute_force_advantage(r, v, d, bootstrap, gamma, lambda, t);
        worst = std::max(worst, std::abs(g.advantages[t] - want));
        worst = std::max(worst, std::abs(g.returns[t] - (want + v[t])));
      }
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(2.4));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(1.1, 1.0, 0.2) == doctest::Approx(1.1));
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double ratio = rng.uniform(0.0, 3.0);
    const double adv = rng.normal();
    const double g = clipped_surrogate_grad(ratio, adv, 0.2);
    if ((adv > 0 && ratio > 1.2) || (adv < 0 && ratio < 0.8)) {
      CHECK(g == 0.0);
    } else {
      CHECK(g == adv);
    }
  }
}

TEST_CASE("equal advantages contribute no policy gradient") {
  const auto normed = normalize_advantages(std::vector<double>(6, 4.2));
  for (double a : normed) CHECK(a == 0.0);

  const PolicyParams params = init_policy(tiny_policy(), 4);
  const PolicyNet net(params);
  Rng rng(9);
  Sequence s;
  for (int k = 0; k < 6; ++k) {
    const auto o = random_obs(rng, 4);
    s.obs.insert(s.obs.end(), o.begin(), o.end());
    s.actions.push_back(k % 3);
    s.old_log_probs.push_back(-1.0);
    s.old_values.push_back(0.0);
    s.advantages.push_back(4.2);
    s.targets.push_back(0.0);
    s.resets.push_back(0);
  }
  s.h0.assign(3, 0.0);
  PPOConfig cfg;
  cfg.policy = tiny_policy();
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  nn::Gradients g = net.zero_gradients();
  const Sequence* batch[] = {&s};
  const LossParts lp = ppo_loss(net, batch, cfg, &g);
  CHECK(lp.policy_loss == 0.0);
  for (const auto& lg : g) {
    for (double x : lg.weights) CHECK(x == 0.0);
    for (double x : lg.bias) CHECK(x == 0.0);
  }
}

TEST_CASE("PPO loss gradient matches finite differences") {
  PolicyParams params = init_policy(tiny_policy(), 21);
  CHECK(parameter_count(params) <= 500);
  Rng rng(22);
  for (auto& layer : params.state.layers) {
    for (float& b : layer.bias) b = static_cast<float>(rng.uniform(-0.2, 0.2));
  }
  const PolicyNet net(params);
  PPOConfig cfg;
  cfg.policy = tiny_policy();
  cfg.entropy_coef = 0.05;

  // Old log-probs and values stay close to the current ones so every ratio
  // and value difference is away from the clipping kinks.
  std::vector<Sequence> seqs(3);
  for (auto& s : seqs) {
    const std::size_t steps = 4;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto o = random_obs(rng, 4);
      s.obs.insert(s.obs.end(), o.begin(), o.end());
      s.actions.push_back(static_cast<int>(rng.below(3)));
      s.advantages.push_back(rng.normal());
      s.targets.push_back(rng.normal());
      s.resets.push_back(k == 2 ? 1 : 0);
    }
    s.h0 = random_obs(rng, 3);
    PolicyNet::ActorTape tape;
    net.actor_forward(s.obs, steps, s.h0, s.resets, tape);
    for (std::size_t k = 0; k < steps; ++k) {
      s.old_log_probs.push_back(log_prob(tape.logits[k], s.actions[k]) + rng.uniform(-0.05, 0.05));
      const double v = net.value(std::span<const double>(s.obs.data() + 4 * k, 4));
      s.old_values.push_back(v + rng.uniform(-0.05, 0.05));
    }
  }
  std::vector<const Sequence*> batch;
  for (const auto& s : seqs) batch.push_back(&s);

  nn::Gradients analytic = net.zero_gradients();
  ppo_loss(net, batch, cfg, &analytic);
  auto loss = [&](const nn::NetworkState& st) {
    const PolicyParams p{params.config, st};
    return ppo_loss(PolicyNet(p), batch, cfg, nullptr).total;
  };
  const nn::Gradients numeric = test::finite_difference_gradients(params.state, loss, 1e-3);
  CHECK(test::max_relative_error(analytic, numeric, 1e-4) <= 1e-3);
}

TEST_CASE("value normalizer tracks the pooled statistics") {
  Rng rng(6);
  ValueNormalizer vn;
  CHECK(vn.normalize(3.0) == 3.0);
  std::vector<double> all;
  for (int b = 0; b < 5; ++b) {
    std::vector<double> batch;
    for (int i = 0; i < 17; ++i) batch.push_back(5.0 + 2.0 * rng.normal());
    vn.update(batch);
    all.insert(all.end(), batch.begin(), batch.end());
  }
  const auto ref = test::reference_stats(all);
  CHECK(vn.mean() == doctest::Approx(static_cast<double>(ref.mean)).epsilon(1e-12));
  CHECK(vn.stddev() == doctest::Approx(std::sqrt(static_cast<double>(ref.var))).epsilon(1e-9));
  CHECK(vn.denormalize(vn.normalize(1.234)) == doctest::Approx(1.234).epsilon(1e-12));
}

TEST_CASE("ppo_update skips non-finite minibatches") {
  PPOConfig cfg;
  cfg.policy = tiny_policy();
  cfg.minibatches = 1;
  cfg.epochs = 1;
  PolicyParams params = init_policy(cfg.policy, 2);
  const PolicyParams before = params;
  Sequence s;
  s.obs = {0.1, 0.2, 0.3, 0.4};
  s.actions = {1};
  s.old_log_probs = {-1.0};
  s.old_values = {0.0};
  s.advantages = {std::nan("")};
  s.targets = {0.0};
  s.resets = {0};
  s.h0.assign(3, 0.0);
  Rng rng(1);
  const UpdateStats st = ppo_update(params, {s}, cfg, rng);
  CHECK(st.skipped == 1);
  CHECK(params == before);
}

TEST_CASE("PPO configuration") {
  PPOConfig c;
  CHECK(c.rollout_length(2) == 32);
  CHECK(c.rollout_length(5) == 16);
  CHECK(c.rollout_length(8) == 8);
  c.validate();
  SUBCASE("gamma") { c.gamma = 0.0; CHECK_THROWS_AS(c.validate(), ConfigError); }
  SUBCASE("lambda") { c.gae_lambda = 1.5; CHECK_THROWS_AS(c.validate(), ConfigError); }
  SUBCASE("clip") { c.clip = 0.0; CHECK_THROWS_AS(c.validate(), ConfigError); }
  SUBCASE("executors") { c.executors = 0; CHECK_THROWS_AS(c.validate(), ConfigError); }
}

TEST_CASE("training smoke run keeps its step accounting") {
  const EnvFactory factory = tiny_env_factory();
  const PPOConfig cfg = smoke_config();
  int streamed = 0;
  const TrainResult r = train(factory, cfg, 7, [&](const TrainLogRow&) { ++streamed; });
  // Two agents and four executors: 32 steps per executor in the first round,
  // then the remaining 72 timesteps split over four executors.
  CHECK(r.timesteps == 200);
  CHECK(r.updates == 2);
  // Each executor finishes floor(50 / T) episodes with T = 9.
  CHECK(r.log.size() == 4 * (50 / 9));
  CHECK(streamed == static_cast<int>(r.log.size()));
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    CHECK(r.log[i].episode == static_cast<int>(i));
    CHECK((r.log[i].timestep == 128 || r.log[i].timestep == 200));
    CHECK(r.log[i].val_acc >= 0.0);
    CHECK(r.log[i].val_acc <= 1.0);
    CHECK(std::isfinite(r.log[i].policy_loss));
  }
  const std::string csv = train_log_csv(r.log);
  CHECK(csv.rfind("timestep,episode,mean_reward,mean_val_acc,policy_loss,value_loss,entropy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.log.size() + 1));
  CHECK(r.policy.normalizer.count() > 0);
}

TEST_CASE("fixed seed reproduces a training run bit for bit") {
  const EnvFactory factory = tiny_env_factory();
  const PPOConfig cfg = smoke_config();
  const TrainResult a = train(factory, cfg, 13);
  const TrainResult b = train(factory, cfg, 13);
  CHECK(train_log_csv(a.log) == train_log_csv(b.log));
  CHECK(a.policy == b.policy);
  const TrainResult c = train(factory, cfg, 14);
  CHECK_FALSE(a.policy == c.policy);
}

TEST_CASE("policy concentrates on the rewarded action of a bandit") {
  PPOConfig cfg;
  cfg.total_timesteps = 5000;
  const TrainResult r =
      train([](int) { return std::make_unique<BanditEnv>(1, 8); }, cfg, 1);
  CHECK(r.timesteps == 5000);
  const PolicyNet net(r.policy.params);
  Rng rng(99);
  double mean_p = 0.0;
  const int probes = 200;
  for (int i = 0; i < probes; ++i) {
    env::Observation raw;
    for (double& v : raw) v = rng.normal();
    const env::Observation o = prepare_observation(raw, r.policy.normalizer, true,
                                                   env::AblationMode::full);
    std::vector<double> logits;
    Hidden next;
    net.actor_step(o, Hidden(64, 0.0), logits, next);
    mean_p += std::exp(log_prob(logits, 1)) / probes;
  }
  CHECK(mean_p >= 0.9);
}

TEST_CASE("environment failure aborts training after streaming earlier rows") {
  PPOConfig cfg;
  cfg.executors = 1;
  cfg.total_timesteps = 10000;
  std::vector<TrainLogRow> rows;
  CHECK_THROWS(train([](int) { return std::make_unique<BanditEnv>(1, 8, 600); }, cfg, 1,
                     [&](const TrainLogRow& row) { rows.push_back(row); }));
  // 256 steps per round: two full rounds of 32 episodes finish before step 600.
  CHECK(rows.size() == 64);
}

TEST_CASE("policy evaluation") {
  auto train_cfg = test::tiny_env_config(2);
  auto eval_cfg = test::tiny_env_config(5);
  eval_cfg.difference_rewards = false;
  eval_cfg.fixed_lr_init = 0.001;
  eval_cfg.fixed_weight_decay = 0.1;
  env::Environment eval_env(eval_cfg, test::load(eval_cfg));
  const TrainResult trained = train(tiny_env_factory(2), smoke_config(), 3);

  SUBCASE("a policy trained on two layers runs on five") {
    const TrainedPolicy before = trained.policy;
    const auto results = evaluate_policy(trained.policy, eval_env, {1, 2});
    REQUIRE(results.size() == 2);
    for (const auto& e : results) {
      CHECK(e.rewards.size() == static_cast<std::size_t>(eval_env.episode_length()));
      CHECK(e.trace.size() == e.rewards.size());
      CHECK(e.trace.front().layer_lrs.size() == 5);
      CHECK(e.rewards.back() == e.final_val_acc);
    }
    CHECK(trained.policy == before);
    const auto again = evaluate_policy(trained.policy, eval_env, {1, 2});
    CHECK(again[0].final_test_acc == results[0].final_test_acc);
  }
  SUBCASE("a no-op policy reproduces the constant baseline") {
    TrainedPolicy noop = trained.policy;
    const PolicyNet net(noop.params);
    auto& head = noop.params.state.layers[static_cast<std::size_t>(net.layout().head)];
    std::fill(head.weights.begin(), head.weights.end(), 0.0f);
    std::fill(head.bias.begin(), head.bias.end(), 0.0f);
    head.bias[env::kNoOp] = 5.0f;
    const auto policy_run = evaluate_policy(noop, eval_env, {4});

    env::Environment baseline(eval_cfg, test::load(eval_cfg));
    baseline.set_lr_schedule([](std::int64_t) { return 0.001; });
    NoOpController idle;
    const EpisodeResult base = run_episode(baseline, idle, 4);
    CHECK(policy_run[0].final_val_acc == base.final_val_acc);
    CHECK(policy_run[0].final_test_acc == base.final_test_acc);
  }
  SUBCASE("difference rewards are rejected") {
    env::Environment training_env(train_cfg, test::load(train_cfg));
    CHECK_THROWS_AS(evaluate_policy(trained.policy, training_env, {1}), ContractViolation);
  }
}

TEST_CASE("trained policies round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "ganno_policy_test";
  std::filesystem::remove_all(dir);
  TrainedPolicy p;
  p.params = init_policy(PolicyConfig{}, 5);
  std::vector<env::Observation> obs(3);
  Rng rng(1);
  for (auto& o : obs) {
    for (double& v : o) v = rng.normal();
  }
  p.normalizer.update(obs);
  save_policy(p, dir);
  CHECK(load_policy(dir) == p);

  SUBCASE("missing files") {
    std::filesystem::remove(dir / "policy.bin");
    CHECK_THROWS_AS(load_policy(dir), LoadError);
  }
  SUBCASE("config that does not fit the parameters") {
    std::ofstream(dir / "policy.json") << R"({"obs_dim": 31, "actor_hidden": [64],
      "recurrent": 64, "post_recurrent": 64, "critic_hidden": [64, 64],
      "num_actions": 9, "head_init_scale": 0.01, "normalize_observations": true,
      "normalizer": )" << p.normalizer.to_json().dump() << "}";
    CHECK_THROWS_AS(load_policy(dir), DecodeError);
  }
  std::filesystem::remove_all(dir);
}
