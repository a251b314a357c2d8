#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "rtu/oracles.hpp"
#include "rtu/ppo.hpp"

using namespace rtu;

namespace {

// Every step ends the episode.
class OneStepEnv final : public Environment {
 public:
  explicit OneStepEnv(Rng rng) : rng_(rng) {}
  std::string name() const override { return "one_step"; }
  std::size_t observation_size() const override { return 3; }
  int action_count() const override { return 2; }
  Vec reset() override { return rtu::testing::random_vec(rng_, 3); }
  EnvStep step(int a) override {
    EnvStep s;
    s.reward = a == 0 ? 1.0 : 0.0;
    s.done = true;
    s.observation = Vec::Zero(3);
    return s;
  }

 private:
  Rng rng_;
};

PpoConfig small_config() {
  PpoConfig c;
  c.buffer_size = 64;
  c.minibatches = 4;
  c.epochs = 2;
  c.encoder_hidden = 8;
  c.recurrent_n = 4;
  c.head_hidden = 8;
  return c;
}

}  // namespace

TEST_CASE("approx_kl closed forms") {
  const double rs[] = {0.5, 1.0, 2.0};
  for (double r : rs) {
    const std::vector<double> old_lp = {-1.3, -0.2, -2.0};
    std::vector<double> new_lp = old_lp;
    for (double& v : new_lp) v += std::log(r);
    CHECK(std::abs(approx_kl(old_lp, new_lp) - ((r - 1.0) - std::log(r))) <= 1e-12);
  }
  CHECK(std::abs(approx_kl({0.0}, {std::log(2.0)}) - 0.3068528194400547) <= 1e-12);
  CHECK(std::abs(approx_kl({0.0}, {std::log(0.5)}) - 0.1931471805599453) <= 1e-12);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-5, 0), b = a + rng.uniform(-1e-6, 1e-6) * (i % 2) +
                                             rng.uniform(-3, 3) * ((i + 1) % 2);
    CHECK(approx_kl({a}, {b}) >= 0.0);
  }
  CHECK_THROWS_AS(approx_kl({0.0}, {}), Error);
}

TEST_CASE("GAE reductions") {
  auto one = gae_advantages({2.0}, {0.5}, {1}, 7.0, 0.99, 0.95);
  CHECK(one.advantages[0] == doctest::Approx(1.5));
  CHECK(one.targets[0] == doctest::Approx(2.0));

  const std::vector<double> r = {1.0, -0.5, 2.0, 0.25}, v = {0.3, -0.2, 0.7, 0.1};
  const std::vector<std::uint8_t> d = {0, 0, 0, 0};
  auto td = gae_advantages(r, v, d, 0.4, 0.9, 0.0);
  for (int t = 0; t < 4; ++t) {
    const double next = t == 3 ? 0.4 : v[t + 1];
    CHECK(td.advantages[t] == doctest::Approx(r[t] + 0.9 * next - v[t]).epsilon(1e-14));
  }
  auto mc = gae_advantages(r, {0, 0, 0, 0}, {0, 0, 0, 1}, 123.0, 1.0, 1.0);
  CHECK(mc.advantages[0] == doctest::Approx(2.75));
  CHECK(mc.advantages[1] == doctest::Approx(1.75));
  CHECK(mc.advantages[2] == doctest::Approx(2.25));
  CHECK(mc.advantages[3] == doctest::Approx(0.25));
  // A done flag cuts the recursion.
  auto cut = gae_advantages(r, {0, 0, 0, 0}, {0, 1, 0, 0}, 0.0, 1.0, 1.0);
  CHECK(cut.advantages[0] == doctest::Approx(0.5));
  CHECK(cut.advantages[2] == doctest::Approx(2.25));
}

TEST_CASE("PPO defaults") {
  const PpoConfig c;
  CHECK(c.buffer_size == 2048);
  CHECK(c.epochs == 10);
  CHECK(c.minibatches == 32);
  CHECK(c.gae_lambda == 0.95);
  CHECK(c.discount == 0.99);
  CHECK(c.policy_clip == 0.2);
  CHECK(c.value_clip == 0.5);
  CHECK(c.grad_clip == 0.5);
  CHECK_FALSE(c.recompute_traces);
  CHECK_FALSE(c.recompute_targets);
  PpoConfig bad;
  bad.buffer_size = 100;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("rollouts are deterministic and snapshots replay") {
  const PpoConfig cfg = small_config();
  MaskedCartpole e1(CartpoleMask::kPositionsOnly, Rng(3, 2));
  MaskedCartpole e2(CartpoleMask::kPositionsOnly, Rng(3, 2));
  PpoAgent a1(cfg, 2, 2, 3), a2(cfg, 2, 2, 3);
  EpisodeStats s1, s2;
  for (int round = 0; round < 2; ++round) {
    RolloutBuffer b1 = a1.collect(e1, s1), b2 = a2.collect(e2, s2);
    REQUIRE(b1.size() == 64);
    for (std::size_t t = 0; t < b1.size(); ++t) {
      CHECK(b1.obs[t] == b2.obs[t]);
      CHECK(b1.actions[t] == b2.actions[t]);
      CHECK(b1.logp[t] == b2.logp[t]);
      CHECK(b1.traces[t].E_w11 == b2.traces[t].E_w11);
    }
    RolloutBuffer replay = b1;
    a1.recompute_snapshots(replay);
    for (std::size_t t = 0; t < b1.size(); ++t) {
      CHECK(replay.states[t].h_c1 == b1.states[t].h_c1);
      CHECK(replay.traces[t].e_nu_c2 == b1.traces[t].e_nu_c2);
      CHECK(replay.traces[t].E_w21 == b1.traces[t].E_w21);
    }
  }
  CHECK(s1.episodes == s2.episodes);
}

TEST_CASE("terminal-every-step environment restarts state and traces") {
  const PpoConfig cfg = small_config();
  OneStepEnv env(Rng(4, 2));
  PpoAgent agent(cfg, 3, 2, 4);
  EpisodeStats st;
  const RolloutBuffer b = agent.collect(env, st);
  CHECK(st.episodes == 64);
  for (std::size_t t = 0; t < b.size(); ++t) {
    RtuLayer fresh(agent.recurrent().params());
    fresh.step(mlp_forward(agent.encoder(), b.obs[t]));
    CHECK(b.states[t].h_c1 == fresh.state().h_c1);
    CHECK(b.traces[t].E_w11 == fresh.traces().E_w11);
    CHECK(b.traces[t].e_theta_c1 == fresh.traces().e_theta_c1);
  }
}

TEST_CASE("head gradients match finite differences of the minibatch loss") {
  PpoConfig cfg = small_config();
  MaskedCartpole env(CartpoleMask::kFull, Rng(5, 2));
  PpoAgent agent(cfg, 4, 2, 5);
  EpisodeStats st;
  RolloutBuffer b = agent.collect(env, st);
  // Move the policy away from the behavior one so some ratios leave the band.
  Rng rng(6);
  for (auto& l : agent.actor().layers)
    l.weight += rtu::testing::random_mat(rng, l.weight.rows(), l.weight.cols(), -0.3, 0.3);
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), 8);
  PpoGrads g = agent.zero_grads();
  const MinibatchLoss base = agent.evaluate_minibatch(b, idx, &g);
  CHECK(std::isfinite(base.total));
  auto loss = [&] { return agent.evaluate_minibatch(b, idx, nullptr).total; };
  const auto fd_actor = finite_difference_gradient(agent.actor(), loss, 1e-6);
  const auto fd_critic = finite_difference_gradient(agent.critic(), loss, 1e-6);
  const auto an_actor = flatten(tensors(g.actor));
  const auto an_critic = flatten(tensors(g.critic));
  CHECK(relative_error(std::span<const double>(fd_actor),
                       std::span<const double>(an_actor)) <= 1e-6);
  CHECK(relative_error(std::span<const double>(fd_critic),
                       std::span<const double>(an_critic)) <= 1e-6);
}

TEST_CASE("zero advantages and zero coefficients leave parameters unchanged") {
  PpoConfig cfg = small_config();
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.lr = 1e-2;
  MaskedCartpole env(CartpoleMask::kFull, Rng(7, 2));
  PpoAgent agent(cfg, 4, 2, 7);
  EpisodeStats st;
  RolloutBuffer b = agent.collect(env, st);
  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  const auto before = flatten(agent.parameters());
  agent.update(b);
  CHECK(flatten(agent.parameters()) == before);
}

TEST_CASE("recomputed traces with a zero step size equal the snapshots") {
  PpoConfig cfg = small_config();
  cfg.lr = 0.0;
  cfg.recompute_traces = true;
  cfg.recompute_targets = true;
  MaskedCartpole env(CartpoleMask::kPositionsOnly, Rng(8, 2));
  PpoAgent agent(cfg, 2, 2, 8);
  EpisodeStats st;
  agent.collect(env, st);
  RolloutBuffer b = agent.collect(env, st);
  const RolloutBuffer snap = b;
  const UpdateStats u = agent.update(b);
  for (std::size_t t = 0; t < b.size(); ++t) {
    CHECK(b.states[t].h_c2 == snap.states[t].h_c2);
    CHECK(b.traces[t].E_w12 == snap.traces[t].E_w12);
    CHECK(b.values[t] == snap.values[t]);
    CHECK(b.advantages[t] == snap.advantages[t]);
  }
  CHECK(b.bootstrap_value == snap.bootstrap_value);
  CHECK(u.approx_kl == 0.0);
}

TEST_CASE("PPO run writes per-update metrics") {
  PpoConfig cfg = small_config();
  cfg.total_steps = 256;
  ControlEnvConfig env;
  env.name = "tmaze";
  env.corridor_length = 3;
  const auto r = run_ppo(cfg, env, 9);
  CHECK(r.rows.size() == 4);
  CHECK(r.failure.empty());
  for (const auto& row : r.rows) {
    CHECK(row.stats.approx_kl >= 0.0);
    CHECK(row.success_rate >= 0.0);
    CHECK(row.success_rate <= 1.0);
  }
  const auto again = run_ppo(cfg, env, 9);
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    CHECK(r.rows[i].stats.policy_loss == again.rows[i].stats.policy_loss);
  env.name = "nope";
  CHECK_THROWS_AS(run_ppo(cfg, env, 9), Error);
}
