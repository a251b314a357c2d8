#ifndef RTU_PPO_HPP_
#define RTU_PPO_HPP_

// PPO with a recurrent trunk trained by RTRL: observation encoder (dense,
// tanh) -> nonlinear RTU -> actor and critic MLP heads. Rollouts store the
// recurrent state and traces of every step; updates assemble the recurrent
// gradient from those snapshots.

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rtu/envs.hpp"
#include "rtu/mlp.hpp"
#include "rtu/optim.hpp"
#include "rtu/rtu.hpp"

namespace rtu {

struct PpoConfig {
  int buffer_size = 2048;
  int epochs = 10;
  int minibatches = 32;
  double gae_lambda = 0.95;
  double discount = 0.99;
  double policy_clip = 0.2;
  double value_clip = 0.5;
  double grad_clip = 0.5;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 3e-4;
  bool recompute_traces = false;
  bool recompute_targets = false;

  int encoder_hidden = 64;
  int recurrent_n = 16;
  Activation recurrent_activation = Activation::kTanh;
  InitOptions recurrent_init;
  int head_hidden = 64;

  std::int64_t total_steps = 500000;
  // Early stop once the mean episodic return / success rate, averaged over
  // the last target_window updates, reaches these values.
  double target_return = std::numeric_limits<double>::infinity();
  double target_success = std::numeric_limits<double>::infinity();
  int target_window = 5;

  void validate() const;

  bool operator==(const PpoConfig&) const = default;
};

struct ControlEnvConfig {
  std::string name = "cartpole";  // cartpole | tmaze
  CartpoleMask mask = CartpoleMask::kPositionsOnly;
  int corridor_length = 10;

  bool operator==(const ControlEnvConfig&) const = default;
};

std::unique_ptr<Environment> make_environment(const ControlEnvConfig& cfg, Rng rng);

struct RolloutBuffer {
  std::vector<Vec> obs;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> logp;
  std::vector<double> values;
  std::vector<RtuState> states;   // after processing obs[t]
  std::vector<TraceStore> traces;
  std::vector<double> advantages;
  std::vector<double> targets;

  RtuState start_state;  // before obs[0]
  TraceStore start_traces;
  Vec next_obs;              // observation after the last step
  double bootstrap_value = 0.0;

  std::size_t size() const { return obs.size(); }
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> targets;
};

// A_t = d_t + discount * lambda * (1 - done_t) A_{t+1},
// d_t = r_t + discount * (1 - done_t) V_{t+1} - V_t, V_T = bootstrap.
Advantages gae_advantages(const std::vector<double>& rewards,
                          const std::vector<double>& values,
                          const std::vector<std::uint8_t>& dones,
                          double bootstrap, double discount, double lambda);

// mean over samples of (r - 1) - log r, r = exp(new - old).
double approx_kl(const std::vector<double>& logp_old,
                 const std::vector<double>& logp_new);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

struct PpoGrads {
  MlpParams encoder;
  ParamGrad recurrent;
  MlpParams actor, critic;
  TensorList list();
};

struct MinibatchLoss {
  double total = 0.0;  // mean of policy + value_coef * value - entropy_coef * entropy
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  int clipped = 0;
  std::vector<double> logp_new;
};

struct EpisodeStats {
  int episodes = 0;
  double return_sum = 0.0;
  int successes = 0;
  int judged = 0;  // episodes that reported success / failure
};

class PpoAgent {
 public:
  PpoAgent(const PpoConfig& config, std::size_t obs_size, int action_count,
           std::uint64_t seed);

  // Collects config.buffer_size steps, continuing the live episode.
  RolloutBuffer collect(Environment& env, EpisodeStats& stats);
  void compute_advantages(RolloutBuffer& buffer) const;
  UpdateStats update(RolloutBuffer& buffer);

  // Loss over buffer[idx] with advantages normalized over idx. When `grads`
  // is given it receives the mean gradient (recurrent part from the stored
  // traces, encoder from the immediate input credit).
  MinibatchLoss evaluate_minibatch(const RolloutBuffer& buffer,
                                   std::span<const std::size_t> idx,
                                   PpoGrads* grads) const;
  PpoGrads zero_grads() const;

  // Re-runs the recurrence over the buffer with the current parameters,
  // refreshing the state and trace snapshots.
  void recompute_snapshots(RolloutBuffer& buffer) const;
  // Refreshes values, bootstrap, advantages and targets from the snapshots.
  void recompute_values(RolloutBuffer& buffer) const;

  const PpoConfig& config() const { return config_; }
  TensorList parameters();
  std::size_t parameter_count();
  const RtuLayer& recurrent() const { return rtu_; }
  MlpParams& encoder() { return encoder_; }
  MlpParams& actor() { return actor_; }
  MlpParams& critic() { return critic_; }
  Adam& optimizer() { return adam_; }

  Vec logits(const RtuState& s) const;
  double value(const RtuState& s) const;

 private:
  Vec features(const RtuState& s) const;

  PpoConfig config_;
  int actions_;
  MlpParams encoder_;
  RtuLayer rtu_;
  MlpParams actor_, critic_;
  Adam adam_;
  Rng policy_rng_, shuffle_rng_;

  // Live episode state between collect() calls.
  bool started_ = false;
  Vec live_obs_;
  RtuState pre_state_;  // before processing live_obs_
  TraceStore pre_traces_;
  double live_return_ = 0.0;
};

struct PpoUpdateRow {
  int update = 0;
  std::int64_t env_steps = 0;
  int episodes = 0;
  double mean_return = 0.0;   // NaN when no episode finished
  double success_rate = 0.0;  // NaN when not applicable
  double trailing_return = 0.0;
  double trailing_success = 0.0;
  UpdateStats stats;
  double wall_seconds = 0.0;
};

struct PpoRunResult {
  std::vector<PpoUpdateRow> rows;
  bool reached_target = false;
  std::int64_t steps_to_target = -1;
  std::string failure;
};

PpoRunResult run_ppo(const PpoConfig& config, const ControlEnvConfig& env,
                     std::uint64_t seed, bool verbose = false);

// Deterministic per-update metrics (no timing).
void write_ppo_csv(const std::string& path, const PpoRunResult& result);

}  // namespace rtu

#endif  // RTU_PPO_HPP_
