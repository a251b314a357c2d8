#ifndef RTU_ENVS_HPP_
#define RTU_ENVS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtu/common.hpp"
#include "rtu/rng.hpp"

namespace rtu {

// ---------------------------------------------------------------------------
// Trace conditioning: a continuing stream of trials. Each trial shows the CS
// for cs_duration steps, waits isi steps (drawn uniformly per trial), shows
// the US for us_duration steps, then idles for an inter-trial interval.
// Observation = [CS, US, distractor_1 .. distractor_k].

struct TraceConditioningConfig {
  int isi_min = 10;
  int isi_max = 20;
  int cs_duration = 4;
  int us_duration = 2;
  int num_distractors = 10;
  double distractor_rate = 0.05;
  int iti_min = 40;
  int iti_max = 60;
  double discount_gamma = 0.9;

  void validate() const;

  bool operator==(const TraceConditioningConfig&) const = default;
};

class TraceConditioning {
 public:
  TraceConditioning(TraceConditioningConfig config, Rng rng);

  // Observation for the next time step.
  Vec next();
  std::size_t observation_size() const {
    return 2 + static_cast<std::size_t>(config_.num_distractors);
  }
  const TraceConditioningConfig& config() const { return config_; }

  std::int64_t trials_started() const { return trials_; }
  int current_isi() const { return isi_; }

  static constexpr int kCsChannel = 0;
  static constexpr int kUsChannel = 1;

 private:
  void start_trial();

  TraceConditioningConfig config_;
  Rng rng_;
  std::int64_t trials_ = 0;
  int isi_ = 0, iti_ = 0;
  int pos_ = 0;  // steps since the current trial's CS onset
};

// Smallest H with gamma^H < 1e-4.
int return_horizon(double gamma);

// G_t = sum_{k=0}^{H} gamma^k us[t+k+1], truncated at the end of the stream.
std::vector<double> compute_return_targets(const std::vector<double>& us,
                                           double gamma, int horizon);

// ---------------------------------------------------------------------------
// Three-state MDP: from s1 or s2 move uniformly to any state; from s3 move
// back to the state visited just before s3. Starts in s1.

class ThreeStateMdp {
 public:
  explicit ThreeStateMdp(Rng rng);
  // Advances and returns the one-hot observation of the new state.
  Vec next();
  Vec observation() const;
  int state() const { return state_; }
  int previous() const { return prev_; }

 private:
  Rng rng_;
  int state_ = 0;
  int prev_ = 0;
};

// ---------------------------------------------------------------------------
// Episodic control environments with discrete actions.

struct EnvStep {
  Vec observation;
  double reward = 0.0;
  bool done = false;
  std::optional<bool> success;  // set on terminal T-maze steps
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual std::size_t observation_size() const = 0;
  virtual int action_count() const = 0;
  virtual Vec reset() = 0;
  virtual EnvStep step(int action) = 0;
};

enum class CartpoleMask { kFull, kPositionsOnly, kVelocitiesOnly };
std::string to_string(CartpoleMask m);
CartpoleMask parse_cartpole_mask(const std::string& s);

class MaskedCartpole final : public Environment {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXLimit = 2.4;
  static constexpr int kMaxSteps = 500;

  MaskedCartpole(CartpoleMask mask, Rng rng);

  std::string name() const override;
  std::size_t observation_size() const override;
  int action_count() const override { return 2; }
  Vec reset() override;
  EnvStep step(int action) override;

  // x, x_dot, theta, theta_dot
  const std::array<double, 4>& physical_state() const { return s_; }
  void set_physical_state(const std::array<double, 4>& s);
  Vec full_observation() const;

 private:
  Vec observe() const;

  CartpoleMask mask_;
  Rng rng_;
  std::array<double, 4> s_{};
  int steps_ = 0;
  bool done_ = true;
};

class TMaze final : public Environment {
 public:
  static constexpr double kCorridorReward = -0.01;
  static constexpr double kGoalReward = 4.0;
  static constexpr double kWrongReward = -0.1;

  TMaze(int corridor_length, Rng rng);

  std::string name() const override { return "tmaze"; }
  // [cue_left, cue_right, junction]
  std::size_t observation_size() const override { return 3; }
  int action_count() const override { return 2; }
  Vec reset() override;
  // In the corridor any action moves forward; at the junction 0 = left,
  // 1 = right.
  EnvStep step(int action) override;

  int corridor_length() const { return length_; }
  int goal() const { return goal_; }
  int position() const { return pos_; }

 private:
  Vec observe() const;

  int length_;
  Rng rng_;
  int goal_ = 0;
  int pos_ = 0;
  bool done_ = true;
};

}  // namespace rtu

#endif  // RTU_ENVS_HPP_
