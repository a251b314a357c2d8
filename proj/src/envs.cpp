#include "rtu/envs.hpp"

#include <cmath>

namespace rtu {

void TraceConditioningConfig::validate() const {
  auto bad = [](const std::string& what) {
    fail(ErrorCode::kConfig, "trace conditioning: " + what);
  };
  if (isi_min < 1 || isi_max < isi_min) bad("need 0 < isi_min <= isi_max");
  if (cs_duration < 1 || us_duration < 1) bad("durations must be >= 1");
  if (num_distractors < 0) bad("num_distractors must be >= 0");
  if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0))
    bad("distractor_rate must lie in [0, 1]");
  if (iti_min < 0 || iti_max < iti_min) bad("need 0 <= iti_min <= iti_max");
  if (!(discount_gamma >= 0.0 && discount_gamma < 1.0))
    bad("discount_gamma must lie in [0, 1)");
}

TraceConditioning::TraceConditioning(TraceConditioningConfig config, Rng rng)
    : config_(config), rng_(rng) {
  config_.validate();
  start_trial();
}

void TraceConditioning::start_trial() {
  ++trials_;
  isi_ = static_cast<int>(rng_.uniform_int(config_.isi_min, config_.isi_max));
  iti_ = static_cast<int>(rng_.uniform_int(config_.iti_min, config_.iti_max));
  pos_ = 0;
}

Vec TraceConditioning::next() {
  const int us_on = config_.cs_duration + isi_;
  const int trial_len = us_on + config_.us_duration + iti_;
  if (pos_ >= trial_len) start_trial();
  Vec obs = Vec::Zero(static_cast<Eigen::Index>(observation_size()));
  const int us_start = config_.cs_duration + isi_;
  if (pos_ < config_.cs_duration) obs[kCsChannel] = 1.0;
  if (pos_ >= us_start && pos_ < us_start + config_.us_duration)
    obs[kUsChannel] = 1.0;
  for (int k = 0; k < config_.num_distractors; ++k)
    if (rng_.bernoulli(config_.distractor_rate)) obs[2 + k] = 1.0;
  ++pos_;
  return obs;
}

int return_horizon(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    fail(ErrorCode::kInvalidArgument, "discount must lie in [0, 1)");
  int h = 0;
  double p = 1.0;
  while (p >= 1e-4) {
    p *= gamma;
    ++h;
  }
  return h;
}

std::vector<double> compute_return_targets(const std::vector<double>& us,
                                           double gamma, int horizon) {
  if (horizon < 0) fail(ErrorCode::kInvalidArgument, "horizon must be >= 0");
  const std::size_t T = us.size();
  std::vector<double> g(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double w = 1.0, acc = 0.0;
    for (int k = 0; k <= horizon; ++k) {
      const std::size_t i = t + static_cast<std::size_t>(k) + 1;
      if (i >= T) break;
      acc += w * us[i];
      w *= gamma;
    }
    g[t] = acc;
  }
  return g;
}

ThreeStateMdp::ThreeStateMdp(Rng rng) : rng_(rng) {}

Vec ThreeStateMdp::observation() const {
  Vec o = Vec::Zero(3);
  o[state_] = 1.0;
  return o;
}

Vec ThreeStateMdp::next() {
  const int from = state_;
  state_ = from == 2 ? prev_ : static_cast<int>(rng_.uniform_int(0, 2));
  prev_ = from;
  return observation();
}

std::string to_string(CartpoleMask m) {
  switch (m) {
    case CartpoleMask::kFull: return "full";
    case CartpoleMask::kPositionsOnly: return "positions_only";
    case CartpoleMask::kVelocitiesOnly: return "velocities_only";
  }
  return "?";
}

CartpoleMask parse_cartpole_mask(const std::string& s) {
  if (s == "full") return CartpoleMask::kFull;
  if (s == "positions_only") return CartpoleMask::kPositionsOnly;
  if (s == "velocities_only") return CartpoleMask::kVelocitiesOnly;
  fail(ErrorCode::kConfig, "unknown cartpole mask '" + s + "'");
}

MaskedCartpole::MaskedCartpole(CartpoleMask mask, Rng rng)
    : mask_(mask), rng_(rng) {}

std::string MaskedCartpole::name() const { return "cartpole_" + to_string(mask_); }

std::size_t MaskedCartpole::observation_size() const {
  return mask_ == CartpoleMask::kFull ? 4 : 2;
}

Vec MaskedCartpole::full_observation() const {
  return Eigen::Vector4d(s_[0], s_[1], s_[2], s_[3]);
}

Vec MaskedCartpole::observe() const {
  switch (mask_) {
    case CartpoleMask::kPositionsOnly: return Eigen::Vector2d(s_[0], s_[2]);
    case CartpoleMask::kVelocitiesOnly: return Eigen::Vector2d(s_[1], s_[3]);
    default: return full_observation();
  }
}

Vec MaskedCartpole::reset() {
  for (double& v : s_) v = rng_.uniform(-0.05, 0.05);
  steps_ = 0;
  done_ = false;
  return observe();
}

void MaskedCartpole::set_physical_state(const std::array<double, 4>& s) {
  s_ = s;
  steps_ = 0;
  done_ = false;
}

EnvStep MaskedCartpole::step(int action) {
  if (action != 0 && action != 1)
    fail(ErrorCode::kInvalidArgument,
         "cartpole action must be 0 or 1, got " + std::to_string(action));
  if (done_) fail(ErrorCode::kInvalidArgument, "cartpole stepped after done");
  constexpr double total = kCartMass + kPoleMass;
  constexpr double pml = kPoleMass * kHalfLength;
  auto& [x, x_dot, th, th_dot] = s_;
  const double force = action == 1 ? kForce : -kForce;
  const double c = std::cos(th), s = std::sin(th);
  const double temp = (force + pml * th_dot * th_dot * s) / total;
  const double th_acc = (kGravity * s - c * temp) /
                        (kHalfLength * (4.0 / 3.0 - kPoleMass * c * c / total));
  const double x_acc = temp - pml * th_acc * c / total;
  x += kTau * x_dot;
  x_dot += kTau * x_acc;
  th += kTau * th_dot;
  th_dot += kTau * th_acc;
  ++steps_;

  EnvStep out;
  out.reward = 1.0;
  const bool failed = std::abs(x) > kXLimit || std::abs(th) > kThetaLimit;
  out.done = failed || steps_ >= kMaxSteps;
  done_ = out.done;
  out.observation = observe();
  return out;
}

TMaze::TMaze(int corridor_length, Rng rng) : length_(corridor_length), rng_(rng) {
  if (length_ < 1) fail(ErrorCode::kConfig, "T-maze corridor length must be >= 1");
}

Vec TMaze::observe() const {
  Vec o = Vec::Zero(3);
  if (pos_ == 0) o[goal_] = 1.0;
  if (pos_ == length_) o[2] = 1.0;
  return o;
}

Vec TMaze::reset() {
  goal_ = static_cast<int>(rng_.uniform_int(0, 1));
  pos_ = 0;
  done_ = false;
  return observe();
}

EnvStep TMaze::step(int action) {
  if (action != 0 && action != 1)
    fail(ErrorCode::kInvalidArgument,
         "T-maze action must be 0 or 1, got " + std::to_string(action));
  if (done_) fail(ErrorCode::kInvalidArgument, "T-maze stepped after done");
  EnvStep out;
  if (pos_ < length_) {
    ++pos_;
    out.reward = kCorridorReward;
    out.observation = observe();
    return out;
  }
  const bool hit = action == goal_;
  out.reward = hit ? kGoalReward : kWrongReward;
  out.done = true;
  out.success = hit;
  done_ = true;
  out.observation = Vec::Zero(3);
  return out;
}

}  // namespace rtu
