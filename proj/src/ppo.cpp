#include "rtu/ppo.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace rtu {

void PpoConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, "ppo: " + what); };
  if (buffer_size < 1 || minibatches < 1) bad("buffer_size and minibatches must be >= 1");
  if (buffer_size % minibatches != 0) bad("buffer_size must be divisible by minibatches");
  if (epochs < 1) bad("epochs must be >= 1");
  if (!(policy_clip > 0.0) || !(value_clip > 0.0) || !(grad_clip > 0.0))
    bad("clip parameters must be > 0");
  if (!(discount >= 0.0 && discount <= 1.0)) bad("discount must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) bad("gae_lambda must lie in [0, 1]");
  if (!(lr >= 0.0)) bad("lr must be >= 0");
  if (target_window < 1) bad("target_window must be >= 1");
  if (encoder_hidden < 1 || recurrent_n < 1 || head_hidden < 1)
    bad("layer sizes must be >= 1");
}

std::unique_ptr<Environment> make_environment(const ControlEnvConfig& cfg, Rng rng) {
  if (cfg.name == "cartpole") return std::make_unique<MaskedCartpole>(cfg.mask, rng);
  if (cfg.name == "tmaze") return std::make_unique<TMaze>(cfg.corridor_length, rng);
  fail(ErrorCode::kConfig, "unknown control environment '" + cfg.name + "'");
}

Advantages gae_advantages(const std::vector<double>& rewards,
                          const std::vector<double>& values,
                          const std::vector<std::uint8_t>& dones,
                          double bootstrap, double discount, double lambda) {
  const std::size_t T = rewards.size();
  require_shape(values.size() == T && dones.size() == T,
                "gae: rewards, values and dones must have equal length");
  Advantages out;
  out.advantages.assign(T, 0.0);
  out.targets.assign(T, 0.0);
  double next_adv = 0.0, next_value = bootstrap;
  for (std::size_t i = T; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + discount * live * next_value - values[i];
    next_adv = delta + discount * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.targets[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

double approx_kl(const std::vector<double>& logp_old,
                 const std::vector<double>& logp_new) {
  require_shape(logp_old.size() == logp_new.size(),
                "approx_kl: arrays differ in length");
  if (logp_old.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < logp_old.size(); ++i) {
    const double d = logp_new[i] - logp_old[i];
    sum += std::expm1(d) - d;
  }
  return sum / static_cast<double>(logp_old.size());
}

namespace {

struct Categorical {
  Vec prob;
  Vec logp;
  double entropy;
};

Categorical categorical(const Vec& logits) {
  Categorical c;
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  c.logp = logits.array() - lse;
  c.prob = c.logp.array().exp();
  c.entropy = -(c.prob.array() * c.logp.array()).sum();
  return c;
}

int sample(const Vec& prob, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    acc += prob[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(prob.size() - 1);
}

}  // namespace

PpoAgent::PpoAgent(const PpoConfig& config, std::size_t obs_size,
                   int action_count, std::uint64_t seed)
    : config_(config),
      actions_(action_count),
      rtu_(RtuParams{}),
      adam_(AdamConfig{config.lr}),
      policy_rng_(make_rng(seed, Stream::kPolicy)),
      shuffle_rng_(make_rng(seed, Stream::kShuffle)) {
  config_.validate();
  if (action_count < 2) fail(ErrorCode::kConfig, "ppo needs >= 2 actions");
  Rng init = make_rng(seed, Stream::kInit);
  const auto eh = static_cast<std::size_t>(config_.encoder_hidden);
  const auto n = static_cast<std::size_t>(config_.recurrent_n);
  const auto hh = static_cast<std::size_t>(config_.head_hidden);
  encoder_ = init_mlp({obs_size, eh}, {Activation::kTanh}, init);
  rtu_ = RtuLayer(init_rtu_params(n, eh, Variant::kNonlinear,
                                  config_.recurrent_activation,
                                  config_.recurrent_init, init));
  actor_ = init_mlp({2 * n, hh, static_cast<std::size_t>(action_count)},
                    {Activation::kTanh, Activation::kIdentity}, init, 0.01);
  critic_ = init_mlp({2 * n, hh, 1}, {Activation::kTanh, Activation::kIdentity}, init);
  pre_state_ = RtuState::zeros(n);
  pre_traces_ = TraceStore::zeros(n, eh);
}

TensorList PpoAgent::parameters() {
  TensorList out = tensors(encoder_);
  append(out, tensors(rtu_.mutable_params()));
  append(out, tensors(actor_));
  append(out, tensors(critic_));
  return out;
}

std::size_t PpoAgent::parameter_count() {
  std::size_t k = 0;
  for (auto s : parameters()) k += s.size();
  return k;
}

Vec PpoAgent::features(const RtuState& s) const {
  return s.combined(rtu_.params().variant, rtu_.params().activation);
}

Vec PpoAgent::logits(const RtuState& s) const { return mlp_forward(actor_, features(s)); }

double PpoAgent::value(const RtuState& s) const {
  return mlp_forward(critic_, features(s))[0];
}

RolloutBuffer PpoAgent::collect(Environment& env, EpisodeStats& stats) {
  if (!started_) {
    live_obs_ = env.reset();
    rtu_.reset();
    pre_state_ = rtu_.state();
    pre_traces_ = rtu_.traces();
    rtu_.step(mlp_forward(encoder_, live_obs_));
    live_return_ = 0.0;
    started_ = true;
  }
  const auto B = static_cast<std::size_t>(config_.buffer_size);
  RolloutBuffer buf;
  buf.start_state = pre_state_;
  buf.start_traces = pre_traces_;
  buf.obs.reserve(B);
  buf.states.reserve(B);
  buf.traces.reserve(B);
  for (std::size_t t = 0; t < B; ++t) {
    const RtuState& s = rtu_.state();
    const Categorical pi = categorical(logits(s));
    const int a = sample(pi.prob, policy_rng_);
    buf.obs.push_back(live_obs_);
    buf.states.push_back(s);
    buf.traces.push_back(rtu_.traces());
    buf.actions.push_back(a);
    buf.logp.push_back(pi.logp[a]);
    buf.values.push_back(value(s));

    EnvStep step;
    try {
      step = env.step(a);
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " (rollout step " + std::to_string(t) + ")");
    }
    buf.rewards.push_back(step.reward);
    buf.dones.push_back(step.done ? 1 : 0);
    live_return_ += step.reward;
    Vec next;
    if (step.done) {
      ++stats.episodes;
      stats.return_sum += live_return_;
      if (step.success.has_value()) {
        ++stats.judged;
        if (*step.success) ++stats.successes;
      }
      live_return_ = 0.0;
      next = env.reset();
      rtu_.reset();
    } else {
      next = std::move(step.observation);
    }
    if (t + 1 == B) {
      pre_state_ = rtu_.state();
      pre_traces_ = rtu_.traces();
    }
    rtu_.step(mlp_forward(encoder_, next));
    live_obs_ = std::move(next);
  }
  buf.next_obs = live_obs_;
  buf.bootstrap_value = value(rtu_.state());
  compute_advantages(buf);
  return buf;
}

void PpoAgent::compute_advantages(RolloutBuffer& buf) const {
  Advantages a = gae_advantages(buf.rewards, buf.values, buf.dones,
                                buf.bootstrap_value, config_.discount,
                                config_.gae_lambda);
  buf.advantages = std::move(a.advantages);
  buf.targets = std::move(a.targets);
}

void PpoAgent::recompute_snapshots(RolloutBuffer& buf) const {
  RtuLayer layer(rtu_.params());
  layer.set_state(buf.start_state, buf.start_traces);
  for (std::size_t t = 0; t < buf.size(); ++t) {
    if (t > 0 && buf.dones[t - 1]) layer.reset();
    layer.step(mlp_forward(encoder_, buf.obs[t]));
    buf.states[t] = layer.state();
    buf.traces[t] = layer.traces();
  }
}

void PpoAgent::recompute_values(RolloutBuffer& buf) const {
  for (std::size_t t = 0; t < buf.size(); ++t) buf.values[t] = value(buf.states[t]);
  RtuLayer layer(rtu_.params());
  layer.set_state(buf.states.back(), buf.traces.back());
  if (buf.dones.back()) layer.reset();
  layer.step(mlp_forward(encoder_, buf.next_obs));
  buf.bootstrap_value = value(layer.state());
  compute_advantages(buf);
}

TensorList PpoGrads::list() {
  TensorList out = tensors(encoder);
  append(out, tensors(recurrent));
  append(out, tensors(actor));
  append(out, tensors(critic));
  return out;
}

PpoGrads PpoAgent::zero_grads() const {
  return {encoder_.zeros_like(),
          ParamGrad::zeros(rtu_.params().width(), rtu_.params().input_size()),
          actor_.zeros_like(), critic_.zeros_like()};
}

MinibatchLoss PpoAgent::evaluate_minibatch(const RolloutBuffer& buf,
                                           std::span<const std::size_t> idx,
                                           PpoGrads* grads) const {
  const std::size_t M = idx.size();
  require_shape(M > 0, "ppo: empty minibatch");
  const double eps = config_.policy_clip;
  double mean = 0.0, sq = 0.0;
  for (std::size_t t : idx) mean += buf.advantages[t];
  mean /= static_cast<double>(M);
  for (std::size_t t : idx) sq += (buf.advantages[t] - mean) * (buf.advantages[t] - mean);
  const double sd = M > 1 ? std::sqrt(sq / static_cast<double>(M - 1)) : 0.0;
  const double inv = 1.0 / static_cast<double>(M);

  MinibatchLoss out;
  out.logp_new.reserve(M);
  for (std::size_t t : idx) {
    const RtuState& s = buf.states[t];
    const Vec f = features(s);
    ForwardCache ca, cc, ce;
    const Categorical pi = categorical(mlp_forward(actor_, f, ca));
    const double v = mlp_forward(critic_, f, cc)[0];
    const int a = buf.actions[t];
    const double adv = (buf.advantages[t] - mean) / (sd + 1e-8);
    const double ratio = std::exp(pi.logp[a] - buf.logp[t]);
    const double surr1 = ratio * adv;
    const double surr2 = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    // The unclipped term carries gradient unless the clipped one is
    // strictly smaller.
    const bool clip_active = surr2 < surr1;
    const double pl = -std::min(surr1, surr2);

    const double R = buf.targets[t], v_old = buf.values[t];
    const double v_clip =
        v_old + std::clamp(v - v_old, -config_.value_clip, config_.value_clip);
    const double l1 = (v - R) * (v - R), l2 = (v_clip - R) * (v_clip - R);
    const double vl = 0.5 * std::max(l1, l2);
    if (!std::isfinite(pl) || !std::isfinite(vl))
      fail(ErrorCode::kNumeric,
           "ppo: non-finite loss at buffer index " + std::to_string(t));

    out.policy += pl * inv;
    out.value += vl * inv;
    out.entropy += pi.entropy * inv;
    out.clipped += clip_active ? 1 : 0;
    out.logp_new.push_back(pi.logp[a]);
    if (!grads) continue;

    Vec d_logits = Vec::Zero(actions_);
    if (!clip_active) {
      Vec dlogp = -pi.prob;
      dlogp[a] += 1.0;
      d_logits -= ratio * adv * dlogp;
    }
    d_logits.array() +=
        config_.entropy_coef * pi.prob.array() * (pi.logp.array() + pi.entropy);
    double d_v = 0.0;
    if (l1 >= l2) {
      d_v = config_.value_coef * (v - R);
    } else if (std::abs(v - v_old) < config_.value_clip) {
      d_v = config_.value_coef * (v_clip - R);
    }
    d_logits *= inv;
    d_v *= inv;

    Vec d_f = mlp_backward_accumulate(actor_, ca, d_logits, grads->actor);
    d_f += mlp_backward_accumulate(critic_, cc, Vec::Constant(1, d_v), grads->critic);
    const CreditSignal credit =
        split_credit(d_f, s, rtu_.params().variant, rtu_.params().activation);
    accumulate_param_gradient(credit, buf.traces[t], grads->recurrent);
    const Vec d_x = input_credit(credit, rtu_.coefficients(), rtu_.params(), s);
    mlp_forward(encoder_, buf.obs[t], ce);
    mlp_backward_accumulate(encoder_, ce, d_x, grads->encoder);
  }
  out.total = out.policy + config_.value_coef * out.value -
              config_.entropy_coef * out.entropy;
  return out;
}

UpdateStats PpoAgent::update(RolloutBuffer& buf) {
  const std::size_t B = buf.size();
  require_shape(B == static_cast<std::size_t>(config_.buffer_size),
                "ppo: buffer length differs from buffer_size");
  if (buf.advantages.size() != B) compute_advantages(buf);
  const std::size_t M = B / static_cast<std::size_t>(config_.minibatches);
  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  std::vector<double> old_lp, new_lp;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    for (std::size_t i = B; i-- > 1;) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng_.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }
    const bool last = epoch + 1 == config_.epochs;
    for (int mb = 0; mb < config_.minibatches; ++mb) {
      const std::span<const std::size_t> idx(
          order.data() + static_cast<std::size_t>(mb) * M, M);
      PpoGrads g = zero_grads();
      MinibatchLoss loss;
      try {
        loss = evaluate_minibatch(buf, idx, &g);
      } catch (const Error& e) {
        fail(e.code(), std::string(e.what()) + ", epoch " + std::to_string(epoch));
      }
      TensorList grads = g.list();
      const double norm = clip_global_norm(grads, config_.grad_clip);
      adam_.step(parameters(), grads);
      project_params(rtu_.mutable_params());
      rtu_.refresh_coefficients();
      if (last) {
        const double w = static_cast<double>(M) / static_cast<double>(B);
        stats.policy_loss += loss.policy * w;
        stats.value_loss += loss.value * w;
        stats.entropy += loss.entropy * w;
        stats.clip_fraction += loss.clipped / static_cast<double>(B);
        stats.grad_norm += norm / config_.minibatches;
        for (std::size_t k = 0; k < M; ++k) {
          old_lp.push_back(buf.logp[idx[k]]);
          new_lp.push_back(loss.logp_new[k]);
        }
      }
    }
    if (!last) {
      if (config_.recompute_traces) recompute_snapshots(buf);
      if (config_.recompute_targets) recompute_values(buf);
    }
  }
  stats.approx_kl = approx_kl(old_lp, new_lp);
  return stats;
}

namespace {

// Mean of the finite values of `field` over the last `window` rows
// (including `row`); NaN if none are finite.
double trailing_mean(const std::vector<PpoUpdateRow>& rows, const PpoUpdateRow& row,
                     int window, double PpoUpdateRow::*field) {
  double sum = 0.0;
  int count = 0;
  auto add = [&](double v) {
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  };
  add(row.*field);
  for (int k = 1; k < window && k <= static_cast<int>(rows.size()); ++k)
    add(rows[rows.size() - static_cast<std::size_t>(k)].*field);
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

PpoRunResult run_ppo(const PpoConfig& config, const ControlEnvConfig& env_cfg,
                     std::uint64_t seed, bool verbose) {
  config.validate();
  auto env = make_environment(env_cfg, make_rng(seed, Stream::kEnvironment));
  PpoAgent agent(config, env->observation_size(), env->action_count(), seed);
  PpoRunResult result;
  std::int64_t steps = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int u = 1; steps < config.total_steps; ++u) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeStats ep;
    PpoUpdateRow row;
    try {
      RolloutBuffer buf = agent.collect(*env, ep);
      steps += static_cast<std::int64_t>(buf.size());
      row.stats = agent.update(buf);
    } catch (const Error& e) {
      result.failure = "update " + std::to_string(u) + ": " + e.what();
      break;
    }
    row.update = u;
    row.env_steps = steps;
    row.episodes = ep.episodes;
    row.mean_return = ep.episodes > 0 ? ep.return_sum / ep.episodes : nan;
    row.success_rate =
        ep.judged > 0 ? static_cast<double>(ep.successes) / ep.judged : nan;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.trailing_return = trailing_mean(result.rows, row, config.target_window,
                                        &PpoUpdateRow::mean_return);
    row.trailing_success = trailing_mean(result.rows, row, config.target_window,
                                         &PpoUpdateRow::success_rate);
    result.rows.push_back(row);
    if (verbose)
      std::fprintf(stderr, "update %d steps %lld return %.2f (%.2f) success %.3f (%.3f) kl %.5f\n",
                   u, static_cast<long long>(steps), row.mean_return,
                   row.trailing_return, row.success_rate, row.trailing_success,
                   row.stats.approx_kl);
    const bool full = static_cast<int>(result.rows.size()) >= config.target_window;
    if (full && (row.trailing_return >= config.target_return ||
                 row.trailing_success >= config.target_success)) {
      result.reached_target = true;
      result.steps_to_target = steps;
      break;
    }
  }
  return result;
}

namespace {

std::FILE* open_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  return f;
}

void close_csv(std::FILE* f, const std::string& path) {
  if (std::fclose(f) != 0) fail(ErrorCode::kIo, "error writing " + path);
}

}  // namespace

void write_ppo_csv(const std::string& path, const PpoRunResult& r) {
  std::FILE* f = open_csv(path);
  std::fprintf(f,
               "update,env_steps,episodes,mean_return,success_rate,trailing_return,"
               "trailing_success,policy_loss,value_loss,entropy,approx_kl,"
               "clip_fraction\n");
  for (const auto& row : r.rows)
    std::fprintf(f, "%d,%lld,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                 row.update, static_cast<long long>(row.env_steps), row.episodes,
                 row.mean_return, row.success_rate, row.trailing_return,
                 row.trailing_success, row.stats.policy_loss,
                 row.stats.value_loss, row.stats.entropy, row.stats.approx_kl,
                 row.stats.clip_fraction);
  close_csv(f, path);
}

}  // namespace rtu
