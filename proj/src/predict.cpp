#include "rtu/predict.hpp"

#include <cstdio>
#include <deque>

#include "rtu/baselines.hpp"
#include "rtu/mlp.hpp"
#include "rtu/oracles.hpp"

namespace rtu {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::kRtuLinear: return "rtu_linear";
    case Architecture::kRtuNonlinear: return "rtu_nonlinear";
    case Architecture::kLru: return "lru";
    case Architecture::kBlockDiag: return "blockdiag";
  }
  return "?";
}

std::string to_string(LearningMode m) {
  return m == LearningMode::kRtrl ? "rtrl" : "tbptt";
}

std::string to_string(TargetMode m) {
  return m == TargetMode::kTd ? "td" : "mc";
}

Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::kRtuLinear, Architecture::kRtuNonlinear,
                 Architecture::kLru, Architecture::kBlockDiag})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kConfig, "unknown architecture '" + s + "'");
}

LearningMode parse_learning_mode(const std::string& s) {
  if (s == "rtrl") return LearningMode::kRtrl;
  if (s == "tbptt") return LearningMode::kTbptt;
  fail(ErrorCode::kConfig, "unknown learning mode '" + s + "'");
}

TargetMode parse_target_mode(const std::string& s) {
  if (s == "td") return TargetMode::kTd;
  if (s == "mc") return TargetMode::kMonteCarlo;
  fail(ErrorCode::kConfig, "unknown target mode '" + s + "'");
}

namespace {

template <typename G>
std::vector<double> flat_copy(G& g) {
  return flatten(tensors(g));
}

class RtuRtrlCore final : public RecurrentCore {
 public:
  explicit RtuRtrlCore(RtuParams p) : layer_(std::move(p)) {}
  std::size_t feature_size() const override { return 2 * layer_.params().width(); }
  Vec step(const Vec& x) override { return layer_.step(x); }
  std::vector<double> gradient(const Vec& d) override {
    const auto& p = layer_.params();
    ParamGrad g = assemble_param_gradient(
        split_credit(d, layer_.state(), p.variant, p.activation), layer_.traces());
    return flat_copy(g);
  }
  TensorList parameters() override { return tensors(layer_.mutable_params()); }
  void after_update() override {
    project_params(layer_.mutable_params());
    layer_.refresh_coefficients();
  }
  void reset() override { layer_.reset(); }
  std::size_t memory_scalars() const override { return layer_.traces().scalar_count(); }

 private:
  RtuLayer layer_;
};

class RtuTbpttCore final : public RecurrentCore {
 public:
  RtuTbpttCore(RtuParams p, int truncation)
      : params_(std::move(p)),
        coeffs_(derive_coefficients(params_)),
        state_(RtuState::zeros(params_.width())),
        record_(static_cast<std::size_t>(truncation), params_.width()) {}
  std::size_t feature_size() const override { return 2 * params_.width(); }
  Vec step(const Vec& x) override {
    state_ = rtu_step(state_, coeffs_, params_, x);
    record_.push(x, state_);
    return state_.combined(params_.variant, params_.activation);
  }
  std::vector<double> gradient(const Vec& d) override {
    ParamGrad g = tbptt_gradient_last(params_, record_, d);
    return flat_copy(g);
  }
  TensorList parameters() override { return tensors(params_); }
  void after_update() override {
    project_params(params_);
    coeffs_ = derive_coefficients(params_);
  }
  void reset() override {
    state_.set_zero();
    record_.reset(params_.width());
  }
  std::size_t memory_scalars() const override {
    return record_.truncation * (params_.input_size() + 4 * params_.width());
  }

 private:
  RtuParams params_;
  Coefficients coeffs_;
  RtuState state_;
  UnrollRecord record_;
};

class LruCore final : public RecurrentCore {
 public:
  explicit LruCore(LruParams p)
      : params_(std::move(p)),
        state_(LruState::zeros(params_.width())),
        traces_(LruTraces::zeros(params_.width(), params_.input_size())) {}
  std::size_t feature_size() const override { return params_.output_size(); }
  Vec step(const Vec& x) override {
    return lru_step_and_trace(state_, traces_, params_, x);
  }
  std::vector<double> gradient(const Vec& d) override {
    LruGrad g = lru_zero_grad(params_);
    lru_accumulate_gradient(d, state_, traces_, params_, g);
    return flat_copy(g);
  }
  TensorList parameters() override { return tensors(params_); }
  void after_update() override {}
  void reset() override {
    state_ = LruState::zeros(params_.width());
    traces_.set_zero();
  }
  std::size_t memory_scalars() const override { return traces_.scalar_count(); }

 private:
  LruParams params_;
  LruState state_;
  LruTraces traces_;
};

class BlockDiagCore final : public RecurrentCore {
 public:
  explicit BlockDiagCore(BlockDiagParams p)
      : params_(std::move(p)),
        state_(RtuState::zeros(params_.width())),
        traces_(BlockDiagTraces::zeros(params_.width(), params_.input_size())) {}
  std::size_t feature_size() const override { return 2 * params_.width(); }
  Vec step(const Vec& x) override {
    blockdiag_step_and_trace(state_, traces_, params_, x);
    return state_.combined(params_.variant, params_.activation);
  }
  std::vector<double> gradient(const Vec& d) override {
    BlockDiagGrad g = BlockDiagGrad::zeros(params_.width(), params_.input_size());
    blockdiag_accumulate_gradient(
        split_credit(d, state_, params_.variant, params_.activation), traces_, g);
    return flat_copy(g);
  }
  TensorList parameters() override { return tensors(params_); }
  void after_update() override {}
  void reset() override {
    state_.set_zero();
    traces_.set_zero();
  }
  std::size_t memory_scalars() const override { return traces_.scalar_count(); }

 private:
  BlockDiagParams params_;
  RtuState state_;
  BlockDiagTraces traces_;
};

}  // namespace

std::unique_ptr<RecurrentCore> make_recurrent_core(const RecurrentConfig& cfg,
                                                   std::size_t input_size,
                                                   Rng& rng) {
  if (cfg.n < 1) fail(ErrorCode::kConfig, "recurrent width n must be >= 1");
  const auto n = static_cast<std::size_t>(cfg.n);
  const bool tbptt = cfg.mode == LearningMode::kTbptt;
  if (tbptt && cfg.truncation < 1)
    fail(ErrorCode::kConfig, "truncation must be >= 1");
  switch (cfg.architecture) {
    case Architecture::kRtuLinear:
    case Architecture::kRtuNonlinear: {
      const Variant v = cfg.architecture == Architecture::kRtuLinear
                            ? Variant::kLinear
                            : Variant::kNonlinear;
      RtuParams p = init_rtu_params(n, input_size, v, cfg.activation, cfg.init,
                                    rng, cfg.r_param, cfg.theta_param);
      if (tbptt) return std::make_unique<RtuTbpttCore>(std::move(p), cfg.truncation);
      return std::make_unique<RtuRtrlCore>(std::move(p));
    }
    case Architecture::kLru:
      if (tbptt) break;
      return std::make_unique<LruCore>(init_lru_params(n, input_size, n, cfg.init, rng));
    case Architecture::kBlockDiag:
      if (tbptt) break;
      return std::make_unique<BlockDiagCore>(init_blockdiag_params(
          n, input_size, Variant::kLinear, cfg.activation, cfg.init, rng));
  }
  fail(ErrorCode::kUnsupported,
       "T-BPTT training is only wired for RTU architectures, not " +
           to_string(cfg.architecture));
}

PredictionMetrics run_online_prediction(const PredictConfig& cfg,
                                        std::uint64_t seed) {
  cfg.env.validate();
  if (cfg.steps < 1) fail(ErrorCode::kConfig, "steps must be >= 1");
  if (cfg.msre_window < 1) fail(ErrorCode::kConfig, "msre_window must be >= 1");
  TraceConditioning env(cfg.env, make_rng(seed, Stream::kEnvironment));
  Rng init_rng = make_rng(seed, Stream::kInit);
  auto core = make_recurrent_core(cfg.recurrent, env.observation_size(), init_rng);

  const auto F = static_cast<Eigen::Index>(core->feature_size());
  Vec w = Vec::Zero(F);
  double b = 0.0;
  TensorList params = {flat(w), std::span<double>(&b, 1)};
  append(params, core->parameters());
  std::size_t total = 0;
  for (auto s : params) total += s.size();
  Adam adam(cfg.adam);

  const double gamma = cfg.env.discount_gamma;
  const int H = return_horizon(gamma);
  const int us_ch = TraceConditioning::kUsChannel;

  // Gradient of v_t = w . f_t + b w.r.t. everything, flattened.
  auto value_gradient = [&](const Vec& f) {
    std::vector<double> g(total);
    std::copy(f.data(), f.data() + f.size(), g.begin());
    g[static_cast<std::size_t>(F)] = 1.0;
    const auto rec = core->gradient(w);
    std::copy(rec.begin(), rec.end(), g.begin() + F + 1);
    return g;
  };
  std::vector<double> scaled(total);
  auto apply = [&](double delta, const std::vector<double>& g) {
    // Ascend delta * grad v: Adam minimizes, so pass -delta * grad v.
    for (std::size_t i = 0; i < total; ++i) scaled[i] = -delta * g[i];
    TensorList grads;
    std::size_t off = 0;
    for (auto s : params) {
      grads.emplace_back(scaled.data() + off, s.size());
      off += s.size();
    }
    adam.step(params, grads);
    core->after_update();
  };

  PredictionMetrics m;
  std::vector<double> us, preds;
  us.reserve(static_cast<std::size_t>(cfg.steps));
  preds.reserve(static_cast<std::size_t>(cfg.steps));
  std::deque<std::vector<double>> pending;  // Monte-Carlo mode: grad v_t

  std::vector<double> window(static_cast<std::size_t>(cfg.msre_window), 0.0);
  double window_sum = 0.0, total_err = 0.0;
  double g_mean = 0.0, g_m2 = 0.0;

  std::vector<double> g_prev;
  double v_prev = 0.0;
  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    const Vec x = env.next();
    const Vec f = core->step(x);
    const double v = w.dot(f) + b;
    if (!std::isfinite(v)) {
      m.diverged = true;
      m.failure = "non-finite prediction at step " + std::to_string(t);
      break;
    }
    us.push_back(x[us_ch]);
    preds.push_back(v);
    std::vector<double> g = value_gradient(f);

    if (cfg.target == TargetMode::kTd) {
      if (t > 0) apply(x[us_ch] + gamma * v - v_prev, g_prev);
      g_prev = std::move(g);
      v_prev = v;
    } else {
      pending.push_back(std::move(g));
    }

    // G for index t - H - 1 is now complete.
    const std::int64_t idx = t - H - 1;
    if (idx < 0) continue;
    double G = 0.0, wk = 1.0;
    for (int k = 0; k <= H; ++k) {
      G += wk * us[static_cast<std::size_t>(idx + k + 1)];
      wk *= gamma;
    }
    const double pred = preds[static_cast<std::size_t>(idx)];
    if (cfg.target == TargetMode::kMonteCarlo) {
      apply(G - pred, pending.front());
      pending.pop_front();
    }
    const double err = (pred - G) * (pred - G);
    ++m.evaluated;
    total_err += err;
    const std::size_t slot = static_cast<std::size_t>(m.evaluated - 1) % window.size();
    window_sum += err - window[slot];
    window[slot] = err;
    const double dg = G - g_mean;
    g_mean += dg / static_cast<double>(m.evaluated);
    g_m2 += dg * (G - g_mean);

    const auto filled = std::min<std::int64_t>(m.evaluated, cfg.msre_window);
    m.windowed_msre = window_sum / static_cast<double>(filled);
    m.cumulative_msre = total_err / static_cast<double>(m.evaluated);
    if (cfg.log_every > 0 && idx % cfg.log_every == 0)
      m.rows.push_back({idx, m.windowed_msre, m.cumulative_msre, pred, G});
    if (m.windowed_msre > cfg.divergence_threshold) {
      m.diverged = true;
      m.failure = "windowed MSRE " + std::to_string(m.windowed_msre) +
                  " exceeded the divergence threshold at step " + std::to_string(t);
      break;
    }
  }
  m.steps = static_cast<std::int64_t>(preds.size());
  if (m.evaluated > 0) m.baseline_msre = g_m2 / static_cast<double>(m.evaluated);
  return m;
}

void write_prediction_csv(const std::string& path, const PredictionMetrics& m) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  std::fprintf(f, "step,windowed_msre,cumulative_msre,prediction,target\n");
  for (const MsreRow& r : m.rows)
    std::fprintf(f, "%lld,%.10g,%.10g,%.10g,%.10g\n", static_cast<long long>(r.step),
                 r.windowed_msre, r.cumulative_msre, r.prediction, r.target);
  if (std::fclose(f) != 0) fail(ErrorCode::kIo, "error writing " + path);
}

}  // namespace rtu
