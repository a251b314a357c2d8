#include "rtu/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>

#include "rtu/baselines.hpp"
#include "rtu/envs.hpp"
#include "rtu/oracles.hpp"
#include "rtu/predict.hpp"

namespace rtu {

namespace {

std::FILE* open_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  return f;
}

void close_csv(std::FILE* f, const std::string& path) {
  if (std::fclose(f) != 0) fail(ErrorCode::kIo, "error writing " + path);
}

Eigen::Index argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return i;
}

}  // namespace

// ---------------------------------------------------------------------------

EigenResult run_eigen_experiment(const EigenConfig& cfg, std::uint64_t seed) {
  if (cfg.n != 3)
    fail(ErrorCode::kUnsupported, "eigen experiment counts eigenvalues of 3x3 only");
  if (cfg.truncation < 1 || cfg.steps < 1 || cfg.accuracy_window < 1)
    fail(ErrorCode::kConfig, "eigen: truncation, steps and accuracy_window must be >= 1");
  ThreeStateMdp mdp(make_rng(seed, Stream::kEnvironment));
  Rng init = make_rng(seed, Stream::kInit);
  DenseRnnParams p = init_dense_rnn(3, 3, 3, init);
  Adam adam(AdamConfig{cfg.lr});
  DenseWindow win(static_cast<std::size_t>(cfg.truncation), 3);

  Vec obs = mdp.observation();
  Vec h = dense_linear_rnn_step(Vec::Zero(3), p, obs);
  win.push(obs, h);

  EigenResult res;
  std::deque<int> hits;
  int hit_sum = 0;
  std::deque<double> losses;
  double loss_sum = 0.0;
  const auto tail_from = cfg.steps - std::max<std::int64_t>(1, cfg.steps / 10);
  std::int64_t tail_count = 0, tail_complex = 0;
  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    const int cur = mdp.state();
    const Vec next = mdp.next();
    const int target = mdp.state();
    if (cur == 2) {
      const int hit = argmax(p.w_y * h + p.b_y) == target ? 1 : 0;
      hits.push_back(hit);
      hit_sum += hit;
      if (static_cast<int>(hits.size()) > cfg.accuracy_window) {
        hit_sum -= hits.front();
        hits.pop_front();
      }
      if (res.first_perfect_step < 0 &&
          static_cast<int>(hits.size()) == cfg.accuracy_window &&
          hit_sum == cfg.accuracy_window)
        res.first_perfect_step = t;
    }
    DenseRnnGrad g = dense_tbptt_gradient(p, win, target);
    adam.step(p, g.grad);
    losses.push_back(g.loss);
    loss_sum += g.loss;
    if (static_cast<int>(losses.size()) > cfg.accuracy_window) {
      loss_sum -= losses.front();
      losses.pop_front();
    }
    const int complex = count_complex_eigenvalues_3x3(p.w_h);
    if (t >= tail_from) {
      ++tail_count;
      tail_complex += complex;
    }
    h = dense_linear_rnn_step(h, p, next);
    if (!h.allFinite())
      fail(ErrorCode::kNumeric, "eigen: non-finite state at step " + std::to_string(t));
    win.push(next, h);

    const double acc = hits.empty() ? 0.0 : static_cast<double>(hit_sum) / hits.size();
    res.final_s3_accuracy = acc;
    if (cfg.log_every > 0 && (t + 1) % cfg.log_every == 0)
      res.rows.push_back({t + 1, acc, loss_sum / losses.size(), complex});
  }
  res.final_complex_mean = static_cast<double>(tail_complex) / tail_count;
  return res;
}

void write_eigen_csv(const std::string& path, const EigenResult& r) {
  std::FILE* f = open_csv(path);
  std::fprintf(f, "step,s3_accuracy,loss,complex_count\n");
  for (const auto& row : r.rows)
    std::fprintf(f, "%lld,%.10g,%.10g,%d\n", static_cast<long long>(row.step),
                 row.s3_accuracy, row.loss, row.complex_count);
  close_csv(f, path);
}

// ---------------------------------------------------------------------------

namespace {

double rel_flat(std::vector<double> a, std::vector<double> b) {
  return relative_error(std::span<const double>(a), std::span<const double>(b));
}

}  // namespace

GradcheckResult run_gradcheck(const GradcheckConfig& cfg, std::uint64_t seed) {
  if (cfg.n < 1 || cfg.d < 1 || cfg.length < 1 || cfg.instances < 1)
    fail(ErrorCode::kConfig, "gradcheck: sizes must be >= 1");
  Rng rng = make_rng(seed, Stream::kOracle);
  const auto n = static_cast<std::size_t>(cfg.n), d = static_cast<std::size_t>(cfg.d);
  const auto T = static_cast<std::size_t>(cfg.length);
  InitOptions init;
  init.r_min = 0.4;
  init.r_max = 0.95;
  GradcheckResult res;
  auto record = [&](const std::string& arch, int k, double e1, double e2) {
    const bool ok = e1 <= cfg.rtrl_tolerance && e2 <= cfg.fd_tolerance;
    res.rows.push_back({arch, k, e1, e2, ok});
    res.all_pass = res.all_pass && ok;
    res.max_rtrl_error = std::max(res.max_rtrl_error, e1);
    res.max_fd_error = std::max(res.max_fd_error, e2);
  };
  auto inputs = [&] {
    std::vector<Vec> xs;
    for (std::size_t t = 0; t < T; ++t) {
      Vec x(static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
      xs.push_back(x);
    }
    return xs;
  };

  for (int k = 0; k < cfg.instances; ++k) {
    struct RtuCase {
      const char* name;
      Variant v;
      Activation f;
    };
    for (const RtuCase& c : {RtuCase{"rtu_linear_relu", Variant::kLinear, Activation::kRelu},
                             RtuCase{"rtu_nonlinear_tanh", Variant::kNonlinear, Activation::kTanh}}) {
      RtuParams p = init_rtu_params(n, d, c.v, c.f, init, rng);
      const auto xs = inputs();
      const auto loss = random_quadratic_loss(2 * n, 2, T, rng);
      ParamGrad r = rtrl_gradient(p, xs, loss), b = bptt_gradient(p, xs, loss);
      const auto fd = finite_difference_gradient(
          p, [&] { return rtu_sequence_loss(p, xs, loss); }, cfg.fd_step);
      const auto bf = flatten(tensors(b));
      record(c.name, k, rel_flat(flatten(tensors(r)), bf), rel_flat(fd, bf));
    }
    {
      LruParams p = init_lru_params(n, d, 2, init, rng);
      const auto xs = inputs();
      const auto loss = random_quadratic_loss(2, 2, T, rng);
      LruGrad r = lru_rtrl_gradient(p, xs, loss), b = lru_bptt_gradient(p, xs, loss);
      const auto fd = finite_difference_gradient(
          p, [&] { return lru_sequence_loss(p, xs, loss); }, cfg.fd_step);
      const auto bf = flatten(tensors(b));
      record("lru", k, rel_flat(flatten(tensors(r)), bf), rel_flat(fd, bf));
    }
    {
      BlockDiagParams p = init_blockdiag_params(n, d, Variant::kLinear,
                                                Activation::kTanh, init, rng);
      for (Eigen::Index i = 0; i < p.b.size(); ++i) {
        p.b[i] += rng.uniform(-0.2, 0.2);
        p.d[i] += rng.uniform(-0.2, 0.2);
      }
      const auto xs = inputs();
      const auto loss = random_quadratic_loss(2 * n, 2, T, rng);
      BlockDiagGrad r = blockdiag_rtrl_gradient(p, xs, loss);
      BlockDiagGrad b = blockdiag_bptt_gradient(p, xs, loss);
      const auto fd = finite_difference_gradient(
          p, [&] { return blockdiag_sequence_loss(p, xs, loss); }, cfg.fd_step);
      const auto bf = flatten(tensors(b));
      record("blockdiag", k, rel_flat(flatten(tensors(r)), bf), rel_flat(fd, bf));
    }
  }
  return res;
}

void write_gradcheck_csv(const std::string& path, const GradcheckResult& r) {
  std::FILE* f = open_csv(path);
  std::fprintf(f, "architecture,instance,rtrl_vs_bptt,fd_vs_bptt,pass\n");
  for (const auto& row : r.rows)
    std::fprintf(f, "%s,%d,%.6e,%.6e,%d\n", row.architecture.c_str(), row.instance,
                 row.rtrl_vs_bptt, row.fd_vs_bptt, row.pass ? 1 : 0);
  close_csv(f, path);
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// One timed subject: an update routine over a fixed input pool.
struct Subject {
  std::string method;
  int T;
  std::function<void(std::size_t)> update;  // argument: input index
  int per_call_samples;                     // samples consumed per call
  std::vector<double> samples_us;
};

}  // namespace

std::vector<TimingRecord> measure_update_time(const TimingConfig& cfg,
                                              std::uint64_t seed) {
  if (cfg.repetitions < 30)
    fail(ErrorCode::kConfig, "timing: at least 30 repetitions are required");
  if (cfg.n < 1 || cfg.d < 1 || cfg.updates_per_repetition < 1)
    fail(ErrorCode::kConfig, "timing: sizes must be >= 1");
  Rng rng = make_rng(seed, Stream::kInit);
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const auto F = static_cast<Eigen::Index>(2 * cfg.n);
  std::vector<Vec> xs, ds;
  for (int i = 0; i < 256; ++i) {
    Vec x(d), g(F);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index j = 0; j < F; ++j) g[j] = rng.uniform(-1.0, 1.0);
    xs.push_back(x);
    ds.push_back(g);
  }

  RecurrentConfig rc;
  rc.architecture = Architecture::kRtuLinear;
  rc.n = cfg.n;
  // Cores and optimizers live for the whole measurement.
  std::vector<std::unique_ptr<RecurrentCore>> cores;
  std::vector<std::unique_ptr<Adam>> adams;
  std::vector<std::unique_ptr<RtuParams>> batch_params;
  std::vector<std::unique_ptr<UnrollRecord>> batch_records;
  std::vector<Subject> subjects;

  auto online = [&](LearningMode mode, int T, const char* name) {
    rc.mode = mode;
    rc.truncation = T;
    Rng r = make_rng(seed, Stream::kInit);
    cores.push_back(make_recurrent_core(rc, static_cast<std::size_t>(cfg.d), r));
    adams.push_back(std::make_unique<Adam>(AdamConfig{1e-6}));
    RecurrentCore* core = cores.back().get();
    Adam* adam = adams.back().get();
    TensorList params = core->parameters();
    subjects.push_back({name, T,
                        [&, core, adam, params](std::size_t i) {
                          core->step(xs[i % xs.size()]);
                          std::vector<double> g = core->gradient(ds[i % ds.size()]);
                          TensorList gl;
                          std::size_t off = 0;
                          for (auto s : params) {
                            gl.emplace_back(g.data() + off, s.size());
                            off += s.size();
                          }
                          adam->step(params, gl);
                          core->after_update();
                        },
                        1,
                        {}});
  };

  for (int T : cfg.truncations) {
    if (T < 1) fail(ErrorCode::kConfig, "timing: truncations must be >= 1");
    online(LearningMode::kRtrl, T, "rtrl");
    online(LearningMode::kTbptt, T, "tbptt_incremental");

    // Non-overlapping windows: T forward steps, then one update over the window.
    Rng r = make_rng(seed, Stream::kInit);
    batch_params.push_back(std::make_unique<RtuParams>(init_rtu_params(
        static_cast<std::size_t>(cfg.n), static_cast<std::size_t>(cfg.d),
        Variant::kLinear, Activation::kRelu, {}, r)));
    batch_records.push_back(std::make_unique<UnrollRecord>(
        static_cast<std::size_t>(T), static_cast<std::size_t>(cfg.n)));
    adams.push_back(std::make_unique<Adam>(AdamConfig{1e-6}));
    RtuParams* p = batch_params.back().get();
    UnrollRecord* rec = batch_records.back().get();
    Adam* adam = adams.back().get();
    subjects.push_back({"tbptt_batch", T,
                        [&, p, rec, adam, T](std::size_t i) {
                          const Coefficients c = derive_coefficients(*p);
                          RtuState s = rec->start;
                          rec->inputs.clear();
                          rec->states.clear();
                          std::vector<Vec> grads;
                          for (int k = 0; k < T; ++k) {
                            const Vec& x = xs[(i + k) % xs.size()];
                            s = rtu_step(s, c, *p, x);
                            rec->push(x, s);
                            grads.push_back(ds[(i + k) % ds.size()]);
                          }
                          tbptt_train_step(*rec, *p, *adam, grads);
                          rec->start = rec->states.back();
                        },
                        T,
                        {}});
  }

  const int updates = cfg.updates_per_repetition;
  for (int rep = 0; rep < cfg.warmup + cfg.repetitions; ++rep) {
    for (Subject& s : subjects) {
      // Batch subjects consume T samples per call; keep the sample count
      // per repetition comparable.
      const int calls = std::max(1, updates / s.per_call_samples);
      const auto t0 = Clock::now();
      for (int c = 0; c < calls; ++c)
        s.update(static_cast<std::size_t>(rep * updates + c * s.per_call_samples));
      const double us =
          std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
      if (rep >= cfg.warmup)
        s.samples_us.push_back(us / (static_cast<double>(calls) * s.per_call_samples));
    }
  }

  const double granularity_us =
      1e6 * static_cast<double>(Clock::period::num) / Clock::period::den;
  std::vector<TimingRecord> out;
  for (const char* m : {"rtrl", "tbptt_incremental", "tbptt_batch"})
    for (const Subject& s : subjects) {
      if (s.method != m) continue;
      const double med = quantile(s.samples_us, 0.5);
      out.push_back({s.method, cfg.n, cfg.d, s.T, cfg.repetitions, med,
                     quantile(s.samples_us, 0.75) - quantile(s.samples_us, 0.25),
                     med < 10.0 * granularity_us});
    }
  return out;
}

void write_timing_csv(const std::string& path, const std::vector<TimingRecord>& records) {
  std::FILE* f = open_csv(path);
  std::fprintf(f, "method,n,d,T,median_us,iqr_us\n");
  for (const auto& r : records)
    std::fprintf(f, "%s,%d,%d,%d,%.4f,%.4f\n", r.method.c_str(), r.n, r.d, r.T,
                 r.median_us, r.iqr_us);
  close_csv(f, path);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require_shape(x.size() == y.size() && x.size() >= 2, "fit_line needs >= 2 points");
  const double k = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r_squared = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 0.0;
  return f;
}

}  // namespace rtu
