#include "rtu/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"

namespace rtu {

namespace fs = std::filesystem;

std::string default_output_root() {
  const char* env = std::getenv(kOutRootEnv);
  return env && *env ? env : "runs";
}

std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options) {
  if (!options.output_dir.empty()) return options.output_dir;
  if (!config.output_dir.empty()) return config.output_dir;
  return (fs::path(default_output_root()) / config.name).string();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, const RunReport& r,
                    double wall) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["kind"] = to_string(cfg.kind);
  j["config_hash"] = hex64(config_hash(cfg));
  j["versions"] = {{"rtu", kVersion},
                   {"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  j["status"] = r.exit_code == kExitOk ? "ok" : "failed";
  j["exit_code"] = r.exit_code;
  if (!r.failure.empty()) j["failure"] = r.failure;
  j["wall_seconds"] = wall;
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& s : r.seeds) {
    nlohmann::ordered_json e;
    e["seed"] = s.seed;
    e["status"] = s.ok ? "ok" : "failed";
    if (!s.failure.empty()) e["failure"] = s.failure;
    e["wall_seconds"] = s.wall_seconds;
    e["files"] = s.files;
    if (std::isfinite(s.metric)) e["metric"] = s.metric;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto& [k, v] : s.summary)
      if (std::isfinite(v)) summary[k] = v;
      else summary[k] = nullptr;
    e["summary"] = summary;
    if (!s.update_wall_seconds.empty()) e["update_wall_seconds"] = s.update_wall_seconds;
    seeds.push_back(e);
  }
  j["seeds"] = seeds;
  j["config"] = emit_config(cfg);
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void run_seed(const ExperimentConfig& cfg, const RunOptions& opt, const fs::path& dir,
              SeedOutcome& out, std::map<std::uint64_t, EigenResult>& eigen_results) {
  const std::string sub = "seed_" + std::to_string(out.seed);
  fs::create_directories(dir / sub);
  auto file = [&](const char* name) {
    out.files.push_back(sub + "/" + name);
    return (dir / sub / name).string();
  };
  switch (cfg.kind) {
    case ExperimentKind::kPredict: {
      const PredictionMetrics m = run_online_prediction(cfg.predict, out.seed);
      write_prediction_csv(file("msre.csv"), m);
      out.metric = m.cumulative_msre;
      out.summary = {{"cumulative_msre", m.cumulative_msre},
                     {"windowed_msre", m.windowed_msre},
                     {"baseline_msre", m.baseline_msre},
                     {"windowed_over_baseline",
                      m.baseline_msre > 0 ? m.windowed_msre / m.baseline_msre : 0.0},
                     {"steps", static_cast<double>(m.steps)}};
      if (m.diverged || !m.failure.empty()) {
        out.ok = false;
        out.failure = m.failure.empty() ? "diverged" : m.failure;
      }
      break;
    }
    case ExperimentKind::kControl: {
      const PpoRunResult r = run_ppo(cfg.ppo, cfg.control_env, out.seed, !opt.quiet);
      write_ppo_csv(file("ppo.csv"), r);
      const double tr = r.rows.empty() ? 0.0 : r.rows.back().trailing_return;
      const double ts = r.rows.empty() ? 0.0 : r.rows.back().trailing_success;
      out.metric = tr;
      out.summary = {{"updates", static_cast<double>(r.rows.size())},
                     {"trailing_return", tr},
                     {"trailing_success", ts},
                     {"reached_target", r.reached_target ? 1.0 : 0.0},
                     {"steps_to_target", r.reached_target
                                             ? static_cast<double>(r.steps_to_target)
                                             : std::numeric_limits<double>::quiet_NaN()}};
      double prev = 0.0;
      for (const auto& row : r.rows) {
        out.update_wall_seconds.push_back(row.wall_seconds - prev);
        prev = row.wall_seconds;
      }
      if (!r.failure.empty()) {
        out.ok = false;
        out.failure = r.failure;
      }
      break;
    }
    case ExperimentKind::kGradcheck: {
      const GradcheckResult r = run_gradcheck(cfg.gradcheck, out.seed);
      write_gradcheck_csv(file("gradcheck.csv"), r);
      out.metric = std::max(r.max_rtrl_error, r.max_fd_error);
      out.summary = {{"max_rtrl_vs_bptt", r.max_rtrl_error},
                     {"max_fd_vs_bptt", r.max_fd_error}};
      if (!r.all_pass) {
        out.ok = false;
        for (const auto& row : r.rows)
          if (!row.pass) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "tolerance violated: %s instance %d (rtrl %.3e, fd %.3e)",
                          row.architecture.c_str(), row.instance, row.rtrl_vs_bptt,
                          row.fd_vs_bptt);
            out.failure = buf;
            break;
          }
      }
      break;
    }
    case ExperimentKind::kTiming: {
      std::vector<TimingRecord> recs = measure_update_time(cfg.timing, out.seed);
      for (int w : cfg.timing.widths) {
        if (w == cfg.timing.n) continue;
        TimingConfig t = cfg.timing;
        t.n = w;
        for (auto& r : measure_update_time(t, out.seed)) recs.push_back(r);
      }
      write_timing_csv(file("timing.csv"), recs);
      std::vector<double> ts, rtrl, inc;
      for (const auto& r : recs) {
        if (r.n != cfg.timing.n) continue;
        if (r.method == "rtrl") rtrl.push_back(r.median_us);
        if (r.method == "tbptt_incremental") {
          ts.push_back(r.T);
          inc.push_back(r.median_us);
        }
      }
      const auto [lo, hi] = std::minmax_element(rtrl.begin(), rtrl.end());
      out.metric = std::numeric_limits<double>::quiet_NaN();
      out.summary = {{"rtrl_relative_spread", (*hi - *lo) / *lo}};
      if (ts.size() >= 2) {
        const LineFit f = fit_line(ts, inc);
        out.summary.push_back({"tbptt_slope_us_per_step", f.slope});
        out.summary.push_back({"tbptt_r_squared", f.r_squared});
      }
      int flagged = 0;
      for (const auto& r : recs) flagged += r.flagged ? 1 : 0;
      out.summary.push_back({"flagged_records", flagged});
      break;
    }
    case ExperimentKind::kEigen: {
      EigenResult r = run_eigen_experiment(cfg.eigen, out.seed);
      write_eigen_csv(file("eigen.csv"), r);
      out.metric = r.final_s3_accuracy;
      out.summary = {{"first_perfect_step", static_cast<double>(r.first_perfect_step)},
                     {"final_complex_mean", r.final_complex_mean},
                     {"final_s3_accuracy", r.final_s3_accuracy}};
      eigen_results.emplace(out.seed, std::move(r));
      break;
    }
  }
}

// Mean accuracy and complex-count curves over the seeds that finished.
void write_eigen_mean(const fs::path& path, const std::map<std::uint64_t, EigenResult>& rs) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::fprintf(f, "step,mean_s3_accuracy,mean_complex_count,perfect_fraction,seeds\n");
  std::size_t rows = std::numeric_limits<std::size_t>::max();
  for (const auto& [s, r] : rs) rows = std::min(rows, r.rows.size());
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0, cc = 0, perfect = 0;
    const std::int64_t step = rs.begin()->second.rows[i].step;
    for (const auto& [s, r] : rs) {
      acc += r.rows[i].s3_accuracy;
      cc += r.rows[i].complex_count;
      perfect += (r.first_perfect_step >= 0 && r.first_perfect_step < step) ? 1 : 0;
    }
    const double k = static_cast<double>(rs.size());
    std::fprintf(f, "%lld,%.10g,%.10g,%.10g,%zu\n", static_cast<long long>(step), acc / k,
                 cc / k, perfect / k, rs.size());
  }
  std::fclose(f);
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const auto t0 = Clock::now();
  RunReport report;
  report.output_dir = resolve_output_dir(config, options);
  const fs::path dir(report.output_dir);
  try {
    fs::create_directories(dir);
  } catch (const std::exception& e) {
    report.exit_code = kExitIo;
    report.failure = std::string("cannot create output directory: ") + e.what();
    return report;
  }
  try {
    validate_config(config);
    write_text(dir / "config.ini", emit_config(config));
  } catch (const ConfigError& e) {
    report.exit_code = kExitConfig;
    report.failure = e.what();
  } catch (const std::exception& e) {
    report.exit_code = kExitIo;
    report.failure = e.what();
  }

  if (report.exit_code == kExitOk) {
    std::vector<std::uint64_t> seeds = config.seeds;
    if (options.seed) seeds = {*options.seed};
    std::map<std::uint64_t, EigenResult> eigen_results;
    for (auto seed : seeds) {
      SeedOutcome out;
      out.seed = seed;
      const auto ts = Clock::now();
      try {
        run_seed(config, options, dir, out, eigen_results);
      } catch (const std::exception& e) {
        out.ok = false;
        out.failure = e.what();
      }
      out.wall_seconds = seconds_since(ts);
      if (!options.quiet)
        std::fprintf(stderr, "[%s] seed %llu %s (%.1fs)%s%s\n", config.name.c_str(),
                     static_cast<unsigned long long>(seed), out.ok ? "ok" : "FAILED",
                     out.wall_seconds, out.ok ? "" : ": ", out.failure.c_str());
      if (!out.ok) report.exit_code = kExitSeedFailure;
      report.seeds.push_back(std::move(out));
    }
    if (!eigen_results.empty()) {
      try {
        write_eigen_mean(dir / "eigen_mean.csv", eigen_results);
      } catch (const std::exception& e) {
        report.exit_code = kExitIo;
        report.failure = e.what();
      }
    }
    if (report.exit_code == kExitSeedFailure && report.failure.empty()) {
      int failed = 0;
      for (const auto& s : report.seeds) failed += s.ok ? 0 : 1;
      report.failure = std::to_string(failed) + " of " + std::to_string(report.seeds.size()) +
                       " seeds failed";
    }
  }

  try {
    write_manifest(dir, config, report, seconds_since(t0));
  } catch (const std::exception& e) {
    report.exit_code = kExitIo;
    report.failure += (report.failure.empty() ? "" : "; ") + std::string(e.what());
  }
  return report;
}

RunReport run_sweep(const ExperimentConfig& config, const std::vector<double>& lrs,
                    const RunOptions& options) {
  RunReport total;
  total.output_dir = resolve_output_dir(config, options);
  if (lrs.empty()) {
    total.exit_code = kExitConfig;
    total.failure = "empty learning-rate grid";
    return total;
  }
  std::string csv = "lr,seed,metric,ok\n";
  for (double lr : lrs) {
    ExperimentConfig c = config;
    char tag[64];
    std::snprintf(tag, sizeof tag, "lr_%g", lr);
    RunOptions o = options;
    o.output_dir = (fs::path(total.output_dir) / tag).string();
    try {
      set_learning_rate(c, lr);
    } catch (const std::exception& e) {
      total.exit_code = kExitConfig;
      total.failure = e.what();
      return total;
    }
    RunReport r = run_experiment(c, o);
    for (const auto& s : r.seeds) {
      char line[160];
      std::snprintf(line, sizeof line, "%.17g,%llu,%.10g,%d\n", lr,
                    static_cast<unsigned long long>(s.seed), s.metric, s.ok ? 1 : 0);
      csv += line;
      total.seeds.push_back(s);
    }
    if (r.exit_code != kExitOk && total.exit_code == kExitOk) {
      total.exit_code = r.exit_code;
      total.failure = std::string(tag) + ": " + r.failure;
    }
  }
  try {
    write_text(fs::path(total.output_dir) / "sweep.csv", csv);
  } catch (const std::exception& e) {
    total.exit_code = kExitIo;
    total.failure = e.what();
  }
  return total;
}

}  // namespace rtu
