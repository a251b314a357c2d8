#ifndef RTU_EXPERIMENTS_HPP_
#define RTU_EXPERIMENTS_HPP_

// Experiment drivers that are not agents: the eigenvalue experiment on the
// three-state MDP, the gradient-check report, and the update-time harness.

#include <cstdint>
#include <string>
#include <vector>

#include "rtu/optim.hpp"

namespace rtu {

// --- Eigenvalue emergence --------------------------------------------------

struct EigenConfig {
  int n = 3;
  int truncation = 2;
  double lr = 1e-2;
  std::int64_t steps = 50000;
  int accuracy_window = 100;  // trailing transitions out of s3
  int log_every = 100;

  bool operator==(const EigenConfig&) const = default;
};

struct EigenRow {
  std::int64_t step;
  double s3_accuracy;  // over the trailing accuracy_window s3 transitions
  double loss;         // trailing mean cross-entropy
  int complex_count;
};

struct EigenResult {
  std::vector<EigenRow> rows;
  std::int64_t first_perfect_step = -1;  // first step with a full, perfect window
  double final_complex_mean = 0.0;       // over the last 10% of updates
  double final_s3_accuracy = 0.0;
};

EigenResult run_eigen_experiment(const EigenConfig& config, std::uint64_t seed);
// step,s3_accuracy,loss,complex_count
void write_eigen_csv(const std::string& path, const EigenResult& result);

// --- Gradient check --------------------------------------------------------

struct GradcheckConfig {
  int n = 4;
  int d = 3;
  int length = 50;
  int instances = 3;
  double fd_step = 1e-6;
  double rtrl_tolerance = 1e-10;
  double fd_tolerance = 1e-5;

  bool operator==(const GradcheckConfig&) const = default;
};

struct GradcheckRow {
  std::string architecture;
  int instance;
  double rtrl_vs_bptt;
  double fd_vs_bptt;
  bool pass;
};

struct GradcheckResult {
  std::vector<GradcheckRow> rows;
  bool all_pass = true;
  double max_rtrl_error = 0.0;
  double max_fd_error = 0.0;
};

GradcheckResult run_gradcheck(const GradcheckConfig& config, std::uint64_t seed);
// architecture,instance,rtrl_vs_bptt,fd_vs_bptt,pass
void write_gradcheck_csv(const std::string& path, const GradcheckResult& result);

// --- Update timing ---------------------------------------------------------

struct TimingConfig {
  int n = 32;
  int d = 8;
  std::vector<int> truncations = {1, 2, 4, 8, 16, 32, 64};
  int repetitions = 30;
  int warmup = 3;
  int updates_per_repetition = 200;
  // Extra widths measured over the same T grid by the runner (cost vs n).
  std::vector<int> widths = {16, 64};

  bool operator==(const TimingConfig&) const = default;
};

struct TimingRecord {
  std::string method;  // rtrl | tbptt_incremental | tbptt_batch
  int n, d, T;
  int repetitions;
  double median_us;  // per update (per sample for tbptt_batch)
  double iqr_us;
  bool flagged;  // below 10x the clock granularity
};

std::vector<TimingRecord> measure_update_time(const TimingConfig& config,
                                              std::uint64_t seed);
// method,n,d,T,median_us,iqr_us
void write_timing_csv(const std::string& path,
                      const std::vector<TimingRecord>& records);

struct LineFit {
  double slope, intercept, r_squared;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rtu

#endif  // RTU_EXPERIMENTS_HPP_
