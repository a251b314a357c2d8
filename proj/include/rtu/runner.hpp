#ifndef RTU_RUNNER_HPP_
#define RTU_RUNNER_HPP_

// Runs a parsed experiment: one output directory per run, one subdirectory
// per seed with its CSV streams, and a manifest.json describing the run.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtu/config.hpp"

namespace rtu {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutRootEnv = "RTU_OUT_ROOT";

enum ExitStatus : int {
  kExitOk = 0,
  kExitSeedFailure = 1,  // some seed failed or a tolerance was violated
  kExitConfig = 2,
  kExitIo = 3,
};

struct RunOptions {
  std::string output_dir;             // overrides the config when non-empty
  std::optional<std::uint64_t> seed;  // run only this seed
  bool quiet = true;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string failure;
  double wall_seconds = 0.0;
  std::vector<std::string> files;  // relative to the run directory
  // Headline metric of the kind (final cumulative MSRE, trailing return,
  // s3 accuracy, max gradient error); NaN for timing.
  double metric = 0.0;
  std::vector<std::pair<std::string, double>> summary;
  std::vector<double> update_wall_seconds;  // control only
};

struct RunReport {
  std::string output_dir;
  std::vector<SeedOutcome> seeds;
  int exit_code = kExitOk;
  std::string failure;  // run-level failure, if any
};

// <RTU_OUT_ROOT or "runs">
std::string default_output_root();
std::string resolve_output_dir(const ExperimentConfig& config, const RunOptions& options);

// Never throws for seed-level failures; the manifest is written in all cases
// where the output directory can be created.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Runs the config once per learning rate into <dir>/lr_<value>/ and writes
// <dir>/sweep.csv (lr,seed,metric,ok).
RunReport run_sweep(const ExperimentConfig& config, const std::vector<double>& lrs,
                    const RunOptions& options = {});

}  // namespace rtu

#endif  // RTU_RUNNER_HPP_
