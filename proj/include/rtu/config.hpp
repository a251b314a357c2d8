#ifndef RTU_CONFIG_HPP_
#define RTU_CONFIG_HPP_

// Experiment description in a flat INI-like text format:
//
//   [experiment]
//   kind = predict
//   seeds = 1, 2, 3
//
//   [architecture]
//   n = 40
//
// Blank lines and lines starting with '#' or ';' are ignored. Only the
// sections used by the chosen kind may appear; everything not given keeps
// its default.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rtu/common.hpp"
#include "rtu/experiments.hpp"
#include "rtu/ppo.hpp"
#include "rtu/predict.hpp"

namespace rtu {

enum class ExperimentKind { kPredict, kControl, kGradcheck, kTiming, kEigen };
std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kPredict;
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds = {1};
  // Empty: <output root>/<name>, the root taken from RTU_OUT_ROOT or "runs".
  std::string output_dir;

  PredictConfig predict;
  ControlEnvConfig control_env;
  PpoConfig ppo;
  GradcheckConfig gradcheck;
  TimingConfig timing;
  EigenConfig eigen;

  bool operator==(const ExperimentConfig&) const = default;
};

struct ConfigIssue {
  int line;  // 1-based; 0 when the problem is not tied to one line
  std::string message;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

// Throws ConfigError listing every problem found.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
// Canonical text: every key of the sections the kind uses, reals at %.17g.
std::string emit_config(const ExperimentConfig& config);
// FNV-1a 64 of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

ExperimentConfig default_config(ExperimentKind kind);
// Sets "section.key" from its text form; throws ConfigError.
void set_config_value(ExperimentConfig& config, const std::string& dotted_key,
                      const std::string& value);
// Step budget of the kind (predict, control, eigen); unsupported otherwise.
void set_total_steps(ExperimentConfig& config, std::int64_t steps);
// Learning rate of the kind (predict, control, eigen).
void set_learning_rate(ExperimentConfig& config, double lr);
// Checks cross-field invariants; throws ConfigError.
void validate_config(const ExperimentConfig& config);

}  // namespace rtu

#endif  // RTU_CONFIG_HPP_
