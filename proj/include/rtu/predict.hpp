#ifndef RTU_PREDICT_HPP_
#define RTU_PREDICT_HPP_

// Online prediction agent: one recurrent layer, a linear readout, and
// one-step semi-gradient TD on the US channel of trace conditioning.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rtu/envs.hpp"
#include "rtu/optim.hpp"
#include "rtu/rtu.hpp"

namespace rtu {

enum class Architecture { kRtuLinear, kRtuNonlinear, kLru, kBlockDiag };
enum class LearningMode { kRtrl, kTbptt };
enum class TargetMode { kTd, kMonteCarlo };

std::string to_string(Architecture a);
std::string to_string(LearningMode m);
std::string to_string(TargetMode m);
Architecture parse_architecture(const std::string& s);
LearningMode parse_learning_mode(const std::string& s);
TargetMode parse_target_mode(const std::string& s);

struct RecurrentConfig {
  Architecture architecture = Architecture::kRtuLinear;
  int n = 40;
  Activation activation = Activation::kRelu;
  RParam r_param = RParam::kExpExp;
  ThetaParam theta_param = ThetaParam::kLog;
  InitOptions init;
  LearningMode mode = LearningMode::kRtrl;
  int truncation = 25;

  bool operator==(const RecurrentConfig&) const = default;
};

struct PredictConfig {
  RecurrentConfig recurrent;
  TraceConditioningConfig env;
  AdamConfig adam{1e-3};
  TargetMode target = TargetMode::kTd;
  std::int64_t steps = 200000;
  int msre_window = 10000;
  int log_every = 100;
  double divergence_threshold = 1e6;

  bool operator==(const PredictConfig&) const = default;
};

// One learned recurrence behind a uniform interface. `gradient` returns
// d(d_features . features_t)/d params, flattened in parameters() order.
class RecurrentCore {
 public:
  virtual ~RecurrentCore() = default;
  virtual std::size_t feature_size() const = 0;
  virtual Vec step(const Vec& x) = 0;
  virtual std::vector<double> gradient(const Vec& d_features) = 0;
  virtual TensorList parameters() = 0;
  virtual void after_update() = 0;
  virtual void reset() = 0;
  virtual std::size_t memory_scalars() const = 0;
};

std::unique_ptr<RecurrentCore> make_recurrent_core(const RecurrentConfig& cfg,
                                                   std::size_t input_size,
                                                   Rng& rng);

struct MsreRow {
  std::int64_t step;
  double windowed_msre;
  double cumulative_msre;
  double prediction;
  double target;
};

struct PredictionMetrics {
  std::int64_t steps = 0;
  std::int64_t evaluated = 0;
  double cumulative_msre = 0.0;
  double windowed_msre = 0.0;   // trailing window at the end of the run
  double baseline_msre = 0.0;   // variance of G over the evaluated steps
  std::vector<MsreRow> rows;
  bool diverged = false;
  std::string failure;
};

PredictionMetrics run_online_prediction(const PredictConfig& config,
                                        std::uint64_t seed);

// step,windowed_msre,cumulative_msre,prediction,target
void write_prediction_csv(const std::string& path,
                          const PredictionMetrics& metrics);

}  // namespace rtu

#endif  // RTU_PREDICT_HPP_
