#ifndef RTU_RTU_HPP_
#define RTU_RTU_HPP_

// Recurrent Trace Units: diagonal recurrences whose 2x2 blocks are scaled
// rotations, kept in the real cosine representation, together with their
// exact forward-mode (RTRL) sensitivity traces.

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "rtu/common.hpp"
#include "rtu/rng.hpp"

namespace rtu {

enum class Activation { kIdentity, kRelu, kTanh };
enum class Variant { kLinear, kNonlinear };

// How the raw magnitude parameter maps onto r.
enum class RParam {
  kExpExp,   // r = exp(-exp(w)), always in (0, 1]
  kDirect,   // r = w, clipped after every update
  kExp,      // r = exp(-w), w clipped at 0
  kSigmoid,  // r = sigmoid(w)
};
// How the raw phase parameter maps onto theta.
enum class ThetaParam { kLog, kDirect };

double activate(Activation f, double x);
// f'(x) evaluated at the pre-activation.
double activate_grad(Activation f, double x);
Vec activate(Activation f, const Vec& x);
Vec activate_grad(Activation f, const Vec& x);

std::string_view to_string(Activation f);
std::string_view to_string(Variant v);
std::string_view to_string(RParam p);
std::string_view to_string(ThetaParam p);

// Floor applied inside sqrt(1 - r^2) and in the matching trace term.
inline constexpr double kEpsGamma = 1e-12;

struct RtuParams {
  Vec nu_log;     // raw magnitude parameter, one per unit
  Vec theta_log;  // raw phase parameter, one per unit
  Mat w_c1;       // n x d
  Mat w_c2;       // n x d
  Activation activation = Activation::kRelu;
  Variant variant = Variant::kLinear;
  RParam r_param = RParam::kExpExp;
  ThetaParam theta_param = ThetaParam::kLog;

  std::size_t width() const { return static_cast<std::size_t>(nu_log.size()); }
  std::size_t input_size() const {
    return static_cast<std::size_t>(w_c1.cols());
  }
  std::size_t parameter_count() const { return 2 * width() * (1 + input_size()); }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("nu_log", flat(nu_log));
    f("theta_log", flat(theta_log));
    f("w_c1", flat(w_c1));
    f("w_c2", flat(w_c2));
  }
};

struct InitOptions {
  double r_min = 0.0;
  double r_max = 1.0;
  double max_phase = 2.0 * M_PI;

  bool operator==(const InitOptions&) const = default;
};

// r = sqrt(u), u ~ U[r_min^2, r_max^2]; theta ~ U[0, max_phase];
// W ~ U[-1/sqrt(d), 1/sqrt(d)].
RtuParams init_rtu_params(std::size_t n, std::size_t d, Variant variant,
                          Activation activation, const InitOptions& init,
                          Rng& rng, RParam r_param = RParam::kExpExp,
                          ThetaParam theta_param = ThetaParam::kLog);

// Clip raw parameters so that r stays in (0, 1] for the clipped
// parameterizations. No-op for exp-exp and sigmoid.
void project_params(RtuParams& params);

struct Coefficients {
  Vec r;
  Vec theta;
  Vec g;      // r cos(theta)
  Vec phi;    // r sin(theta)
  Vec gamma;  // sqrt(max(1 - r^2, eps))
  // Partials w.r.t. the raw parameters, consumed by the trace updates.
  Vec dg_dnu, dphi_dnu;      // d/d nu_log
  Vec dg_dtheta, dphi_dtheta;  // d/d theta_log
  Vec dgamma_dnu;
};

Coefficients derive_coefficients(const RtuParams& params);

struct RtuState {
  Vec h_c1, h_c2;
  Vec pre_c1, pre_c2;

  static RtuState zeros(std::size_t n);
  std::size_t width() const { return static_cast<std::size_t>(h_c1.size()); }
  // h_t = [f(h_c1); f(h_c2)] for the linear variant, [h_c1; h_c2] otherwise.
  Vec combined(Variant variant, Activation activation) const;
  void set_zero();
};

struct TraceStore {
  Vec e_nu_c1, e_nu_c2;
  Vec e_theta_c1, e_theta_c2;
  // E_wab = d h^{ca} / d W^{cb}, one row per unit.
  Mat E_w11, E_w12, E_w21, E_w22;

  static TraceStore zeros(std::size_t n, std::size_t d);
  std::size_t scalar_count() const;
  bool all_finite() const;
  void set_zero();
};

struct CreditSignal {
  Vec d_c1;
  Vec d_c2;
};

struct ParamGrad {
  Vec nu_log, theta_log;
  Mat w_c1, w_c2;

  static ParamGrad zeros(std::size_t n, std::size_t d);
  ParamGrad& operator+=(const ParamGrad& o);
  ParamGrad& operator*=(double s);

  template <typename F>
  void for_each_tensor(F&& f) {
    f("nu_log", flat(nu_log));
    f("theta_log", flat(theta_log));
    f("w_c1", flat(w_c1));
    f("w_c2", flat(w_c2));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("nu_log", flat(nu_log));
    f("theta_log", flat(theta_log));
    f("w_c1", flat(w_c1));
    f("w_c2", flat(w_c2));
  }
};

RtuState rtu_step(const RtuState& state, const Coefficients& coeffs,
                  const RtuParams& params, const Vec& x);

TraceStore linear_trace_step(const TraceStore& traces, const RtuState& prev,
                             const Coefficients& coeffs,
                             const RtuParams& params, const Vec& x);

// `next` is the state produced by this step; its pre-activations gate the
// update through f'.
TraceStore nonlinear_trace_step(const TraceStore& traces, const RtuState& prev,
                                const Coefficients& coeffs,
                                const RtuParams& params, const Vec& x,
                                const RtuState& next);

// In-place forms used by the online layer. `step_index` only feeds the
// diagnostic on non-finite traces.
void update_traces(TraceStore& traces, const RtuState& prev,
                   const Coefficients& coeffs, const RtuParams& params,
                   const Vec& x, const RtuState& next,
                   std::int64_t step_index = -1);

ParamGrad assemble_param_gradient(const CreditSignal& credit,
                                  const TraceStore& traces);
// grad += assemble_param_gradient(credit, traces) without allocating.
void accumulate_param_gradient(const CreditSignal& credit,
                               const TraceStore& traces, ParamGrad& grad);

void reset_episode(RtuState& state, TraceStore& traces);

// Immediate (stop-gradient) sensitivity of h_t to the input x_t, applied to a
// credit: returns (dh_t/dx_t)^T credit. Feeds layers below the recurrence.
Vec input_credit(const CreditSignal& credit, const Coefficients& coeffs,
                 const RtuParams& params, const RtuState& state);

// Parameters, state and traces of one recurrent layer advanced online.
class RtuLayer {
 public:
  explicit RtuLayer(RtuParams params);

  const RtuParams& params() const { return params_; }
  RtuParams& mutable_params() { return params_; }
  // Must be called after any parameter change.
  void refresh_coefficients();
  const Coefficients& coefficients() const { return coeffs_; }

  const RtuState& state() const { return state_; }
  const TraceStore& traces() const { return traces_; }
  void set_state(const RtuState& state, const TraceStore& traces);

  // Advance state and traces by one input; returns the combined output h_t.
  Vec step(const Vec& x);
  void reset();

  Vec output() const {
    return state_.combined(params_.variant, params_.activation);
  }
  std::int64_t steps() const { return steps_; }

 private:
  RtuParams params_;
  Coefficients coeffs_;
  RtuState state_;
  RtuState scratch_;
  TraceStore traces_;
  std::int64_t steps_ = 0;
};

}  // namespace rtu

#endif  // RTU_RTU_HPP_
