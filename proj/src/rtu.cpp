#include "rtu/rtu.hpp"

#include <algorithm>
#include <string>

namespace rtu {

double activate(Activation f, double x) {
  switch (f) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
  }
  return x;
}

double activate_grad(Activation f, double x) {
  switch (f) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

Vec activate(Activation f, const Vec& x) {
  return x.unaryExpr([f](double v) { return activate(f, v); });
}

Vec activate_grad(Activation f, const Vec& x) {
  return x.unaryExpr([f](double v) { return activate_grad(f, v); });
}

std::string_view to_string(Activation f) {
  switch (f) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  return v == Variant::kLinear ? "linear" : "nonlinear";
}

std::string_view to_string(RParam p) {
  switch (p) {
    case RParam::kExpExp: return "exp_exp";
    case RParam::kDirect: return "direct";
    case RParam::kExp: return "exp";
    case RParam::kSigmoid: return "sigmoid";
  }
  return "?";
}

std::string_view to_string(ThetaParam p) {
  return p == ThetaParam::kLog ? "log" : "direct";
}

namespace {

constexpr double kMinR = 1e-6;

double raw_from_r(RParam p, double r) {
  switch (p) {
    case RParam::kExpExp: return std::log(-std::log(r));
    case RParam::kDirect: return r;
    case RParam::kExp: return -std::log(r);
    case RParam::kSigmoid: return std::log(r / (1.0 - r));
  }
  return r;
}

}  // namespace

RtuParams init_rtu_params(std::size_t n, std::size_t d, Variant variant,
                          Activation activation, const InitOptions& init,
                          Rng& rng, RParam r_param, ThetaParam theta_param) {
  if (n == 0 || d == 0) fail(ErrorCode::kShape, "RTU needs n >= 1 and d >= 1");
  if (!(init.r_min >= 0.0 && init.r_min <= init.r_max && init.r_max <= 1.0))
    fail(ErrorCode::kInvalidArgument, "init bounds need 0 <= r_min <= r_max <= 1");
  RtuParams p;
  p.variant = variant;
  p.activation = activation;
  p.r_param = r_param;
  p.theta_param = theta_param;
  p.nu_log.resize(static_cast<Eigen::Index>(n));
  p.theta_log.resize(static_cast<Eigen::Index>(n));
  // Keep r strictly inside (0, 1) so every raw map is finite.
  const double lo = std::max(init.r_min, kMinR);
  const double hi = std::min(init.r_max, 1.0 - 1e-7);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform(lo * lo, hi * hi);
    const double r = std::clamp(std::sqrt(u), lo, hi);
    p.nu_log[k] = raw_from_r(r_param, r);
    double theta = rng.uniform(0.0, init.max_phase);
    if (theta_param == ThetaParam::kLog) {
      theta = std::max(theta, 1e-8);
      p.theta_log[k] = std::log(theta);
    } else {
      p.theta_log[k] = theta;
    }
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_c1.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  p.w_c2.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < p.w_c1.cols(); ++j)
    for (Eigen::Index i = 0; i < p.w_c1.rows(); ++i)
      p.w_c1(i, j) = rng.uniform(-bound, bound);
  for (Eigen::Index j = 0; j < p.w_c2.cols(); ++j)
    for (Eigen::Index i = 0; i < p.w_c2.rows(); ++i)
      p.w_c2(i, j) = rng.uniform(-bound, bound);
  return p;
}

void project_params(RtuParams& params) {
  switch (params.r_param) {
    case RParam::kDirect:
      params.nu_log = params.nu_log.cwiseMax(kMinR).cwiseMin(1.0);
      break;
    case RParam::kExp:
      params.nu_log = params.nu_log.cwiseMax(0.0);
      break;
    default:
      break;
  }
}

Coefficients derive_coefficients(const RtuParams& params) {
  const auto n = params.nu_log.size();
  require_shape(params.theta_log.size() == n, "theta_log length != n");
  if (!params.nu_log.allFinite() || !params.theta_log.allFinite())
    fail(ErrorCode::kInvalidArgument, "non-finite recurrent parameter");
  Coefficients c;
  c.r.resize(n);
  c.theta.resize(n);
  c.g.resize(n);
  c.phi.resize(n);
  c.gamma.resize(n);
  c.dg_dnu.resize(n);
  c.dphi_dnu.resize(n);
  c.dg_dtheta.resize(n);
  c.dphi_dtheta.resize(n);
  c.dgamma_dnu.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double w = params.nu_log[k];
    double r = 0.0, dr = 0.0;
    switch (params.r_param) {
      case RParam::kExpExp: {
        const double nu = std::exp(w);
        r = std::exp(-nu);
        dr = -r * nu;
        break;
      }
      case RParam::kDirect:
        r = w;
        dr = 1.0;
        break;
      case RParam::kExp:
        r = std::exp(-w);
        dr = -r;
        break;
      case RParam::kSigmoid:
        r = 1.0 / (1.0 + std::exp(-w));
        dr = r * (1.0 - r);
        break;
    }
    double theta = 0.0, dtheta = 0.0;
    if (params.theta_param == ThetaParam::kLog) {
      theta = std::exp(params.theta_log[k]);
      dtheta = theta;
    } else {
      theta = params.theta_log[k];
      dtheta = 1.0;
    }
    const double root = std::sqrt(std::max(1.0 - r * r, kEpsGamma));
    c.r[k] = r;
    c.theta[k] = theta;
    const double cs = std::cos(theta), sn = std::sin(theta);
    c.g[k] = r * cs;
    c.phi[k] = r * sn;
    c.gamma[k] = root;
    c.dg_dnu[k] = cs * dr;
    c.dphi_dnu[k] = sn * dr;
    c.dg_dtheta[k] = -c.phi[k] * dtheta;
    c.dphi_dtheta[k] = c.g[k] * dtheta;
    c.dgamma_dnu[k] = -r * dr / root;
  }
  return c;
}

RtuState RtuState::zeros(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {Vec::Zero(m), Vec::Zero(m), Vec::Zero(m), Vec::Zero(m)};
}

Vec RtuState::combined(Variant variant, Activation activation) const {
  Vec out(2 * h_c1.size());
  if (variant == Variant::kLinear) {
    out << activate(activation, h_c1), activate(activation, h_c2);
  } else {
    out << h_c1, h_c2;
  }
  return out;
}

void RtuState::set_zero() {
  h_c1.setZero();
  h_c2.setZero();
  pre_c1.setZero();
  pre_c2.setZero();
}

TraceStore TraceStore::zeros(std::size_t n, std::size_t d) {
  const auto r = static_cast<Eigen::Index>(n);
  const auto c = static_cast<Eigen::Index>(d);
  return {Vec::Zero(r),    Vec::Zero(r),    Vec::Zero(r),    Vec::Zero(r),
          Mat::Zero(r, c), Mat::Zero(r, c), Mat::Zero(r, c), Mat::Zero(r, c)};
}

std::size_t TraceStore::scalar_count() const {
  return static_cast<std::size_t>(e_nu_c1.size() + e_nu_c2.size() +
                                  e_theta_c1.size() + e_theta_c2.size() +
                                  E_w11.size() + E_w12.size() + E_w21.size() +
                                  E_w22.size());
}

bool TraceStore::all_finite() const {
  return e_nu_c1.allFinite() && e_nu_c2.allFinite() &&
         e_theta_c1.allFinite() && e_theta_c2.allFinite() &&
         E_w11.allFinite() && E_w12.allFinite() && E_w21.allFinite() &&
         E_w22.allFinite();
}

void TraceStore::set_zero() {
  e_nu_c1.setZero();
  e_nu_c2.setZero();
  e_theta_c1.setZero();
  e_theta_c2.setZero();
  E_w11.setZero();
  E_w12.setZero();
  E_w21.setZero();
  E_w22.setZero();
}

ParamGrad ParamGrad::zeros(std::size_t n, std::size_t d) {
  const auto r = static_cast<Eigen::Index>(n);
  const auto c = static_cast<Eigen::Index>(d);
  return {Vec::Zero(r), Vec::Zero(r), Mat::Zero(r, c), Mat::Zero(r, c)};
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& o) {
  nu_log += o.nu_log;
  theta_log += o.theta_log;
  w_c1 += o.w_c1;
  w_c2 += o.w_c2;
  return *this;
}

ParamGrad& ParamGrad::operator*=(double s) {
  nu_log *= s;
  theta_log *= s;
  w_c1 *= s;
  w_c2 *= s;
  return *this;
}

namespace {

void check_step_shapes(const RtuState& state, const Coefficients& coeffs,
                       const RtuParams& params, const Vec& x) {
  const auto n = params.nu_log.size();
  require_shape(state.h_c1.size() == n && state.h_c2.size() == n,
                "state width != n");
  require_shape(coeffs.g.size() == n, "coefficients width != n");
  require_shape(params.w_c1.rows() == n && params.w_c2.rows() == n &&
                    params.w_c1.cols() == params.w_c2.cols(),
                "input matrices must both be n x d");
  require_shape(x.size() == params.w_c1.cols(),
                "input length " + std::to_string(x.size()) + " != d = " +
                    std::to_string(params.w_c1.cols()));
}

void step_into(const RtuState& state, const Coefficients& c,
               const RtuParams& p, const Vec& x, RtuState& out) {
  out.pre_c1.noalias() = p.w_c1 * x;
  out.pre_c2.noalias() = p.w_c2 * x;
  const auto n = p.nu_log.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = state.h_c1[k], b = state.h_c2[k];
    out.pre_c1[k] = c.g[k] * a - c.phi[k] * b + c.gamma[k] * out.pre_c1[k];
    out.pre_c2[k] = c.g[k] * b + c.phi[k] * a + c.gamma[k] * out.pre_c2[k];
  }
  if (p.variant == Variant::kLinear) {
    out.h_c1 = out.pre_c1;
    out.h_c2 = out.pre_c2;
  } else {
    out.h_c1 = activate(p.activation, out.pre_c1);
    out.h_c2 = activate(p.activation, out.pre_c2);
  }
}

// Shared body of the linear and nonlinear trace recursions. `gate1`/`gate2`
// are f'(pre) for the nonlinear variant; null means the linear rule.
void trace_update(TraceStore& t, const RtuState& prev, const Coefficients& c,
                  const RtuParams& p, const Vec& x, const Vec* gate1,
                  const Vec* gate2) {
  const auto n = p.nu_log.size();
  const auto d = p.w_c1.cols();
  const Vec u1 = p.w_c1 * x;
  const Vec u2 = p.w_c2 * x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double g = c.g[k], phi = c.phi[k];
    const double h1 = prev.h_c1[k], h2 = prev.h_c2[k];
    const double f1 = gate1 ? (*gate1)[k] : 1.0;
    const double f2 = gate2 ? (*gate2)[k] : 1.0;
    const double dg_nu = c.dg_dnu[k], dphi_nu = c.dphi_dnu[k];
    const double dg_th = c.dg_dtheta[k], dphi_th = c.dphi_dtheta[k];

    const double en1 = t.e_nu_c1[k], en2 = t.e_nu_c2[k];
    t.e_nu_c1[k] = f1 * (dg_nu * h1 + g * en1 - dphi_nu * h2 - phi * en2 +
                         c.dgamma_dnu[k] * u1[k]);
    t.e_nu_c2[k] = f2 * (dg_nu * h2 + g * en2 + dphi_nu * h1 + phi * en1 +
                         c.dgamma_dnu[k] * u2[k]);

    const double et1 = t.e_theta_c1[k], et2 = t.e_theta_c2[k];
    t.e_theta_c1[k] = f1 * (dg_th * h1 + g * et1 - dphi_th * h2 - phi * et2);
    t.e_theta_c2[k] = f2 * (dg_th * h2 + g * et2 + dphi_th * h1 + phi * et1);
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double xj = x[j];
    for (Eigen::Index k = 0; k < n; ++k) {
      const double g = c.g[k], phi = c.phi[k], gx = c.gamma[k] * xj;
      const double f1 = gate1 ? (*gate1)[k] : 1.0;
      const double f2 = gate2 ? (*gate2)[k] : 1.0;
      const double a11 = t.E_w11(k, j), a21 = t.E_w21(k, j);
      t.E_w11(k, j) = f1 * (g * a11 - phi * a21 + gx);
      t.E_w21(k, j) = f2 * (g * a21 + phi * a11);
      const double a12 = t.E_w12(k, j), a22 = t.E_w22(k, j);
      t.E_w12(k, j) = f1 * (g * a12 - phi * a22);
      t.E_w22(k, j) = f2 * (g * a22 + phi * a12 + gx);
    }
  }
}

void check_traces(const TraceStore& t, const RtuParams& p) {
  const auto n = p.nu_log.size();
  require_shape(t.e_nu_c1.size() == n && t.E_w11.rows() == n &&
                    t.E_w11.cols() == p.w_c1.cols(),
                "trace store shape does not match parameters");
}

}  // namespace

RtuState rtu_step(const RtuState& state, const Coefficients& coeffs,
                  const RtuParams& params, const Vec& x) {
  check_step_shapes(state, coeffs, params, x);
  RtuState out;
  step_into(state, coeffs, params, x, out);
  if (!out.pre_c1.allFinite() || !out.pre_c2.allFinite())
    fail(ErrorCode::kNumeric, "rtu_step produced a non-finite state");
  return out;
}

TraceStore linear_trace_step(const TraceStore& traces, const RtuState& prev,
                             const Coefficients& coeffs,
                             const RtuParams& params, const Vec& x) {
  check_step_shapes(prev, coeffs, params, x);
  check_traces(traces, params);
  TraceStore out = traces;
  trace_update(out, prev, coeffs, params, x, nullptr, nullptr);
  if (!out.all_finite()) fail(ErrorCode::kNumeric, "non-finite trace");
  return out;
}

TraceStore nonlinear_trace_step(const TraceStore& traces, const RtuState& prev,
                                const Coefficients& coeffs,
                                const RtuParams& params, const Vec& x,
                                const RtuState& next) {
  check_step_shapes(prev, coeffs, params, x);
  check_traces(traces, params);
  require_shape(next.pre_c1.size() == params.nu_log.size(),
                "pre-activation width != n");
  TraceStore out = traces;
  const Vec f1 = activate_grad(params.activation, next.pre_c1);
  const Vec f2 = activate_grad(params.activation, next.pre_c2);
  trace_update(out, prev, coeffs, params, x, &f1, &f2);
  if (!out.all_finite()) fail(ErrorCode::kNumeric, "non-finite trace");
  return out;
}

void update_traces(TraceStore& traces, const RtuState& prev,
                   const Coefficients& coeffs, const RtuParams& params,
                   const Vec& x, const RtuState& next,
                   std::int64_t step_index) {
  if (params.variant == Variant::kLinear) {
    trace_update(traces, prev, coeffs, params, x, nullptr, nullptr);
  } else {
    const Vec f1 = activate_grad(params.activation, next.pre_c1);
    const Vec f2 = activate_grad(params.activation, next.pre_c2);
    trace_update(traces, prev, coeffs, params, x, &f1, &f2);
  }
  if (!traces.all_finite())
    fail(ErrorCode::kNumeric,
         "non-finite trace at step " + std::to_string(step_index));
}

void accumulate_param_gradient(const CreditSignal& credit,
                               const TraceStore& t, ParamGrad& grad) {
  const auto n = t.e_nu_c1.size();
  require_shape(credit.d_c1.size() == n && credit.d_c2.size() == n,
                "credit width != n");
  require_shape(grad.nu_log.size() == n && grad.w_c1.rows() == n &&
                    grad.w_c1.cols() == t.E_w11.cols(),
                "gradient shape does not match traces");
  const Vec& d1 = credit.d_c1;
  const Vec& d2 = credit.d_c2;
  grad.nu_log.array() +=
      d1.array() * t.e_nu_c1.array() + d2.array() * t.e_nu_c2.array();
  grad.theta_log.array() +=
      d1.array() * t.e_theta_c1.array() + d2.array() * t.e_theta_c2.array();
  grad.w_c1.noalias() += d1.asDiagonal() * t.E_w11;
  grad.w_c1.noalias() += d2.asDiagonal() * t.E_w21;
  grad.w_c2.noalias() += d1.asDiagonal() * t.E_w12;
  grad.w_c2.noalias() += d2.asDiagonal() * t.E_w22;
}

ParamGrad assemble_param_gradient(const CreditSignal& credit,
                                  const TraceStore& traces) {
  ParamGrad grad = ParamGrad::zeros(static_cast<std::size_t>(traces.e_nu_c1.size()),
                                    static_cast<std::size_t>(traces.E_w11.cols()));
  accumulate_param_gradient(credit, traces, grad);
  return grad;
}

void reset_episode(RtuState& state, TraceStore& traces) {
  state.set_zero();
  traces.set_zero();
}

Vec input_credit(const CreditSignal& credit, const Coefficients& coeffs,
                 const RtuParams& params, const RtuState& state) {
  Vec b1 = coeffs.gamma.cwiseProduct(credit.d_c1);
  Vec b2 = coeffs.gamma.cwiseProduct(credit.d_c2);
  if (params.variant == Variant::kNonlinear) {
    b1.array() *= activate_grad(params.activation, state.pre_c1).array();
    b2.array() *= activate_grad(params.activation, state.pre_c2).array();
  }
  Vec out = params.w_c1.transpose() * b1;
  out.noalias() += params.w_c2.transpose() * b2;
  return out;
}

RtuLayer::RtuLayer(RtuParams params) : params_(std::move(params)) {
  refresh_coefficients();
  state_ = RtuState::zeros(params_.width());
  scratch_ = state_;
  traces_ = TraceStore::zeros(params_.width(), params_.input_size());
}

void RtuLayer::refresh_coefficients() { coeffs_ = derive_coefficients(params_); }

void RtuLayer::set_state(const RtuState& state, const TraceStore& traces) {
  require_shape(state.width() == params_.width(), "state width != n");
  state_ = state;
  traces_ = traces;
}

Vec RtuLayer::step(const Vec& x) {
  check_step_shapes(state_, coeffs_, params_, x);
  step_into(state_, coeffs_, params_, x, scratch_);
  if (!scratch_.pre_c1.allFinite() || !scratch_.pre_c2.allFinite())
    fail(ErrorCode::kNumeric,
         "non-finite state at step " + std::to_string(steps_));
  update_traces(traces_, state_, coeffs_, params_, x, scratch_, steps_);
  std::swap(state_, scratch_);
  ++steps_;
  return output();
}

void RtuLayer::reset() { reset_episode(state_, traces_); }

}  // namespace rtu
