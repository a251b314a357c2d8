#include "rtu/oracles.hpp"

#include <string>

#include "rtu/mlp.hpp"

namespace rtu {

double QuadraticLoss::value(std::size_t t, const Vec& out) const {
  require_shape(t < targets.size(), "loss has no target for this step");
  return 0.5 * (readout * out - targets[t]).squaredNorm();
}

Vec QuadraticLoss::output_grad(std::size_t t, const Vec& out) const {
  require_shape(t < targets.size(), "loss has no target for this step");
  return readout.transpose() * (readout * out - targets[t]);
}

QuadraticLoss random_quadratic_loss(std::size_t out_size, std::size_t m,
                                    std::size_t T, Rng& rng) {
  QuadraticLoss loss;
  loss.readout.resize(static_cast<Eigen::Index>(m),
                      static_cast<Eigen::Index>(out_size));
  for (Eigen::Index i = 0; i < loss.readout.size(); ++i)
    loss.readout.data()[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    Vec y(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.uniform(-1.0, 1.0);
    loss.targets.push_back(y);
  }
  return loss;
}

namespace {

void check_length(std::size_t len, std::size_t max_len) {
  if (len > max_len)
    fail(ErrorCode::kInvalidArgument,
         "sequence length " + std::to_string(len) + " exceeds the unroll cap " +
             std::to_string(max_len));
}

// Reverse accumulation through an RTU window. `credit_at(i)` returns the
// gradient w.r.t. the combined output at stored step i, or an empty vector.
template <typename Inputs, typename States, typename CreditAt>
ParamGrad rtu_reverse(const RtuParams& p, const RtuState& start,
                      const Inputs& xs, const States& states,
                      CreditAt&& credit_at) {
  const Coefficients c = derive_coefficients(p);
  const auto n = p.nu_log.size();
  Vec grad_g = Vec::Zero(n), grad_phi = Vec::Zero(n), grad_gamma = Vec::Zero(n);
  ParamGrad out = ParamGrad::zeros(p.width(), p.input_size());
  Vec a1 = Vec::Zero(n), a2 = Vec::Zero(n);
  for (std::size_t i = xs.size(); i-- > 0;) {
    const RtuState& s = states[i];
    const Vec dy = credit_at(i);
    if (dy.size() > 0) {
      const CreditSignal cs = split_credit(dy, s, p.variant, p.activation);
      a1 += cs.d_c1;
      a2 += cs.d_c2;
    }
    Vec b1 = a1, b2 = a2;
    if (p.variant == Variant::kNonlinear) {
      b1.array() *= activate_grad(p.activation, s.pre_c1).array();
      b2.array() *= activate_grad(p.activation, s.pre_c2).array();
    }
    const RtuState& prev = i > 0 ? states[i - 1] : start;
    const Vec& x = xs[i];
    const Vec u1 = p.w_c1 * x;
    const Vec u2 = p.w_c2 * x;
    grad_g.array() += b1.array() * prev.h_c1.array() + b2.array() * prev.h_c2.array();
    grad_phi.array() +=
        b2.array() * prev.h_c1.array() - b1.array() * prev.h_c2.array();
    grad_gamma.array() += b1.array() * u1.array() + b2.array() * u2.array();
    out.w_c1.noalias() += c.gamma.cwiseProduct(b1) * x.transpose();
    out.w_c2.noalias() += c.gamma.cwiseProduct(b2) * x.transpose();
    a1 = c.g.cwiseProduct(b1) + c.phi.cwiseProduct(b2);
    a2 = c.g.cwiseProduct(b2) - c.phi.cwiseProduct(b1);
  }
  out.nu_log = grad_g.cwiseProduct(c.dg_dnu) + grad_phi.cwiseProduct(c.dphi_dnu) +
               grad_gamma.cwiseProduct(c.dgamma_dnu);
  out.theta_log =
      grad_g.cwiseProduct(c.dg_dtheta) + grad_phi.cwiseProduct(c.dphi_dtheta);
  return out;
}

}  // namespace

double rtu_sequence_loss(const RtuParams& params, const std::vector<Vec>& xs,
                         const QuadraticLoss& loss) {
  const Coefficients c = derive_coefficients(params);
  RtuState s = RtuState::zeros(params.width());
  double total = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s = rtu_step(s, c, params, xs[t]);
    total += loss.value(t, s.combined(params.variant, params.activation));
  }
  return total;
}

ParamGrad rtrl_gradient(const RtuParams& params, const std::vector<Vec>& xs,
                        const QuadraticLoss& loss) {
  RtuLayer layer(params);
  ParamGrad grad = ParamGrad::zeros(params.width(), params.input_size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Vec out = layer.step(xs[t]);
    const CreditSignal credit = split_credit(
        loss.output_grad(t, out), layer.state(), params.variant, params.activation);
    accumulate_param_gradient(credit, layer.traces(), grad);
  }
  return grad;
}

ParamGrad bptt_gradient(const RtuParams& params, const std::vector<Vec>& xs,
                        const QuadraticLoss& loss, std::size_t max_len) {
  check_length(xs.size(), max_len);
  const Coefficients c = derive_coefficients(params);
  const RtuState start = RtuState::zeros(params.width());
  std::vector<RtuState> states;
  states.reserve(xs.size());
  RtuState s = start;
  for (const Vec& x : xs) {
    s = rtu_step(s, c, params, x);
    states.push_back(s);
  }
  return rtu_reverse(params, start, xs, states, [&](std::size_t i) {
    return loss.output_grad(i, states[i].combined(params.variant, params.activation));
  });
}

// --- LRU -------------------------------------------------------------------

double lru_sequence_loss(const LruParams& params, const std::vector<Vec>& xs,
                         const QuadraticLoss& loss) {
  LruState s = LruState::zeros(params.width());
  double total = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t)
    total += loss.value(t, lru_step(s, params, xs[t]));
  return total;
}

LruGrad lru_rtrl_gradient(const LruParams& params, const std::vector<Vec>& xs,
                          const QuadraticLoss& loss) {
  LruState s = LruState::zeros(params.width());
  LruTraces tr = LruTraces::zeros(params.width(), params.input_size());
  LruGrad g = lru_zero_grad(params);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Vec y = lru_step_and_trace(s, tr, params, xs[t]);
    lru_accumulate_gradient(loss.output_grad(t, y), s, tr, params, g);
  }
  return g;
}

LruGrad lru_bptt_gradient(const LruParams& p, const std::vector<Vec>& xs,
                          const QuadraticLoss& loss, std::size_t max_len) {
  check_length(xs.size(), max_len);
  const auto n = p.nu_log.size();
  std::vector<LruState> states;
  LruState s = LruState::zeros(p.width());
  const LruState start = s;
  for (const Vec& x : xs) {
    lru_step(s, p, x);
    states.push_back(s);
  }
  // Magnitude/phase and their partials, derived directly from the
  // exponential parameterization.
  const Vec nu = p.nu_log.array().exp();
  const Vec r = (-nu.array()).exp();
  const Vec theta = p.theta_log.array().exp();
  const Vec lr = r.array() * theta.array().cos();
  const Vec li = r.array() * theta.array().sin();
  const Vec gamma = (1.0 - r.array().square()).max(kEpsGamma).sqrt();

  LruGrad g = lru_zero_grad(p);
  Vec g_lr = Vec::Zero(n), g_li = Vec::Zero(n), g_gamma = Vec::Zero(n);
  Vec ar = Vec::Zero(n), ai = Vec::Zero(n);
  for (std::size_t i = xs.size(); i-- > 0;) {
    const LruState& h = states[i];
    const Vec dy = loss.output_grad(i, lru_output(h, p));
    g.w_out_re.noalias() += dy * h.re.transpose();
    g.w_out_im.noalias() -= dy * h.im.transpose();
    ar.noalias() += p.w_out_re.transpose() * dy;
    ai.noalias() -= p.w_out_im.transpose() * dy;
    const LruState& hp = i > 0 ? states[i - 1] : start;
    const Vec ur = p.w_in_re * xs[i];
    const Vec ui = p.w_in_im * xs[i];
    // h_re = lr hp_re - li hp_im + gamma u_re; h_im = li hp_re + lr hp_im + gamma u_im
    g_lr.array() += ar.array() * hp.re.array() + ai.array() * hp.im.array();
    g_li.array() += ai.array() * hp.re.array() - ar.array() * hp.im.array();
    g_gamma.array() += ar.array() * ur.array() + ai.array() * ui.array();
    g.w_in_re.noalias() += gamma.cwiseProduct(ar) * xs[i].transpose();
    g.w_in_im.noalias() += gamma.cwiseProduct(ai) * xs[i].transpose();
    const Vec nr = lr.cwiseProduct(ar) + li.cwiseProduct(ai);
    const Vec ni = lr.cwiseProduct(ai) - li.cwiseProduct(ar);
    ar = nr;
    ai = ni;
  }
  // d lr/d nu_log = -nu lr, d li/d nu_log = -nu li, d gamma/d nu_log = r^2 nu / gamma;
  // d lr/d theta_log = -theta li, d li/d theta_log = theta lr.
  g.nu_log = -(g_lr.array() * nu.array() * lr.array()) -
             g_li.array() * nu.array() * li.array() +
             g_gamma.array() * r.array().square() * nu.array() / gamma.array();
  g.theta_log = -(g_lr.array() * theta.array() * li.array()) +
                g_li.array() * theta.array() * lr.array();
  return g;
}

// --- Block-diagonal --------------------------------------------------------

double blockdiag_sequence_loss(const BlockDiagParams& params,
                               const std::vector<Vec>& xs,
                               const QuadraticLoss& loss) {
  RtuState s = RtuState::zeros(params.width());
  double total = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s = blockdiag_step(s, params, xs[t]);
    total += loss.value(t, s.combined(params.variant, params.activation));
  }
  return total;
}

BlockDiagGrad blockdiag_rtrl_gradient(const BlockDiagParams& params,
                                      const std::vector<Vec>& xs,
                                      const QuadraticLoss& loss) {
  RtuState s = RtuState::zeros(params.width());
  BlockDiagTraces tr = BlockDiagTraces::zeros(params.width(), params.input_size());
  BlockDiagGrad g = BlockDiagGrad::zeros(params.width(), params.input_size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    blockdiag_step_and_trace(s, tr, params, xs[t]);
    const Vec out = s.combined(params.variant, params.activation);
    blockdiag_accumulate_gradient(
        split_credit(loss.output_grad(t, out), s, params.variant, params.activation),
        tr, g);
  }
  return g;
}

BlockDiagGrad blockdiag_bptt_gradient(const BlockDiagParams& p,
                                      const std::vector<Vec>& xs,
                                      const QuadraticLoss& loss,
                                      std::size_t max_len) {
  check_length(xs.size(), max_len);
  const auto n = p.a.size();
  std::vector<RtuState> states;
  const RtuState start = RtuState::zeros(p.width());
  RtuState s = start;
  for (const Vec& x : xs) {
    s = blockdiag_step(s, p, x);
    states.push_back(s);
  }
  BlockDiagGrad g = BlockDiagGrad::zeros(p.width(), p.input_size());
  Vec a1 = Vec::Zero(n), a2 = Vec::Zero(n);
  for (std::size_t i = xs.size(); i-- > 0;) {
    const RtuState& h = states[i];
    const CreditSignal cs =
        split_credit(loss.output_grad(i, h.combined(p.variant, p.activation)), h,
                     p.variant, p.activation);
    a1 += cs.d_c1;
    a2 += cs.d_c2;
    Vec b1 = a1, b2 = a2;
    if (p.variant == Variant::kNonlinear) {
      b1.array() *= activate_grad(p.activation, h.pre_c1).array();
      b2.array() *= activate_grad(p.activation, h.pre_c2).array();
    }
    const RtuState& hp = i > 0 ? states[i - 1] : start;
    g.a.array() += b1.array() * hp.h_c1.array();
    g.b.array() += b1.array() * hp.h_c2.array();
    g.c.array() += b2.array() * hp.h_c1.array();
    g.d.array() += b2.array() * hp.h_c2.array();
    g.w_c1.noalias() += p.input_scale.cwiseProduct(b1) * xs[i].transpose();
    g.w_c2.noalias() += p.input_scale.cwiseProduct(b2) * xs[i].transpose();
    a1 = p.a.cwiseProduct(b1) + p.c.cwiseProduct(b2);
    a2 = p.b.cwiseProduct(b1) + p.d.cwiseProduct(b2);
  }
  return g;
}

// --- Truncated BPTT --------------------------------------------------------

UnrollRecord::UnrollRecord(std::size_t truncation_, std::size_t n)
    : truncation(truncation_), start(RtuState::zeros(n)) {
  if (truncation == 0)
    fail(ErrorCode::kInvalidArgument, "truncation length must be >= 1");
}

void UnrollRecord::push(const Vec& x, const RtuState& after) {
  inputs.push_back(x);
  states.push_back(after);
  if (inputs.size() > truncation) {
    start = std::move(states.front());
    inputs.pop_front();
    states.pop_front();
  }
}

void UnrollRecord::reset(std::size_t n) {
  start = RtuState::zeros(n);
  inputs.clear();
  states.clear();
  loss_sum = 0.0;
}

ParamGrad tbptt_gradient(const RtuParams& params, const UnrollRecord& record,
                         const std::vector<Vec>& output_grads) {
  if (record.size() == 0)
    fail(ErrorCode::kInvalidArgument, "T-BPTT on an empty unroll record");
  require_shape(output_grads.size() == record.size(),
                "one output gradient slot per stored step required");
  return rtu_reverse(params, record.start, record.inputs, record.states,
                     [&](std::size_t i) { return output_grads[i]; });
}

ParamGrad tbptt_gradient_last(const RtuParams& params,
                              const UnrollRecord& record,
                              const Vec& last_output_grad) {
  if (record.size() == 0)
    fail(ErrorCode::kInvalidArgument, "T-BPTT on an empty unroll record");
  const std::size_t last = record.size() - 1;
  const Vec empty;
  return rtu_reverse(params, record.start, record.inputs, record.states,
                     [&](std::size_t i) -> const Vec& {
                       return i == last ? last_output_grad : empty;
                     });
}

ParamGrad tbptt_train_step(const UnrollRecord& record, RtuParams& params,
                           Adam& optimizer,
                           const std::vector<Vec>& output_grads) {
  ParamGrad grad = tbptt_gradient(params, record, output_grads);
  optimizer.step(params, grad);
  project_params(params);
  return grad;
}

DenseWindow::DenseWindow(std::size_t truncation_, std::size_t n)
    : truncation(truncation_), start(Vec::Zero(static_cast<Eigen::Index>(n))) {
  if (truncation == 0)
    fail(ErrorCode::kInvalidArgument, "truncation length must be >= 1");
}

void DenseWindow::push(const Vec& x, const Vec& after) {
  inputs.push_back(x);
  states.push_back(after);
  if (inputs.size() > truncation) {
    start = std::move(states.front());
    inputs.pop_front();
    states.pop_front();
  }
}

DenseRnnGrad dense_tbptt_gradient(const DenseRnnParams& p,
                                  const DenseWindow& window, int target) {
  if (window.inputs.empty())
    fail(ErrorCode::kInvalidArgument, "T-BPTT on an empty window");
  require_shape(target >= 0 && target < p.w_y.rows(), "target class out of range");
  DenseRnnGrad out;
  out.grad = p;
  out.grad.w_h.setZero();
  out.grad.w_x.setZero();
  out.grad.w_y.setZero();
  out.grad.b_y.setZero();

  const Vec& h_last = window.states.back();
  Vec logits = p.w_y * h_last + p.b_y;
  const double mx = logits.maxCoeff();
  Vec prob = (logits.array() - mx).exp();
  const double z = prob.sum();
  prob /= z;
  out.loss = -(logits[target] - mx - std::log(z));
  Vec dlogits = prob;
  dlogits[target] -= 1.0;
  out.grad.w_y = dlogits * h_last.transpose();
  out.grad.b_y = dlogits;
  Vec a = p.w_y.transpose() * dlogits;
  for (std::size_t i = window.inputs.size(); i-- > 0;) {
    const Vec& hp = i > 0 ? window.states[i - 1] : window.start;
    out.grad.w_h.noalias() += a * hp.transpose();
    out.grad.w_x.noalias() += a * window.inputs[i].transpose();
    a = p.w_h.transpose() * a;
  }
  return out;
}

}  // namespace rtu
