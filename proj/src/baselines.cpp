#include "rtu/baselines.hpp"

#include <string>

namespace rtu {

namespace {

Mat uniform_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double bound) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

struct LruCoeffs {
  double lam_re, lam_im;            // lambda
  double dlam_nu_re, dlam_nu_im;    // d lambda / d nu_log
  double dlam_th_re, dlam_th_im;    // d lambda / d theta_log
  double gamma, dgamma_nu;
};

LruCoeffs lru_coeffs(const LruParams& p, Eigen::Index k) {
  const double nu = std::exp(p.nu_log[k]);
  const double r = std::exp(-nu);
  const double theta = std::exp(p.theta_log[k]);
  LruCoeffs c;
  c.lam_re = r * std::cos(theta);
  c.lam_im = r * std::sin(theta);
  // d lambda / d nu_log = -exp(nu_log) lambda.
  c.dlam_nu_re = -nu * c.lam_re;
  c.dlam_nu_im = -nu * c.lam_im;
  // d lambda / d theta_log = i theta lambda.
  c.dlam_th_re = -theta * c.lam_im;
  c.dlam_th_im = theta * c.lam_re;
  c.gamma = std::sqrt(std::max(1.0 - r * r, kEpsGamma));
  c.dgamma_nu = r * r * nu / c.gamma;
  return c;
}

// (a + ib)(c + id)
inline void cmul(double a, double b, double c, double d, double& re,
                 double& im) {
  re = a * c - b * d;
  im = a * d + b * c;
}

void check_lru(const LruState& s, const LruParams& p, const Vec& x) {
  const auto n = p.nu_log.size();
  require_shape(p.theta_log.size() == n && p.w_in_re.rows() == n &&
                    p.w_in_im.rows() == n && p.w_out_re.cols() == n &&
                    p.w_out_im.cols() == n,
                "LRU parameter shapes disagree");
  require_shape(s.re.size() == n && s.im.size() == n, "LRU state width != n");
  require_shape(x.size() == p.w_in_re.cols(), "LRU input length != d");
}

}  // namespace

LruParams init_lru_params(std::size_t n, std::size_t d, std::size_t m,
                          const InitOptions& init, Rng& rng) {
  // Reuse the RTU ring initialization for nu_log / theta_log.
  const RtuParams base = init_rtu_params(n, d, Variant::kLinear,
                                         Activation::kIdentity, init, rng);
  LruParams p;
  p.nu_log = base.nu_log;
  p.theta_log = base.theta_log;
  p.w_in_re = base.w_c1;
  p.w_in_im = base.w_c2;
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  p.w_out_re = uniform_mat(rng, static_cast<Eigen::Index>(m),
                           static_cast<Eigen::Index>(n), bound);
  p.w_out_im = uniform_mat(rng, static_cast<Eigen::Index>(m),
                           static_cast<Eigen::Index>(n), bound);
  return p;
}

LruState LruState::zeros(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {Vec::Zero(m), Vec::Zero(m)};
}

LruTraces LruTraces::zeros(std::size_t n, std::size_t d) {
  const auto r = static_cast<Eigen::Index>(n);
  const auto c = static_cast<Eigen::Index>(d);
  return {Vec::Zero(r),    Vec::Zero(r), Vec::Zero(r), Vec::Zero(r),
          Mat::Zero(r, c), Mat::Zero(r, c)};
}

std::size_t LruTraces::scalar_count() const {
  return static_cast<std::size_t>(4 * e_nu_re.size() + E_re.size() +
                                  E_im.size());
}

void LruTraces::set_zero() {
  e_nu_re.setZero();
  e_nu_im.setZero();
  e_theta_re.setZero();
  e_theta_im.setZero();
  E_re.setZero();
  E_im.setZero();
}

LruGrad lru_zero_grad(const LruParams& p) {
  LruGrad g = p;
  g.nu_log.setZero();
  g.theta_log.setZero();
  g.w_in_re.setZero();
  g.w_in_im.setZero();
  g.w_out_re.setZero();
  g.w_out_im.setZero();
  return g;
}

Vec lru_output(const LruState& s, const LruParams& p) {
  // Re((C_re + i C_im)(h_re + i h_im)) = C_re h_re - C_im h_im.
  return p.w_out_re * s.re - p.w_out_im * s.im;
}

Vec lru_step(LruState& s, const LruParams& p, const Vec& x) {
  check_lru(s, p, x);
  const Vec u_re = p.w_in_re * x;
  const Vec u_im = p.w_in_im * x;
  for (Eigen::Index k = 0; k < p.nu_log.size(); ++k) {
    const LruCoeffs c = lru_coeffs(p, k);
    double re, im;
    cmul(c.lam_re, c.lam_im, s.re[k], s.im[k], re, im);
    s.re[k] = re + c.gamma * u_re[k];
    s.im[k] = im + c.gamma * u_im[k];
  }
  if (!s.re.allFinite() || !s.im.allFinite())
    fail(ErrorCode::kNumeric, "LRU produced a non-finite state");
  return lru_output(s, p);
}

Vec lru_step_and_trace(LruState& s, LruTraces& t, const LruParams& p,
                       const Vec& x) {
  check_lru(s, p, x);
  const auto n = p.nu_log.size();
  const auto d = p.w_in_re.cols();
  require_shape(t.E_re.rows() == n && t.E_re.cols() == d,
                "LRU trace shape does not match parameters");
  const Vec u_re = p.w_in_re * x;
  const Vec u_im = p.w_in_im * x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const LruCoeffs c = lru_coeffs(p, k);
    const double h_re = s.re[k], h_im = s.im[k];
    double a, b, e, f;
    // e_nu <- lambda e_nu + (d lambda/d nu) h + (d gamma/d nu) u
    cmul(c.lam_re, c.lam_im, t.e_nu_re[k], t.e_nu_im[k], a, b);
    cmul(c.dlam_nu_re, c.dlam_nu_im, h_re, h_im, e, f);
    t.e_nu_re[k] = a + e + c.dgamma_nu * u_re[k];
    t.e_nu_im[k] = b + f + c.dgamma_nu * u_im[k];
    // e_theta <- lambda e_theta + (d lambda/d theta) h
    cmul(c.lam_re, c.lam_im, t.e_theta_re[k], t.e_theta_im[k], a, b);
    cmul(c.dlam_th_re, c.dlam_th_im, h_re, h_im, e, f);
    t.e_theta_re[k] = a + e;
    t.e_theta_im[k] = b + f;
    // E <- lambda E + gamma x^T (real injection for Re(B)).
    for (Eigen::Index j = 0; j < d; ++j) {
      cmul(c.lam_re, c.lam_im, t.E_re(k, j), t.E_im(k, j), a, b);
      t.E_re(k, j) = a + c.gamma * x[j];
      t.E_im(k, j) = b;
    }
    cmul(c.lam_re, c.lam_im, h_re, h_im, a, b);
    s.re[k] = a + c.gamma * u_re[k];
    s.im[k] = b + c.gamma * u_im[k];
  }
  if (!s.re.allFinite() || !s.im.allFinite() || !t.E_re.allFinite() ||
      !t.e_nu_re.allFinite() || !t.e_theta_re.allFinite())
    fail(ErrorCode::kNumeric, "LRU produced a non-finite state or trace");
  return lru_output(s, p);
}

CreditSignal lru_accumulate_gradient(const Vec& d_y, const LruState& s,
                                     const LruTraces& t, const LruParams& p,
                                     LruGrad& g) {
  require_shape(d_y.size() == p.w_out_re.rows(), "d_y length != m");
  CreditSignal credit{p.w_out_re.transpose() * d_y,
                      -(p.w_out_im.transpose() * d_y)};
  g.w_out_re.noalias() += d_y * s.re.transpose();
  g.w_out_im.noalias() -= d_y * s.im.transpose();
  const Vec& dr = credit.d_c1;
  const Vec& di = credit.d_c2;
  // dL/dp = dL/dRe(h) Re(e) + dL/dIm(h) Im(e) for a real parameter p.
  g.nu_log.array() += dr.array() * t.e_nu_re.array() + di.array() * t.e_nu_im.array();
  g.theta_log.array() +=
      dr.array() * t.e_theta_re.array() + di.array() * t.e_theta_im.array();
  g.w_in_re.noalias() += dr.asDiagonal() * t.E_re;
  g.w_in_re.noalias() += di.asDiagonal() * t.E_im;
  // Trace w.r.t. Im(B) is i E: real part -Im(E), imaginary part Re(E).
  g.w_in_im.noalias() -= dr.asDiagonal() * t.E_im;
  g.w_in_im.noalias() += di.asDiagonal() * t.E_re;
  return credit;
}

// ---------------------------------------------------------------------------

BlockDiagParams init_blockdiag_params(std::size_t n, std::size_t d,
                                      Variant variant, Activation activation,
                                      const InitOptions& init, Rng& rng) {
  const RtuParams base = init_rtu_params(n, d, variant, activation, init, rng);
  BlockDiagParams p = embed_rtu(base);
  p.input_scale = Vec::Ones(static_cast<Eigen::Index>(n));
  return p;
}

BlockDiagParams embed_rtu(const RtuParams& params) {
  const Coefficients c = derive_coefficients(params);
  BlockDiagParams p;
  p.a = c.g;
  p.b = -c.phi;
  p.c = c.phi;
  p.d = c.g;
  p.w_c1 = params.w_c1;
  p.w_c2 = params.w_c2;
  p.input_scale = c.gamma;
  p.variant = params.variant;
  p.activation = params.activation;
  return p;
}

BlockDiagTraces BlockDiagTraces::zeros(std::size_t n, std::size_t d) {
  const auto r = static_cast<Eigen::Index>(n);
  const auto c = static_cast<Eigen::Index>(d);
  BlockDiagTraces t;
  for (Vec* v : {&t.e_a1, &t.e_a2, &t.e_b1, &t.e_b2, &t.e_c1, &t.e_c2, &t.e_d1,
                 &t.e_d2})
    *v = Vec::Zero(r);
  for (Mat* m : {&t.E_w11, &t.E_w12, &t.E_w21, &t.E_w22}) *m = Mat::Zero(r, c);
  return t;
}

std::size_t BlockDiagTraces::scalar_count() const {
  return static_cast<std::size_t>(8 * e_a1.size() + 4 * E_w11.size());
}

void BlockDiagTraces::set_zero() {
  for (Vec* v : {&e_a1, &e_a2, &e_b1, &e_b2, &e_c1, &e_c2, &e_d1, &e_d2})
    v->setZero();
  for (Mat* m : {&E_w11, &E_w12, &E_w21, &E_w22}) m->setZero();
}

BlockDiagGrad BlockDiagGrad::zeros(std::size_t n, std::size_t d) {
  const auto r = static_cast<Eigen::Index>(n);
  const auto c = static_cast<Eigen::Index>(d);
  return {Vec::Zero(r),    Vec::Zero(r),   Vec::Zero(r), Vec::Zero(r),
          Mat::Zero(r, c), Mat::Zero(r, c)};
}

RtuState blockdiag_step(const RtuState& state, const BlockDiagParams& p,
                        const Vec& x) {
  const auto n = p.a.size();
  require_shape(state.h_c1.size() == n && x.size() == p.w_c1.cols(),
                "block-diagonal step shape mismatch");
  RtuState out;
  out.pre_c1 = p.w_c1 * x;
  out.pre_c2 = p.w_c2 * x;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h1 = state.h_c1[k], h2 = state.h_c2[k];
    out.pre_c1[k] = p.a[k] * h1 + p.b[k] * h2 + p.input_scale[k] * out.pre_c1[k];
    out.pre_c2[k] = p.d[k] * h2 + p.c[k] * h1 + p.input_scale[k] * out.pre_c2[k];
  }
  if (p.variant == Variant::kLinear) {
    out.h_c1 = out.pre_c1;
    out.h_c2 = out.pre_c2;
  } else {
    out.h_c1 = activate(p.activation, out.pre_c1);
    out.h_c2 = activate(p.activation, out.pre_c2);
  }
  if (!out.pre_c1.allFinite() || !out.pre_c2.allFinite())
    fail(ErrorCode::kNumeric, "block-diagonal RNN produced a non-finite state");
  return out;
}

void blockdiag_step_and_trace(RtuState& state, BlockDiagTraces& t,
                              const BlockDiagParams& p, const Vec& x) {
  const RtuState next = blockdiag_step(state, p, x);
  const auto n = p.a.size();
  const auto d = p.w_c1.cols();
  require_shape(t.E_w11.rows() == n && t.E_w11.cols() == d,
                "block-diagonal trace shape mismatch");
  Vec f1 = Vec::Ones(n), f2 = Vec::Ones(n);
  if (p.variant == Variant::kNonlinear) {
    f1 = activate_grad(p.activation, next.pre_c1);
    f2 = activate_grad(p.activation, next.pre_c2);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = p.a[k], b = p.b[k], c = p.c[k], dd = p.d[k];
    const double h1 = state.h_c1[k], h2 = state.h_c2[k];
    // e' = M e + (dM/dp) h, M = [[a, b], [c, d]].
    auto advance = [&](double& e1, double& e2, double inj1, double inj2) {
      const double o1 = e1, o2 = e2;
      e1 = f1[k] * (a * o1 + b * o2 + inj1);
      e2 = f2[k] * (c * o1 + dd * o2 + inj2);
    };
    advance(t.e_a1[k], t.e_a2[k], h1, 0.0);
    advance(t.e_b1[k], t.e_b2[k], h2, 0.0);
    advance(t.e_c1[k], t.e_c2[k], 0.0, h1);
    advance(t.e_d1[k], t.e_d2[k], 0.0, h2);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sx = p.input_scale[k] * x[j];
      double e11 = t.E_w11(k, j), e21 = t.E_w21(k, j);
      advance(e11, e21, sx, 0.0);
      t.E_w11(k, j) = e11;
      t.E_w21(k, j) = e21;
      double e12 = t.E_w12(k, j), e22 = t.E_w22(k, j);
      advance(e12, e22, 0.0, sx);
      t.E_w12(k, j) = e12;
      t.E_w22(k, j) = e22;
    }
  }
  state = next;
}

void blockdiag_accumulate_gradient(const CreditSignal& credit,
                                   const BlockDiagTraces& t,
                                   BlockDiagGrad& g) {
  const Vec& d1 = credit.d_c1;
  const Vec& d2 = credit.d_c2;
  require_shape(d1.size() == t.e_a1.size(), "credit width != n");
  g.a.array() += d1.array() * t.e_a1.array() + d2.array() * t.e_a2.array();
  g.b.array() += d1.array() * t.e_b1.array() + d2.array() * t.e_b2.array();
  g.c.array() += d1.array() * t.e_c1.array() + d2.array() * t.e_c2.array();
  g.d.array() += d1.array() * t.e_d1.array() + d2.array() * t.e_d2.array();
  g.w_c1.noalias() += d1.asDiagonal() * t.E_w11;
  g.w_c1.noalias() += d2.asDiagonal() * t.E_w21;
  g.w_c2.noalias() += d1.asDiagonal() * t.E_w12;
  g.w_c2.noalias() += d2.asDiagonal() * t.E_w22;
}

// ---------------------------------------------------------------------------

DenseRnnParams init_dense_rnn(std::size_t n, std::size_t d, std::size_t m,
                              Rng& rng) {
  const auto N = static_cast<Eigen::Index>(n);
  DenseRnnParams p;
  p.w_h = uniform_mat(rng, N, N, 1.0 / std::sqrt(static_cast<double>(n)));
  p.w_x = uniform_mat(rng, N, static_cast<Eigen::Index>(d),
                      1.0 / std::sqrt(static_cast<double>(d)));
  p.w_y = uniform_mat(rng, static_cast<Eigen::Index>(m), N,
                      1.0 / std::sqrt(static_cast<double>(n)));
  p.b_y = Vec::Zero(static_cast<Eigen::Index>(m));
  return p;
}

Vec dense_linear_rnn_step(const Vec& h, const DenseRnnParams& p, const Vec& x) {
  require_shape(p.w_h.rows() == p.w_h.cols() && h.size() == p.w_h.rows() &&
                    x.size() == p.w_x.cols() && p.w_x.rows() == p.w_h.rows(),
                "dense RNN shape mismatch");
  Vec out = p.w_h * h;
  out.noalias() += p.w_x * x;
  return out;
}

double cubic_discriminant_3x3(const Mat& w) {
  if (w.rows() != 3 || w.cols() != 3)
    fail(ErrorCode::kUnsupported,
         "complex-eigenvalue counter supports 3x3 only, got " +
             std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  // det(lambda I - W) = lambda^3 + a lambda^2 + b lambda + c.
  const double a = -w.trace();
  const double b = w(0, 0) * w(1, 1) - w(0, 1) * w(1, 0) + w(0, 0) * w(2, 2) -
                   w(0, 2) * w(2, 0) + w(1, 1) * w(2, 2) - w(1, 2) * w(2, 1);
  const double c = -w.determinant();
  return 18.0 * a * b * c - 4.0 * a * a * a * c + a * a * b * b -
         4.0 * b * b * b - 27.0 * c * c;
}

int count_complex_eigenvalues_3x3(const Mat& w) {
  const double disc = cubic_discriminant_3x3(w);
  return disc < -kDiscriminantTolerance ? 2 : 0;
}

}  // namespace rtu
