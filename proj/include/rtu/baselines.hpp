#ifndef RTU_BASELINES_HPP_
#define RTU_BASELINES_HPP_

// Comparison recurrences: the online LRU (complex diagonal, exponential
// representation, with a learned complex output matrix), a block-diagonal
// RNN with four free parameters per 2x2 block, and a dense linear RNN.

#include <cstddef>

#include "rtu/common.hpp"
#include "rtu/rng.hpp"
#include "rtu/rtu.hpp"

namespace rtu {

// ---------------------------------------------------------------------------
// Online LRU: h_t = lambda (.) h_{t-1} + gamma (.) (B x_t),
// y_t = Re(C h_t), lambda_k = r_k exp(i theta_k), r_k = exp(-exp(nu_log_k)).

struct LruParams {
  Vec nu_log, theta_log;
  Mat w_in_re, w_in_im;    // n x d
  Mat w_out_re, w_out_im;  // m x n

  std::size_t width() const { return static_cast<std::size_t>(nu_log.size()); }
  std::size_t input_size() const {
    return static_cast<std::size_t>(w_in_re.cols());
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(w_out_re.rows());
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("nu_log", flat(nu_log));
    f("theta_log", flat(theta_log));
    f("w_in_re", flat(w_in_re));
    f("w_in_im", flat(w_in_im));
    f("w_out_re", flat(w_out_re));
    f("w_out_im", flat(w_out_im));
  }
};

LruParams init_lru_params(std::size_t n, std::size_t d, std::size_t m,
                          const InitOptions& init, Rng& rng);

struct LruState {
  Vec re, im;
  static LruState zeros(std::size_t n);
};

// Traces of the complex state w.r.t. the recurrent parameters, as (re, im)
// pairs. The input trace is w.r.t. Re(B); the trace w.r.t. Im(B) is exactly
// i times it (the recursion is linear and starts at zero), so it is not
// stored.
struct LruTraces {
  Vec e_nu_re, e_nu_im;
  Vec e_theta_re, e_theta_im;
  Mat E_re, E_im;  // n x d

  static LruTraces zeros(std::size_t n, std::size_t d);
  std::size_t scalar_count() const;
  void set_zero();
};

using LruGrad = LruParams;
LruGrad lru_zero_grad(const LruParams& params);

// Advances state and traces in place and returns y_t = Re(C h_t).
Vec lru_step_and_trace(LruState& state, LruTraces& traces,
                       const LruParams& params, const Vec& x);
// Forward only (used by the BPTT oracle and the reference checks).
Vec lru_step(LruState& state, const LruParams& params, const Vec& x);
Vec lru_output(const LruState& state, const LruParams& params);

// grad += d(d_y . y_t)/d params using the current traces and state.
// Returns the credit on (re, im) for inspection.
CreditSignal lru_accumulate_gradient(const Vec& d_y, const LruState& state,
                                     const LruTraces& traces,
                                     const LruParams& params, LruGrad& grad);

// ---------------------------------------------------------------------------
// Block-diagonal RNN: per block
//   pre_c1 = a h_c1 + b h_c2 + s (.) (W1 x),  pre_c2 = c h_c1 + d h_c2 + s (.) (W2 x)
// with free a, b, c, d and a fixed (not learned) input scale s.

struct BlockDiagParams {
  Vec a, b, c, d;
  Mat w_c1, w_c2;  // n x d
  Vec input_scale;
  Variant variant = Variant::kLinear;
  Activation activation = Activation::kRelu;

  std::size_t width() const { return static_cast<std::size_t>(a.size()); }
  std::size_t input_size() const {
    return static_cast<std::size_t>(w_c1.cols());
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("a", flat(a));
    f("b", flat(b));
    f("c", flat(c));
    f("d", flat(d));
    f("w_c1", flat(w_c1));
    f("w_c2", flat(w_c2));
  }
};

// Starts from the rotation blocks of a random RTU initialization with unit
// input scale.
BlockDiagParams init_blockdiag_params(std::size_t n, std::size_t d,
                                      Variant variant, Activation activation,
                                      const InitOptions& init, Rng& rng);
// a = g, b = -phi, c = phi, d = g, s = gamma: reproduces the linear RTU.
BlockDiagParams embed_rtu(const RtuParams& params);

struct BlockDiagTraces {
  // e_p[0] = d h_c1 / d p, e_p[1] = d h_c2 / d p.
  Vec e_a1, e_a2, e_b1, e_b2, e_c1, e_c2, e_d1, e_d2;
  Mat E_w11, E_w12, E_w21, E_w22;

  static BlockDiagTraces zeros(std::size_t n, std::size_t d);
  std::size_t scalar_count() const;
  void set_zero();
};

struct BlockDiagGrad {
  Vec a, b, c, d;
  Mat w_c1, w_c2;
  static BlockDiagGrad zeros(std::size_t n, std::size_t d);

  template <typename F>
  void for_each_tensor(F&& f) {
    f("a", flat(a));
    f("b", flat(b));
    f("c", flat(c));
    f("d", flat(d));
    f("w_c1", flat(w_c1));
    f("w_c2", flat(w_c2));
  }
};

// Uses RtuState (h and pre-activations) for the block state.
void blockdiag_step_and_trace(RtuState& state, BlockDiagTraces& traces,
                              const BlockDiagParams& params, const Vec& x);
RtuState blockdiag_step(const RtuState& state, const BlockDiagParams& params,
                        const Vec& x);
void blockdiag_accumulate_gradient(const CreditSignal& credit,
                                   const BlockDiagTraces& traces,
                                   BlockDiagGrad& grad);

// ---------------------------------------------------------------------------
// Dense linear RNN h_t = W_h h_{t-1} + W_x x_t with an affine readout.
// Trained by truncated BPTT (see oracles.hpp); no traces.

struct DenseRnnParams {
  Mat w_h;  // n x n
  Mat w_x;  // n x d
  Mat w_y;  // m x n
  Vec b_y;  // m

  std::size_t width() const { return static_cast<std::size_t>(w_h.rows()); }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("w_h", flat(w_h));
    f("w_x", flat(w_x));
    f("w_y", flat(w_y));
    f("b_y", flat(b_y));
  }
};

DenseRnnParams init_dense_rnn(std::size_t n, std::size_t d, std::size_t m,
                              Rng& rng);
Vec dense_linear_rnn_step(const Vec& h, const DenseRnnParams& params,
                          const Vec& x);

// Returns 2 if the characteristic cubic of the 3x3 matrix has a negative
// discriminant (one real root, a complex-conjugate pair), else 0.
int count_complex_eigenvalues_3x3(const Mat& w);
inline constexpr double kDiscriminantTolerance = 1e-12;
double cubic_discriminant_3x3(const Mat& w);

}  // namespace rtu

#endif  // RTU_BASELINES_HPP_
