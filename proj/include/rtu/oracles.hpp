#ifndef RTU_ORACLES_HPP_
#define RTU_ORACLES_HPP_

// Independent gradient references for every recurrence with traces: reverse
// accumulation over the full unroll, central finite differences, and the
// truncated (T-BPTT) variant used as a training mode.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "rtu/baselines.hpp"
#include "rtu/optim.hpp"
#include "rtu/rtu.hpp"

namespace rtu {

// Per-step loss 0.5 ||V y_t - target_t||^2 on a layer output y_t.
struct QuadraticLoss {
  Mat readout;
  std::vector<Vec> targets;

  double value(std::size_t t, const Vec& out) const;
  Vec output_grad(std::size_t t, const Vec& out) const;
};

// Random readout and targets for a sequence of length T.
QuadraticLoss random_quadratic_loss(std::size_t out_size, std::size_t m,
                                    std::size_t T, Rng& rng);

inline constexpr std::size_t kMaxUnroll = 100000;

// --- RTU -------------------------------------------------------------------

double rtu_sequence_loss(const RtuParams& params, const std::vector<Vec>& xs,
                         const QuadraticLoss& loss);
// Sum over steps of assemble_param_gradient, parameters frozen.
ParamGrad rtrl_gradient(const RtuParams& params, const std::vector<Vec>& xs,
                        const QuadraticLoss& loss);
// Reverse accumulation over the whole sequence. Throws a kInvalidArgument
// error when the sequence exceeds `max_len`.
ParamGrad bptt_gradient(const RtuParams& params, const std::vector<Vec>& xs,
                        const QuadraticLoss& loss,
                        std::size_t max_len = kMaxUnroll);

// --- Online LRU ------------------------------------------------------------

double lru_sequence_loss(const LruParams& params, const std::vector<Vec>& xs,
                         const QuadraticLoss& loss);
LruGrad lru_rtrl_gradient(const LruParams& params, const std::vector<Vec>& xs,
                          const QuadraticLoss& loss);
LruGrad lru_bptt_gradient(const LruParams& params, const std::vector<Vec>& xs,
                          const QuadraticLoss& loss,
                          std::size_t max_len = kMaxUnroll);

// --- Block-diagonal --------------------------------------------------------

double blockdiag_sequence_loss(const BlockDiagParams& params,
                               const std::vector<Vec>& xs,
                               const QuadraticLoss& loss);
BlockDiagGrad blockdiag_rtrl_gradient(const BlockDiagParams& params,
                                      const std::vector<Vec>& xs,
                                      const QuadraticLoss& loss);
BlockDiagGrad blockdiag_bptt_gradient(const BlockDiagParams& params,
                                      const std::vector<Vec>& xs,
                                      const QuadraticLoss& loss,
                                      std::size_t max_len = kMaxUnroll);

// --- Finite differences ----------------------------------------------------

// (L(p + step) - L(p - step)) / (2 step) for every scalar of `params`, in
// for_each_tensor order. `loss` must read the (temporarily perturbed) params.
template <typename Params>
std::vector<double> finite_difference_gradient(
    Params& params, const std::function<double()>& loss, double step) {
  if (!(step > 0.0))
    fail(ErrorCode::kInvalidArgument, "finite difference step must be > 0");
  std::vector<double> out;
  params.for_each_tensor([&](const char*, std::span<double> s) {
    for (double& v : s) {
      const double saved = v;
      v = saved + step;
      const double up = loss();
      v = saved - step;
      const double down = loss();
      v = saved;
      out.push_back((up - down) / (2.0 * step));
    }
  });
  return out;
}

// --- Truncated BPTT --------------------------------------------------------

// Sliding window of the last <= T transitions of an RTU.
struct UnrollRecord {
  explicit UnrollRecord(std::size_t truncation, std::size_t n = 0);

  std::size_t truncation;
  RtuState start;  // state preceding the first stored input
  std::deque<Vec> inputs;
  std::deque<RtuState> states;  // state after each stored input
  double loss_sum = 0.0;

  void push(const Vec& x, const RtuState& after);
  void reset(std::size_t n);
  std::size_t size() const { return inputs.size(); }
};

// Gradient of sum_t l_t over the window, treating `record.start` as constant.
// `output_grads[i]` is dl/dh_combined at the i-th stored step (empty = no
// loss at that step).
ParamGrad tbptt_gradient(const RtuParams& params, const UnrollRecord& record,
                         const std::vector<Vec>& output_grads);
// Same, with a loss only on the most recent step (incremental T-BPTT).
ParamGrad tbptt_gradient_last(const RtuParams& params,
                              const UnrollRecord& record,
                              const Vec& last_output_grad);
// One gradient step on the window; returns the gradient that was applied.
ParamGrad tbptt_train_step(const UnrollRecord& record, RtuParams& params,
                           Adam& optimizer,
                           const std::vector<Vec>& output_grads);

// Dense linear RNN with a softmax cross-entropy readout on the last step of
// the window.
struct DenseWindow {
  explicit DenseWindow(std::size_t truncation, std::size_t n);
  std::size_t truncation;
  Vec start;
  std::deque<Vec> inputs;
  std::deque<Vec> states;
  void push(const Vec& x, const Vec& after);
};

struct DenseRnnGrad {
  DenseRnnParams grad;
  double loss = 0.0;
};

DenseRnnGrad dense_tbptt_gradient(const DenseRnnParams& params,
                                  const DenseWindow& window, int target);

}  // namespace rtu

#endif  // RTU_ORACLES_HPP_
