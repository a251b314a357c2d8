#ifndef RTU_MLP_HPP_
#define RTU_MLP_HPP_

// Feed-forward layers with hand-written reverse mode. These sit around the
// recurrent layer; their input gradient is the per-step credit that the
// recurrent traces turn into parameter gradients.

#include <cstddef>
#include <vector>

#include "rtu/common.hpp"
#include "rtu/rng.hpp"
#include "rtu/rtu.hpp"

namespace rtu {

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;
  Activation activation = Activation::kTanh;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;
  // Same shapes, all zero; used as a gradient accumulator.
  MlpParams zeros_like() const;
  MlpParams& operator+=(const MlpParams& o);

  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers) {
      f("weight", flat(l.weight));
      f("bias", flat(l.bias));
    }
  }
};

// `sizes` = {in, hidden..., out}; one activation per layer. Weights are
// U[-1/sqrt(in), 1/sqrt(in)], the last layer additionally scaled by
// `last_scale`; biases start at zero.
MlpParams init_mlp(const std::vector<std::size_t>& sizes,
                   const std::vector<Activation>& activations, Rng& rng,
                   double last_scale = 1.0);

struct ForwardCache {
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each layer
};

Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache& cache);
Vec mlp_forward(const MlpParams& params, const Vec& input);

struct MlpBackward {
  MlpParams grads;
  Vec d_input;
};

MlpBackward mlp_backward(const MlpParams& params, const ForwardCache& cache,
                         const Vec& d_output);
// grads += ..., returns d_input.
Vec mlp_backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                            const Vec& d_output, MlpParams& grads);

// Splits the gradient w.r.t. the combined recurrent output into the credit on
// (h_c1, h_c2). For the linear variant the post-recurrence activation is
// differentiated here, so the recurrent traces never see it.
CreditSignal split_credit(const Vec& d_combined, const RtuState& state,
                          Variant variant, Activation activation);

}  // namespace rtu

#endif  // RTU_MLP_HPP_
