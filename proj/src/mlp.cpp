#include "rtu/mlp.hpp"

#include <string>

namespace rtu {

std::size_t MlpParams::input_size() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t MlpParams::output_size() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t MlpParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers)
    total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return total;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out = *this;
  for (auto& l : out.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return out;
}

MlpParams& MlpParams::operator+=(const MlpParams& o) {
  require_shape(o.layers.size() == layers.size(), "layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += o.layers[i].weight;
    layers[i].bias += o.layers[i].bias;
  }
  return *this;
}

MlpParams init_mlp(const std::vector<std::size_t>& sizes,
                   const std::vector<Activation>& activations, Rng& rng,
                   double last_scale) {
  require_shape(sizes.size() >= 2 && activations.size() == sizes.size() - 1,
                "init_mlp: need one activation per layer");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    const auto in = static_cast<Eigen::Index>(sizes[i]);
    const auto out = static_cast<Eigen::Index>(sizes[i + 1]);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (i + 2 == sizes.size()) bound *= last_scale;
    l.weight.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r)
        l.weight(r, c) = rng.uniform(-bound, bound);
    l.bias = Vec::Zero(out);
    l.activation = activations[i];
    p.layers.push_back(std::move(l));
  }
  return p;
}

Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache& cache) {
  cache.inputs.resize(params.layers.size());
  cache.pre.resize(params.layers.size());
  Vec a = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    require_shape(a.size() == l.weight.cols(),
                  "mlp layer " + std::to_string(i) + " expects input " +
                      std::to_string(l.weight.cols()) + ", got " +
                      std::to_string(a.size()));
    cache.inputs[i] = a;
    cache.pre[i].noalias() = l.weight * a;
    cache.pre[i] += l.bias;
    a = activate(l.activation, cache.pre[i]);
  }
  return a;
}

Vec mlp_forward(const MlpParams& params, const Vec& input) {
  ForwardCache cache;
  return mlp_forward(params, input, cache);
}

Vec mlp_backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                            const Vec& d_output, MlpParams& grads) {
  const std::size_t L = params.layers.size();
  if (cache.inputs.size() != L || cache.pre.size() != L)
    fail(ErrorCode::kInvalidArgument, "forward cache does not match network");
  require_shape(grads.layers.size() == L, "gradient accumulator shape");
  require_shape(L == 0 || d_output.size() == params.layers.back().weight.rows(),
                "d_output length does not match network output");
  Vec delta = d_output;
  for (std::size_t i = L; i-- > 0;) {
    const auto& l = params.layers[i];
    if (cache.inputs[i].size() != l.weight.cols() ||
        cache.pre[i].size() != l.weight.rows())
      fail(ErrorCode::kInvalidArgument, "stale forward cache at layer " +
                                            std::to_string(i));
    delta.array() *= activate_grad(l.activation, cache.pre[i]).array();
    grads.layers[i].weight.noalias() += delta * cache.inputs[i].transpose();
    grads.layers[i].bias += delta;
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

MlpBackward mlp_backward(const MlpParams& params, const ForwardCache& cache,
                         const Vec& d_output) {
  MlpBackward out{params.zeros_like(), Vec()};
  out.d_input = mlp_backward_accumulate(params, cache, d_output, out.grads);
  return out;
}

CreditSignal split_credit(const Vec& d_combined, const RtuState& state,
                          Variant variant, Activation activation) {
  const auto n = state.h_c1.size();
  require_shape(d_combined.size() == 2 * n,
                "credit length must be 2n = " + std::to_string(2 * n));
  CreditSignal c{d_combined.head(n), d_combined.tail(n)};
  if (variant == Variant::kLinear) {
    c.d_c1.array() *= activate_grad(activation, state.h_c1).array();
    c.d_c2.array() *= activate_grad(activation, state.h_c2).array();
  }
  return c;
}

}  // namespace rtu
