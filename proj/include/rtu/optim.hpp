#ifndef RTU_OPTIM_HPP_
#define RTU_OPTIM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rtu/common.hpp"

namespace rtu {

using TensorList = std::vector<std::span<double>>;

// Collects the flat views of every tensor of a parameter-like struct.
template <typename T>
TensorList tensors(T& x) {
  TensorList out;
  x.for_each_tensor([&](const char*, std::span<double> s) { out.push_back(s); });
  return out;
}

inline void append(TensorList& to, const TensorList& from) {
  to.insert(to.end(), from.begin(), from.end());
}

std::vector<double> flatten(const TensorList& list);
double global_norm(const TensorList& grads);

// Rescales all gradients by min(1, max_norm / ||g||_2); returns ||g||_2
// before clipping.
double clip_global_norm(const TensorList& grads, double max_norm);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Parameter and gradient lists must have matching shapes, and the same
  // layout on every call. A non-finite gradient leaves everything unchanged
  // and throws a numeric error naming the offending tensor index.
  void step(const TensorList& params, const TensorList& grads);

  template <typename P, typename G>
    requires(!std::is_same_v<std::remove_cvref_t<P>, TensorList>)
  void step(P& params, G& grads) {
    step(tensors(params), tensors(grads));
  }

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  std::int64_t steps_ = 0;
};

}  // namespace rtu

#endif  // RTU_OPTIM_HPP_
