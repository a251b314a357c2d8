#include "rtu/optim.hpp"

namespace rtu {

std::vector<double> flatten(const TensorList& list) {
  std::vector<double> out;
  for (auto s : list) out.insert(out.end(), s.begin(), s.end());
  return out;
}

double global_norm(const TensorList& grads) {
  double sq = 0.0;
  for (auto s : grads)
    for (double v : s) sq += v * v;
  return std::sqrt(sq);
}

double clip_global_norm(const TensorList& grads, double max_norm) {
  if (!(max_norm > 0.0))
    fail(ErrorCode::kInvalidArgument, "clip_global_norm needs max_norm > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto s : grads)
      for (double& v : s) v *= scale;
  }
  return norm;
}

void Adam::step(const TensorList& params, const TensorList& grads) {
  require_shape(params.size() == grads.size(), "Adam: tensor count mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(params[i].size() == grads[i].size(),
                  "Adam: tensor " + std::to_string(i) + " shape mismatch");
    for (double g : grads[i])
      if (!std::isfinite(g))
        fail(ErrorCode::kNumeric, "Adam: non-finite gradient in tensor " +
                                      std::to_string(i) + ", update rejected");
    total += params[i].size();
  }
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  require_shape(m_.size() == total, "Adam: parameter layout changed");

  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  std::size_t k = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j, ++k) {
      const double g = grads[i][j];
      m_[k] = b1 * m_[k] + (1.0 - b1) * g;
      v_[k] = b2 * v_[k] + (1.0 - b2) * g * g;
      const double m_hat = m_[k] / c1;
      const double v_hat = v_[k] / c2;
      params[i][j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace rtu
