#ifndef RTU_COMMON_HPP_
#define RTU_COMMON_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rtu {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  kInvalidArgument = 1,
  kShape,
  kNumeric,
  kConfig,
  kIo,
  kTolerance,
  kUnsupported,
  kInternal,
};

const char* error_code_name(ErrorCode code);

// All library failures are reported through this type; the C API maps the
// code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require_shape(bool ok, std::string_view what) {
  if (!ok) fail(ErrorCode::kShape, std::string(what));
}

inline bool all_finite(const Eigen::Ref<const Mat>& m) {
  return m.allFinite();
}

// Mutable flat view over an Eigen container, used by optimizers and
// finite-difference oracles.
template <typename Derived>
std::span<double> flat(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename Derived>
std::span<const double> flat(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

// Relative error between two flat vectors: ||a - b|| / max(||a||, ||b||, floor).
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-12);

template <typename A, typename B>
double relative_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                      double floor = 1e-12) {
  const typename A::PlainObject pa = a;
  const typename B::PlainObject pb = b;
  return relative_error(std::span<const double>(pa.data(), pa.size()),
                        std::span<const double>(pb.data(), pb.size()), floor);
}

}  // namespace rtu

#endif  // RTU_COMMON_HPP_
