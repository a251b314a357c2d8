#ifndef RTU_TESTS_HELPERS_HPP_
#define RTU_TESTS_HELPERS_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rtu/common.hpp"
#include "rtu/rng.hpp"

namespace rtu::testing {

inline Vec random_vec(Rng& rng, Eigen::Index n, double lo = -1.0,
                      double hi = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

inline Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c,
                      double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline std::vector<Vec> random_sequence(Rng& rng, std::size_t T,
                                        Eigen::Index d) {
  std::vector<Vec> xs;
  for (std::size_t t = 0; t < T; ++t) xs.push_back(random_vec(rng, d));
  return xs;
}

// Central difference of a scalar function of one mutable scalar.
inline double central_difference(double& slot, const std::function<double()>& f,
                                 double step) {
  const double saved = slot;
  slot = saved + step;
  const double up = f();
  slot = saved - step;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace rtu::testing

#endif  // RTU_TESTS_HELPERS_HPP_
