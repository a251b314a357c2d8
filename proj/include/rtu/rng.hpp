#ifndef RTU_RNG_HPP_
#define RTU_RNG_HPP_

#include <cstdint>
#include <limits>

namespace rtu {

// Counter-based generator: output i of stream (seed, stream) is a pure
// function of (seed, stream, i). Different stream ids give independent
// substreams, so environment and initialization draws never interleave.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named substreams, so call sites do not pick magic numbers.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEnvironment = 2,
  kPolicy = 3,
  kShuffle = 4,
  kOracle = 5,
};

inline Rng make_rng(std::uint64_t seed, Stream s) {
  return Rng(seed, static_cast<std::uint64_t>(s));
}

}  // namespace rtu

#endif  // RTU_RNG_HPP_
