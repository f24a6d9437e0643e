#ifndef MOCU_RNG_HPP
#define MOCU_RNG_HPP

// Counter-based random streams. Every consumer owns an independent stream
// keyed by (seed, stream id), so results do not depend on evaluation order.

#include <cstdint>
#include <cmath>

namespace mocu {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream)
      : key_(splitmix64(seed ^ splitmix64(stream * 0x9e3779b97f4a7c15ull + 1))) {}

  uint64_t nextU64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // uniform in [0, 1)
  double uniform() { return double(nextU64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller, one value per call
  double gaussian() {
    if (haveSpare_) {
      haveSpare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    haveSpare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return n ? nextU64() % n : 0; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  bool haveSpare_ = false;
  double spare_ = 0.0;
};

}  // namespace mocu

#endif
