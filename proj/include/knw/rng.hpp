#pragma once

#include <cmath>
#include <cstdint>

namespace knw {

// SplitMix64 step: advances the state and returns the next 64-bit output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Independent sub-streams of the global seed. Each consumer draws from its
// own purpose so adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
  model_init = 1,
  task_sampling = 2,
  agent_init = 3,
};

// Deterministic generator with counter-based stream derivation. All random
// state in the project flows through this type; platform distributions are
// avoided because their draw sequences are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives the sub-stream of `global_seed` for `purpose`. `index` separates
  // repeated uses of one purpose (e.g. one stream per pipeline stage).
  static Rng stream(std::uint64_t global_seed, Stream purpose,
                    std::uint64_t index = 0) {
    std::uint64_t s = global_seed;
    s ^= 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(purpose) + 1);
    s ^= 0xbf58476d1ce4e5b9ull * (index + 1);
    (void)splitmix64(s);
    return Rng(s);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via the polar method. The spare variate is discarded so
  // the generator stays stateless apart from the counter.
  double normal() {
    for (;;) {
      double u = 2.0 * uniform01() - 1.0;
      double v = 2.0 * uniform01() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace knw
