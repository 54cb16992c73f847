#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace vigil {

// Virtual simulation time in integer microseconds. Integer time keeps event
// ordering and tie-breaking exact; CSV output converts to milliseconds.
using SimTime = std::int64_t;

constexpr SimTime kUsPerMs = 1000;
constexpr SimTime kUsPerSec = 1000000;

inline double to_ms(SimTime t) { return static_cast<double>(t) / 1000.0; }
inline double to_sec(SimTime t) { return static_cast<double>(t) / 1.0e6; }
inline SimTime from_ms(double m) { return static_cast<SimTime>(std::llround(m * 1000.0)); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seeded random stream. The engine sequence is pinned by the standard; the
// distributions are implemented here so replays do not depend on the stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from a master seed and a stream tag, e.g.
  // ("camera/3"). Streams with distinct tags are decorrelated.
  static Rng stream(std::uint64_t master_seed, std::string_view tag) {
    return Rng(splitmix64(master_seed ^ fnv1a(tag)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

  // Standard normal via Box-Muller; one spare value is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vigil
