#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace gfn {

/// Seed for a named sub-stream ("data", "init", "augment", ...), optionally
/// refined by integer keys such as (stage, epoch). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::initializer_list<std::uint64_t> keys = {});

/// mt19937_64 with distribution code kept here so draws are identical on
/// every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool coin() { return (engine_() >> 63) != 0; }
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gfn
