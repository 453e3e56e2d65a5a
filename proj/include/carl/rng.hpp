#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

namespace carl {

/// Mixes a base seed with a stream index so that sibling streams are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Seeded random source. Draws are built directly from the engine's bits so that
/// sequences do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace carl
