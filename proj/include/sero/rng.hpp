#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sero {

// Seeded generator with hand-rolled sampling so that sequences are identical
// across platforms and standard-library versions. std::uniform_* distributions
// are implementation-defined and must not be used anywhere a run has to be
// reproducible byte-for-byte.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). n must be > 0.
  std::size_t index(std::size_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  template <typename T> void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::uint64_t fork_seed() { return next_u64(); }

private:
  std::mt19937_64 gen_;
};

} // namespace sero
