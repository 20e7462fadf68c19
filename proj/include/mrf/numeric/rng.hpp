#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace mrf {

// Deterministic generator used for every random draw in the project.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The distributions are implemented here rather than taken from
// <random> because the standard library's distributions are not specified
// bit-exactly and differ between implementations.
//   uniform(): top 53 bits of one engine output scaled to [0, 1)
//   normal():  Box-Muller on two uniforms, second variate cached
//   index(n):  rejection sampling on engine outputs (no modulo bias)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::size_t index(std::size_t n);

  // Derive an independent seed for a named sub-stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mrf
