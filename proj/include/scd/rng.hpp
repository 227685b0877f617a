#pragma once

#include <cstdint>
#include <random>

namespace scd {

// mt19937_64 engine with hand-rolled draws. The engine itself is fully
// specified by the standard; std:: distributions are not, so uniform and
// normal sampling are implemented here to keep seeded runs reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n), rejection sampled.
  std::uint64_t uniform_int(std::uint64_t n);

  // [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable sub-stream seed derivation, so independent consumers (init, data,
// pair sampling, ...) never perturb each other's sequences.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index = 0);

// Stream tags used across the trainer.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamData = 2;
inline constexpr std::uint64_t kStreamPairs = 3;
inline constexpr std::uint64_t kStreamEval = 4;

}  // namespace scd
