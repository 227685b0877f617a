#include "scd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace scd {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("uniform_int: n must be positive");
  }
  // 2^64 mod n; values below it would bias the modulo.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

double Rng::uniform() {
  return double(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index) {
  std::uint64_t s = splitmix64(master ^ (stream * 0xd1342543de82ef95ULL));
  return splitmix64(s ^ (index * 0xaf251af3b0f025b5ULL));
}

}  // namespace scd
