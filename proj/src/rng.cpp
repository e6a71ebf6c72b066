#include "atgan/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace atgan {

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) {
    throw std::invalid_argument("Rng::uniform_int: n must be positive, got " + std::to_string(n));
  }
  return static_cast<int>(uniform() * static_cast<double>(n));
}

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a hash-combined pair
  std::uint64_t h = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) {
    throw std::runtime_error("Rng::deserialize: malformed engine state");
  }
}

}  // namespace atgan
