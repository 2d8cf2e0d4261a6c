#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "qkdsim/core.hpp"

namespace qkdsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Decorrelated sub-seed for stream `stream_id` of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id) {
  return splitmix64(master ^ splitmix64(stream_id));
}

// Seeded random stream. Distribution objects are constructed per draw so the
// stream state is exactly the engine state (checkpointable as one string).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double gauss() {
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
  }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::int64_t>(n, p)(engine_);
  }

  std::uint64_t word() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void load_state(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (!is) throw IoError("RngStream: malformed engine state");
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

// Selection sampling: uniformly marks exactly `remaining_marked` of the
// `remaining_total` positions still to be visited. Call once per position
// with the running remainders.
inline bool take_next(std::int64_t remaining_marked, std::int64_t remaining_total,
                      RngStream& rng) {
  if (remaining_marked <= 0) return false;
  if (remaining_marked >= remaining_total) return true;
  return rng.below(static_cast<std::uint64_t>(remaining_total)) <
         static_cast<std::uint64_t>(remaining_marked);
}

}  // namespace detail

}  // namespace qkdsim
