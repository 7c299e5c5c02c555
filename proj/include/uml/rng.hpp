#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace uml {

// SplitMix64: tiny counter-style generator. Cheap to construct, so every
// sample / trial / module gets its own stream keyed by a derived seed.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Hash a seed together with a path of stream identifiers.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Well-known stream tags so unrelated consumers never share a stream.
namespace stream {
inline constexpr std::uint64_t kSpec = 1;
inline constexpr std::uint64_t kTheta = 2;
inline constexpr std::uint64_t kSampleX = 3;
inline constexpr std::uint64_t kSampleY = 4;
inline constexpr std::uint64_t kTrial = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kShuffle = 7;
inline constexpr std::uint64_t kSchedule = 8;
inline constexpr std::uint64_t kEnsemble = 9;
inline constexpr std::uint64_t kData = 10;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) : engine_(derive_seed(seed, path)) {}

  double normal() { return std::normal_distribution<double>{}(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>{lo, hi}(engine_); }
  // Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>{lo, hi}(engine_);
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::VectorXd unit_vector(Eigen::Index n);

  SplitMix64& engine() { return engine_; }

 private:
  SplitMix64 engine_;
};

}  // namespace uml
