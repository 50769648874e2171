#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace bro {

// Seeded random stream. The full state (engine plus the cached normal
// deviate) round-trips through serialize()/deserialize() so checkpoints
// resume the exact same sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double low, double high);
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// splitmix64-based seed derivation for independent sub-streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace bro
