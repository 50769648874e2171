#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "bro/networks.hpp"
#include "bro/rng.hpp"

namespace bro {

struct Transition {
  Vector<double> obs;
  Vector<double> action;
  double reward = 0.0;
  Vector<double> next_obs;
  bool terminated = false;
  bool truncated = false;

  bool operator==(const Transition&) const = default;
};

// Column-per-sample batch in the agent's working precision.
struct TransitionBatch {
  Matrix<float> obs;
  Matrix<float> action;
  RowArray<float> reward;
  Matrix<float> next_obs;
  RowArray<float> terminated;

  Eigen::Index size() const { return obs.cols(); }
};

// Fixed-capacity FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity = kDefaultCapacity);

  void add(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

  // Logical index: 0 is the oldest stored transition.
  Transition at(std::size_t index) const;

  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
  TransitionBatch sample(std::size_t batch_size, Rng& rng) const;
  TransitionBatch gather(const std::vector<std::size_t>& logical_indices) const;

  void save(std::ostream& out) const;
  static ReplayBuffer load(std::istream& in);

 private:
  std::size_t slot(std::size_t logical) const;

  int obs_dim_;
  int action_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // slot of the oldest element once full
  std::vector<double> obs_;
  std::vector<double> action_;
  std::vector<double> reward_;
  std::vector<double> next_obs_;
  std::vector<unsigned char> terminated_;
  std::vector<unsigned char> truncated_;
};

}  // namespace bro
