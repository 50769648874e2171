#include "bro/replay.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "bro/errors.hpp"

namespace bro {

namespace {

constexpr char kMagic[8] = {'B', 'R', 'O', 'R', 'E', 'P', 'L', '1'};

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("replay dump truncated");
  return value;
}

template <class T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_vec(std::istream& in) {
  std::vector<T> v(read_pod<std::uint64_t>(in));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!in) throw std::runtime_error("replay dump truncated");
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int obs_dim, int action_dim, std::size_t capacity)
    : obs_dim_(obs_dim), action_dim_(action_dim), capacity_(capacity) {
  require_shape(obs_dim >= 1 && action_dim >= 1, "replay buffer dimensions must be >= 1");
  require_domain(capacity >= 1, "replay buffer capacity must be >= 1");
}

std::size_t ReplayBuffer::slot(std::size_t logical) const {
  return size_ < capacity_ ? logical : (head_ + logical) % capacity_;
}

void ReplayBuffer::add(const Transition& t) {
  require_shape(t.obs.size() == obs_dim_ && t.next_obs.size() == obs_dim_ &&
                    t.action.size() == action_dim_,
                "transition widths do not match the buffer");
  require_domain(t.obs.allFinite() && t.next_obs.allFinite() && t.action.allFinite() &&
                     std::isfinite(t.reward),
                 "transition contains non-finite values");
  if (size_ < capacity_) {
    obs_.insert(obs_.end(), t.obs.begin(), t.obs.end());
    action_.insert(action_.end(), t.action.begin(), t.action.end());
    reward_.push_back(t.reward);
    next_obs_.insert(next_obs_.end(), t.next_obs.begin(), t.next_obs.end());
    terminated_.push_back(t.terminated);
    truncated_.push_back(t.truncated);
    ++size_;
    return;
  }
  const std::size_t s = head_;
  std::copy(t.obs.begin(), t.obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(s * obs_dim_));
  std::copy(t.action.begin(), t.action.end(),
            action_.begin() + static_cast<std::ptrdiff_t>(s * action_dim_));
  reward_[s] = t.reward;
  std::copy(t.next_obs.begin(), t.next_obs.end(),
            next_obs_.begin() + static_cast<std::ptrdiff_t>(s * obs_dim_));
  terminated_[s] = t.terminated;
  truncated_[s] = t.truncated;
  head_ = (head_ + 1) % capacity_;
}

Transition ReplayBuffer::at(std::size_t index) const {
  require_domain(index < size_, "replay index out of range");
  const std::size_t s = slot(index);
  Transition t;
  t.obs = Eigen::Map<const Vector<double>>(obs_.data() + s * obs_dim_, obs_dim_);
  t.action = Eigen::Map<const Vector<double>>(action_.data() + s * action_dim_, action_dim_);
  t.reward = reward_[s];
  t.next_obs = Eigen::Map<const Vector<double>>(next_obs_.data() + s * obs_dim_, obs_dim_);
  t.terminated = terminated_[s] != 0;
  t.truncated = truncated_[s] != 0;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  require_domain(size_ >= 1, "cannot sample from an empty replay buffer");
  std::vector<std::size_t> indices(batch_size);
  for (auto& i : indices) i = rng.index(size_);
  return indices;
}

TransitionBatch ReplayBuffer::gather(const std::vector<std::size_t>& logical_indices) const {
  const auto n = static_cast<Eigen::Index>(logical_indices.size());
  TransitionBatch batch;
  batch.obs.resize(obs_dim_, n);
  batch.action.resize(action_dim_, n);
  batch.reward.resize(n);
  batch.next_obs.resize(obs_dim_, n);
  batch.terminated.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t logical = logical_indices[static_cast<std::size_t>(j)];
    require_domain(logical < size_, "replay index out of range");
    const std::size_t s = slot(logical);
    for (int i = 0; i < obs_dim_; ++i) {
      batch.obs(i, j) = static_cast<float>(obs_[s * obs_dim_ + i]);
      batch.next_obs(i, j) = static_cast<float>(next_obs_[s * obs_dim_ + i]);
    }
    for (int i = 0; i < action_dim_; ++i) {
      batch.action(i, j) = static_cast<float>(action_[s * action_dim_ + i]);
    }
    batch.reward(j) = static_cast<float>(reward_[s]);
    batch.terminated(j) = terminated_[s] ? 1.0f : 0.0f;
  }
  return batch;
}

TransitionBatch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  return gather(sample_indices(batch_size, rng));
}

void ReplayBuffer::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::int32_t>(out, obs_dim_);
  write_pod<std::int32_t>(out, action_dim_);
  write_pod<std::uint64_t>(out, capacity_);
  write_pod<std::uint64_t>(out, size_);
  write_pod<std::uint64_t>(out, head_);
  write_vec(out, obs_);
  write_vec(out, action_);
  write_vec(out, reward_);
  write_vec(out, next_obs_);
  write_vec(out, terminated_);
  write_vec(out, truncated_);
}

ReplayBuffer ReplayBuffer::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw std::runtime_error("not a replay buffer dump");
  }
  const auto obs_dim = read_pod<std::int32_t>(in);
  const auto action_dim = read_pod<std::int32_t>(in);
  ReplayBuffer buffer(obs_dim, action_dim, read_pod<std::uint64_t>(in));
  buffer.size_ = read_pod<std::uint64_t>(in);
  buffer.head_ = read_pod<std::uint64_t>(in);
  buffer.obs_ = read_vec<double>(in);
  buffer.action_ = read_vec<double>(in);
  buffer.reward_ = read_vec<double>(in);
  buffer.next_obs_ = read_vec<double>(in);
  buffer.terminated_ = read_vec<unsigned char>(in);
  buffer.truncated_ = read_vec<unsigned char>(in);
  if (buffer.reward_.size() != buffer.size_ ||
      buffer.obs_.size() != buffer.size_ * static_cast<std::size_t>(obs_dim)) {
    throw std::runtime_error("replay dump is inconsistent");
  }
  return buffer;
}

}  // namespace bro
