#pragma once

// BroNet and vanilla-MLP function approximators.
//
// Activations are laid out column-per-sample: a batch is a [features x batch]
// matrix so every dense layer is a single W * X product.
//
// BroNet (bronet architecture):
//   h0 = ReLU(LN(W_in x + b_in))
//   h_{i+1} = h_i + LN2(W2 ReLU(LN1(W1 h_i + b1)) + b2)     for each block
//   y = W_out h_N + b_out
//
// Vanilla MLP: two hidden Dense+ReLU layers of hidden_size, no normalization.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bro/rng.hpp"

namespace bro {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using RowArray = Eigen::Array<T, 1, Eigen::Dynamic>;

inline constexpr double kLayerNormEpsilon = 1e-5;

enum class Architecture { bronet, vanilla_mlp };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

struct BroNetConfig {
  int input_dim = 1;
  int hidden_size = 512;
  int num_blocks = 2;
  int output_dim = 1;
  Architecture architecture = Architecture::bronet;
  // Gain of the orthogonal initializer on the final dense layer.
  double output_gain = 1.0;

  bool operator==(const BroNetConfig&) const = default;
};

// Throws ShapeError when any dimension is < 1 or the gain is not positive.
void validate(const BroNetConfig& config);

struct ModelSizePreset {
  std::string_view label;
  int num_blocks;
  int hidden_size;
};

// Model-size labels and their (blocks, width) pairs.
inline constexpr std::array<ModelSizePreset, 5> kModelSizePresets{{
    {"0.55M", 1, 128},
    {"1.05M", 1, 256},
    {"2.83M", 1, 512},
    {"4.92M", 2, 512},
    {"26.31M", 3, 1024},
}};

const ModelSizePreset& model_size_preset(std::string_view label);

enum class ArrayKind { dense_weight, dense_bias, norm_gain, norm_bias };

struct ArraySpec {
  std::string name;
  ArrayKind kind;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index offset;

  Eigen::Index size() const { return rows * cols; }
};

// Every parameter array of the network in flat-storage order.
std::vector<ArraySpec> parameter_layout(const BroNetConfig& config);

// Closed-form parameter count of a single network.
std::size_t count_params(const BroNetConfig& config);

// Parameter tree of one network stored in a single flat vector; the layout is
// a pure function of the config (see parameter_layout).
template <class T>
struct BroNetParams {
  BroNetConfig config;
  Vector<T> values;

  bool operator==(const BroNetParams& other) const {
    return config == other.config && values.size() == other.values.size() &&
           values == other.values;
  }
};

// 1 for dense weights, 0 for biases and normalization parameters.
template <class T>
Vector<T> weight_decay_mask(const BroNetConfig& config);

template <class T>
BroNetParams<T> init_bronet(const BroNetConfig& config, Rng& rng);

// Fresh draw with the same config. Equivalent to init_bronet(params.config, rng).
template <class T>
BroNetParams<T> reinitialize(const BroNetParams<T>& params, Rng& rng);

// Layer normalization over a single feature vector.
Vector<double> layer_norm(const Vector<double>& x, const Vector<double>& gain,
                          const Vector<double>& bias);

template <class T>
struct NormCache {
  Matrix<T> normalized;
  RowArray<T> inv_std;
};

template <class T>
struct ForwardCache {
  Matrix<T> input;
  // bronet: hiddens[0] is the post-ReLU input block, hiddens[i+1] the output of block i.
  std::vector<Matrix<T>> hiddens;
  NormCache<T> input_norm;
  std::vector<NormCache<T>> first_norms;
  std::vector<Matrix<T>> first_acts;
  std::vector<NormCache<T>> second_norms;
  // vanilla_mlp: the two hidden activations.
  Matrix<T> mlp_hidden1;
  Matrix<T> mlp_hidden2;
};

// Evaluator for one network config. Holds only offsets; parameters are passed
// in so one evaluator serves online, target and freshly reset trees alike.
template <class T>
class BroNet {
 public:
  explicit BroNet(const BroNetConfig& config);

  const BroNetConfig& config() const { return config_; }
  Eigen::Index num_params() const { return total_; }

  Matrix<T> forward(const BroNetParams<T>& params, const Matrix<T>& x) const;
  Matrix<T> forward(const BroNetParams<T>& params, const Matrix<T>& x,
                    ForwardCache<T>& cache) const;

  // Backpropagates grad_out ([output_dim x batch]). grad_params receives the
  // full parameter gradient (skipped when null); grad_input the gradient with
  // respect to the input batch (skipped when null).
  void backward(const BroNetParams<T>& params, const ForwardCache<T>& cache,
                const Matrix<T>& grad_out, Vector<T>* grad_params,
                Matrix<T>* grad_input) const;

 private:
  struct Dense {
    Eigen::Index weight, bias, rows, cols;
  };
  struct Norm {
    Eigen::Index gain, bias, dim;
  };
  struct Block {
    Dense first;
    Norm first_norm;
    Dense second;
    Norm second_norm;
  };

  Matrix<T> run(const BroNetParams<T>& params, const Matrix<T>& x, ForwardCache<T>* cache) const;
  void check(const BroNetParams<T>& params) const;

  BroNetConfig config_;
  Dense input_{};
  Norm input_norm_{};
  std::vector<Block> blocks_;
  Dense mlp_hidden_{};
  Dense output_{};
  Eigen::Index total_ = 0;
};

template <class T>
Matrix<T> bronet_forward(const BroNetParams<T>& params, const Matrix<T>& x) {
  return BroNet<T>(params.config).forward(params, x);
}

}  // namespace bro
