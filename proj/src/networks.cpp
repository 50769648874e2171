#include "bro/networks.hpp"

#include <cmath>

#include "bro/errors.hpp"

namespace bro {

std::string_view to_string(Architecture arch) {
  return arch == Architecture::bronet ? "bronet" : "vanilla_mlp";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "bronet") return Architecture::bronet;
  if (name == "vanilla_mlp") return Architecture::vanilla_mlp;
  throw DomainError("unknown architecture '" + std::string(name) + "'");
}

void validate(const BroNetConfig& config) {
  require_shape(config.input_dim >= 1 && config.hidden_size >= 1 && config.num_blocks >= 1 &&
                    config.output_dim >= 1,
                "network dimensions must all be >= 1");
  require_shape(config.output_gain > 0.0, "output_gain must be positive");
}

const ModelSizePreset& model_size_preset(std::string_view label) {
  for (const auto& preset : kModelSizePresets) {
    if (preset.label == label) return preset;
  }
  throw DomainError("unknown model size preset '" + std::string(label) + "'");
}

std::vector<ArraySpec> parameter_layout(const BroNetConfig& config) {
  validate(config);
  std::vector<ArraySpec> specs;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, ArrayKind kind, Eigen::Index rows, Eigen::Index cols) {
    specs.push_back({std::move(name), kind, rows, cols, offset});
    offset += rows * cols;
  };
  auto dense = [&](const std::string& name, Eigen::Index out, Eigen::Index in) {
    add(name + ".weight", ArrayKind::dense_weight, out, in);
    add(name + ".bias", ArrayKind::dense_bias, out, 1);
  };
  auto norm = [&](const std::string& name, Eigen::Index dim) {
    add(name + ".gain", ArrayKind::norm_gain, dim, 1);
    add(name + ".bias", ArrayKind::norm_bias, dim, 1);
  };

  const Eigen::Index h = config.hidden_size;
  if (config.architecture == Architecture::bronet) {
    dense("input", h, config.input_dim);
    norm("input_norm", h);
    for (int b = 0; b < config.num_blocks; ++b) {
      const std::string prefix = "blocks." + std::to_string(b);
      dense(prefix + ".dense1", h, h);
      norm(prefix + ".norm1", h);
      dense(prefix + ".dense2", h, h);
      norm(prefix + ".norm2", h);
    }
  } else {
    dense("hidden1", h, config.input_dim);
    dense("hidden2", h, h);
  }
  dense("output", config.output_dim, h);
  return specs;
}

std::size_t count_params(const BroNetConfig& config) {
  validate(config);
  const std::size_t in = config.input_dim;
  const std::size_t h = config.hidden_size;
  const std::size_t out = config.output_dim;
  if (config.architecture == Architecture::vanilla_mlp) {
    return (in * h + h) + (h * h + h) + (h * out + out);
  }
  const std::size_t per_block = 2 * (h * h + h) + 2 * 2 * h;
  return (in * h + h) + 2 * h + config.num_blocks * per_block + (h * out + out);
}

template <class T>
Vector<T> weight_decay_mask(const BroNetConfig& config) {
  const auto layout = parameter_layout(config);
  Vector<T> mask = Vector<T>::Zero(static_cast<Eigen::Index>(count_params(config)));
  for (const auto& spec : layout) {
    if (spec.kind == ArrayKind::dense_weight) mask.segment(spec.offset, spec.size()).setOnes();
  }
  return mask;
}

namespace {

// Orthogonal matrix scaled by gain: QR of a Gaussian draw with the sign of
// R's diagonal folded into Q so the distribution is uniform (Haar).
Matrix<double> orthogonal(Eigen::Index rows, Eigen::Index cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const Eigen::Index m = tall ? rows : cols;
  const Eigen::Index n = tall ? cols : rows;
  Matrix<double> draw(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) draw(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix<double>> qr(draw);
  Matrix<double> q = qr.householderQ() * Matrix<double>::Identity(m, n);
  const Matrix<double> r = qr.matrixQR().topLeftCorner(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  q *= gain;
  if (tall) return q;
  return q.transpose();
}

template <class T>
void layer_norm_forward(Matrix<T>& z, const Eigen::Map<const Vector<T>>& gain,
                        const Eigen::Map<const Vector<T>>& bias, NormCache<T>* cache) {
  const RowArray<T> mean = z.colwise().mean().array();
  z.array().rowwise() -= mean;
  const RowArray<T> var = z.array().square().colwise().mean();
  const RowArray<T> inv_std = (var + T(kLayerNormEpsilon)).rsqrt();
  z.array().rowwise() *= inv_std;
  if (cache != nullptr) {
    cache->normalized = z;
    cache->inv_std = inv_std;
  }
  z.array().colwise() *= gain.array();
  z.colwise() += bias;
}

// Returns dL/dz given dL/dy; accumulates gain/bias gradients when requested.
template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& grad_y, const Eigen::Map<const Vector<T>>& gain,
                              const NormCache<T>& cache, T* grad_gain, T* grad_bias) {
  const Eigen::Index dim = grad_y.rows();
  if (grad_gain != nullptr) {
    Eigen::Map<Vector<T>>(grad_gain, dim) =
        (grad_y.array() * cache.normalized.array()).rowwise().sum().matrix();
    Eigen::Map<Vector<T>>(grad_bias, dim) = grad_y.rowwise().sum();
  }
  Matrix<T> grad_hat = (grad_y.array().colwise() * gain.array()).matrix();
  const RowArray<T> mean_grad = grad_hat.colwise().mean().array();
  const RowArray<T> mean_proj = (grad_hat.array() * cache.normalized.array()).colwise().mean();
  Matrix<T> grad_z = grad_hat;
  grad_z.array().rowwise() -= mean_grad;
  grad_z.array() -= cache.normalized.array().rowwise() * mean_proj;
  grad_z.array().rowwise() *= cache.inv_std;
  return grad_z;
}

}  // namespace

Vector<double> layer_norm(const Vector<double>& x, const Vector<double>& gain,
                          const Vector<double>& bias) {
  require_shape(x.size() >= 1 && x.size() == gain.size() && x.size() == bias.size(),
                "layer_norm: x, gain and bias must share a non-zero length");
  Matrix<double> z = x;
  layer_norm_forward<double>(z, Eigen::Map<const Vector<double>>(gain.data(), gain.size()),
                             Eigen::Map<const Vector<double>>(bias.data(), bias.size()), nullptr);
  return z.col(0);
}

template <class T>
BroNetParams<T> init_bronet(const BroNetConfig& config, Rng& rng) {
  const auto layout = parameter_layout(config);
  BroNetParams<T> params{config, Vector<T>::Zero(static_cast<Eigen::Index>(count_params(config)))};
  for (const auto& spec : layout) {
    auto segment = params.values.segment(spec.offset, spec.size());
    switch (spec.kind) {
      case ArrayKind::dense_weight: {
        const bool is_output = spec.name == "output.weight";
        const double gain = is_output ? config.output_gain : std::sqrt(2.0);
        const Matrix<double> w = orthogonal(spec.rows, spec.cols, gain, rng);
        segment = Eigen::Map<const Vector<double>>(w.data(), w.size()).template cast<T>();
        break;
      }
      case ArrayKind::norm_gain:
        segment.setOnes();
        break;
      case ArrayKind::dense_bias:
      case ArrayKind::norm_bias:
        segment.setZero();
        break;
    }
  }
  return params;
}

template <class T>
BroNetParams<T> reinitialize(const BroNetParams<T>& params, Rng& rng) {
  return init_bronet<T>(params.config, rng);
}

template <class T>
BroNet<T>::BroNet(const BroNetConfig& config) : config_(config) {
  validate(config);
  Eigen::Index offset = 0;
  auto dense = [&](Eigen::Index rows, Eigen::Index cols) {
    Dense d{offset, offset + rows * cols, rows, cols};
    offset += rows * cols + rows;
    return d;
  };
  auto norm = [&](Eigen::Index dim) {
    Norm n{offset, offset + dim, dim};
    offset += 2 * dim;
    return n;
  };
  const Eigen::Index h = config.hidden_size;
  if (config.architecture == Architecture::bronet) {
    input_ = dense(h, config.input_dim);
    input_norm_ = norm(h);
    for (int b = 0; b < config.num_blocks; ++b) {
      Block block;
      block.first = dense(h, h);
      block.first_norm = norm(h);
      block.second = dense(h, h);
      block.second_norm = norm(h);
      blocks_.push_back(block);
    }
  } else {
    input_ = dense(h, config.input_dim);
    mlp_hidden_ = dense(h, h);
  }
  output_ = dense(config.output_dim, h);
  total_ = offset;
}

template <class T>
void BroNet<T>::check(const BroNetParams<T>& params) const {
  require_shape(params.config == config_, "parameter tree config does not match network");
  require_shape(params.values.size() == total_, "parameter tree has wrong flat length");
}

template <class T>
Matrix<T> BroNet<T>::forward(const BroNetParams<T>& params, const Matrix<T>& x) const {
  return run(params, x, nullptr);
}

template <class T>
Matrix<T> BroNet<T>::forward(const BroNetParams<T>& params, const Matrix<T>& x,
                             ForwardCache<T>& cache) const {
  return run(params, x, &cache);
}

template <class T>
Matrix<T> BroNet<T>::run(const BroNetParams<T>& params, const Matrix<T>& x,
                         ForwardCache<T>* cache) const {
  check(params);
  require_shape(x.rows() == config_.input_dim,
                "input width " + std::to_string(x.rows()) + " != input_dim " +
                    std::to_string(config_.input_dim));
  require_domain(x.allFinite(), "network input contains non-finite values");

  const T* p = params.values.data();
  auto weight = [p](const Dense& d) {
    return Eigen::Map<const Matrix<T>>(p + d.weight, d.rows, d.cols);
  };
  auto bias = [p](const Dense& d) { return Eigen::Map<const Vector<T>>(p + d.bias, d.rows); };
  auto gain = [p](const Norm& n) { return Eigen::Map<const Vector<T>>(p + n.gain, n.dim); };
  auto shift = [p](const Norm& n) { return Eigen::Map<const Vector<T>>(p + n.bias, n.dim); };
  auto affine = [&](const Dense& d, const Matrix<T>& in) {
    Matrix<T> z = weight(d) * in;
    z.colwise() += bias(d);
    return z;
  };

  if (cache != nullptr) cache->input = x;

  if (config_.architecture == Architecture::vanilla_mlp) {
    Matrix<T> h1 = affine(input_, x).cwiseMax(T(0));
    Matrix<T> h2 = affine(mlp_hidden_, h1).cwiseMax(T(0));
    Matrix<T> out = affine(output_, h2);
    if (cache != nullptr) {
      cache->mlp_hidden1 = std::move(h1);
      cache->mlp_hidden2 = std::move(h2);
    }
    return out;
  }

  Matrix<T> h = affine(input_, x);
  layer_norm_forward<T>(h, gain(input_norm_), shift(input_norm_),
                        cache ? &cache->input_norm : nullptr);
  h = h.cwiseMax(T(0));
  if (cache != nullptr) {
    cache->hiddens.assign(1, h);
    cache->first_norms.resize(blocks_.size());
    cache->first_acts.resize(blocks_.size());
    cache->second_norms.resize(blocks_.size());
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& block = blocks_[b];
    Matrix<T> z = affine(block.first, h);
    layer_norm_forward<T>(z, gain(block.first_norm), shift(block.first_norm),
                          cache ? &cache->first_norms[b] : nullptr);
    z = z.cwiseMax(T(0));
    Matrix<T> z2 = affine(block.second, z);
    layer_norm_forward<T>(z2, gain(block.second_norm), shift(block.second_norm),
                          cache ? &cache->second_norms[b] : nullptr);
    h += z2;
    if (cache != nullptr) {
      cache->first_acts[b] = std::move(z);
      cache->hiddens.push_back(h);
    }
  }
  return affine(output_, h);
}

template <class T>
void BroNet<T>::backward(const BroNetParams<T>& params, const ForwardCache<T>& cache,
                         const Matrix<T>& grad_out, Vector<T>* grad_params,
                         Matrix<T>* grad_input) const {
  check(params);
  require_shape(grad_out.rows() == config_.output_dim && grad_out.cols() == cache.input.cols(),
                "grad_out shape does not match the cached forward pass");
  const T* p = params.values.data();
  T* g = nullptr;
  if (grad_params != nullptr) {
    grad_params->setZero(total_);
    g = grad_params->data();
  }
  auto weight = [p](const Dense& d) {
    return Eigen::Map<const Matrix<T>>(p + d.weight, d.rows, d.cols);
  };
  auto gain = [p](const Norm& n) { return Eigen::Map<const Vector<T>>(p + n.gain, n.dim); };
  // Accumulates dense gradients for z = W in + b given dL/dz.
  auto dense_grads = [&](const Dense& d, const Matrix<T>& grad_z, const Matrix<T>& in) {
    if (g == nullptr) return;
    Eigen::Map<Matrix<T>>(g + d.weight, d.rows, d.cols).noalias() = grad_z * in.transpose();
    Eigen::Map<Vector<T>>(g + d.bias, d.rows) = grad_z.rowwise().sum();
  };
  auto norm_grads = [&](const Norm& n, const Matrix<T>& grad_y, const NormCache<T>& nc) {
    return layer_norm_backward<T>(grad_y, gain(n), nc, g ? g + n.gain : nullptr,
                                  g ? g + n.bias : nullptr);
  };

  if (config_.architecture == Architecture::vanilla_mlp) {
    dense_grads(output_, grad_out, cache.mlp_hidden2);
    Matrix<T> grad = weight(output_).transpose() * grad_out;
    grad.array() *= (cache.mlp_hidden2.array() > T(0)).template cast<T>();
    dense_grads(mlp_hidden_, grad, cache.mlp_hidden1);
    grad = weight(mlp_hidden_).transpose() * grad;
    grad.array() *= (cache.mlp_hidden1.array() > T(0)).template cast<T>();
    dense_grads(input_, grad, cache.input);
    if (grad_input != nullptr) *grad_input = weight(input_).transpose() * grad;
    return;
  }

  dense_grads(output_, grad_out, cache.hiddens.back());
  Matrix<T> grad_h = weight(output_).transpose() * grad_out;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const Block& block = blocks_[i];
    Matrix<T> grad_z2 = norm_grads(block.second_norm, grad_h, cache.second_norms[i]);
    dense_grads(block.second, grad_z2, cache.first_acts[i]);
    Matrix<T> grad_a = weight(block.second).transpose() * grad_z2;
    grad_a.array() *= (cache.first_acts[i].array() > T(0)).template cast<T>();
    Matrix<T> grad_z1 = norm_grads(block.first_norm, grad_a, cache.first_norms[i]);
    dense_grads(block.first, grad_z1, cache.hiddens[i]);
    grad_h.noalias() += weight(block.first).transpose() * grad_z1;
  }
  grad_h.array() *= (cache.hiddens.front().array() > T(0)).template cast<T>();
  Matrix<T> grad_z = norm_grads(input_norm_, grad_h, cache.input_norm);
  dense_grads(input_, grad_z, cache.input);
  if (grad_input != nullptr) *grad_input = weight(input_).transpose() * grad_z;
}

template Vector<float> weight_decay_mask<float>(const BroNetConfig&);
template Vector<double> weight_decay_mask<double>(const BroNetConfig&);
template BroNetParams<float> init_bronet<float>(const BroNetConfig&, Rng&);
template BroNetParams<double> init_bronet<double>(const BroNetConfig&, Rng&);
template BroNetParams<float> reinitialize<float>(const BroNetParams<float>&, Rng&);
template BroNetParams<double> reinitialize<double>(const BroNetParams<double>&, Rng&);
template class BroNet<float>;
template class BroNet<double>;

}  // namespace bro
