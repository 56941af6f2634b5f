#pragma once

#include <random>
#include <string>
#include <vector>

#include "grea/tensor.hpp"

namespace grea {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// Glorot-uniform matrix in [-sqrt(6/(in+out)), +sqrt(6/(in+out))].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Affine map x * weight + bias, weight stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Two affine layers with relu between them.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);

  std::size_t in_features() const { return first.in_features(); }
  Tensor operator()(const Tensor& x) const { return second(relu(first(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

void set_requires_grad(const ParamList& params, bool enabled);
std::vector<Tensor> tensors_of(const ParamList& params);

}  // namespace grea
