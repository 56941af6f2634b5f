#pragma once

#include <random>
#include <string>
#include <vector>

#include "grea/graph.hpp"
#include "grea/layers.hpp"
#include "grea/tensor.hpp"

namespace grea {

enum class EncoderKind { GCN, GIN };

std::string to_string(EncoderKind k);
EncoderKind encoder_kind_from_string(const std::string& s);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::GIN;
  std::size_t input_dim = 1;
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 32;

  void validate() const;
};

struct EncoderParams {
  Linear input;  // feature width -> hidden
  std::vector<Tensor> gcn_weights;  // GCN: one [d x d] per layer
  std::vector<Mlp> gin_mlps;  // GIN: one two-layer MLP per layer

  static EncoderParams init(const EncoderConfig& config, std::mt19937_64& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// D^-1/2 (A + I) D^-1/2 over the batch, degrees counted with the self-loop.
SparseMatrix gcn_operator(const GraphBatch& batch);
/// (1 + eps) I + A.
SparseMatrix gin_operator(const GraphBatch& batch, double eps = 0.0);

/// relu(A_hat * h * weight); `activate = false` returns the pre-activation
/// (used for the final layer).
Tensor gcn_layer(const GraphBatch& batch, const Tensor& h, const Tensor& weight, bool activate = true);
Tensor gcn_layer(const SparseMatrix& a_hat, const Tensor& h, const Tensor& weight, bool activate = true);

/// mlp(h_v + sum of neighbour rows), i.e. GIN with eps fixed at 0.
Tensor gin_layer(const GraphBatch& batch, const Tensor& h, const Mlp& mlp);
Tensor gin_layer(const SparseMatrix& propagate, const Tensor& h, const Mlp& mlp);

/// Input projection followed by `num_layers` message-passing layers, relu
/// between layers and none after the last. Returns [num_nodes x hidden_dim].
Tensor encode(const GraphBatch& batch, const EncoderConfig& config, const EncoderParams& params);

enum class ReadoutMode { Sum, Mean, Max };

Tensor readout(const Tensor& h, std::span<const std::size_t> segments, std::size_t num_graphs, ReadoutMode mode);

}  // namespace grea
