#include "grea/gnn.hpp"

#include <cmath>

namespace grea {

std::string to_string(EncoderKind k) { return k == EncoderKind::GCN ? "gcn" : "gin"; }

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "gcn" || s == "GCN") return EncoderKind::GCN;
  if (s == "gin" || s == "GIN") return EncoderKind::GIN;
  throw ConfigError("unknown encoder kind '" + s + "'");
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder needs at least one layer");
  if (hidden_dim < 1) throw ConfigError("encoder hidden_dim must be positive");
  if (input_dim < 1) throw ConfigError("encoder input_dim must be positive");
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  EncoderParams p;
  const std::size_t d = config.hidden_dim;
  p.input = Linear::init(config.input_dim, d, rng);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    if (config.kind == EncoderKind::GCN) {
      p.gcn_weights.push_back(glorot_uniform(d, d, rng));
    } else {
      p.gin_mlps.push_back(Mlp::init(d, d, d, rng));
    }
  }
  return p;
}

void EncoderParams::collect(const std::string& prefix, ParamList& out) const {
  input.collect(prefix + ".input", out);
  for (std::size_t l = 0; l < gcn_weights.size(); ++l) {
    out.push_back({prefix + ".gcn" + std::to_string(l) + ".weight", gcn_weights[l]});
  }
  for (std::size_t l = 0; l < gin_mlps.size(); ++l) gin_mlps[l].collect(prefix + ".gin" + std::to_string(l), out);
}

SparseMatrix gcn_operator(const GraphBatch& batch) {
  const std::size_t n = batch.num_nodes();
  std::vector<double> degree(n, 1.0);
  for (const auto& [u, v] : batch.edges) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);

  SparseMatrix s;
  s.rows = s.cols = n;
  for (std::size_t i = 0; i < n; ++i) s.add(i, i, inv_sqrt[i] * inv_sqrt[i]);
  for (const auto& [u, v] : batch.edges) {
    const double w = inv_sqrt[u] * inv_sqrt[v];
    s.add(u, v, w);
    s.add(v, u, w);
  }
  return s;
}

SparseMatrix gin_operator(const GraphBatch& batch, double eps) {
  const std::size_t n = batch.num_nodes();
  SparseMatrix s;
  s.rows = s.cols = n;
  for (std::size_t i = 0; i < n; ++i) s.add(i, i, 1.0 + eps);
  for (const auto& [u, v] : batch.edges) {
    s.add(u, v, 1.0);
    s.add(v, u, 1.0);
  }
  return s;
}

Tensor gcn_layer(const SparseMatrix& a_hat, const Tensor& h, const Tensor& weight, bool activate) {
  if (h.rows() != a_hat.rows) {
    throw ShapeError("gcn_layer: " + std::to_string(h.rows()) + " feature rows for " + std::to_string(a_hat.rows) +
                     " nodes");
  }
  Tensor pre = sparse_matmul(a_hat, matmul(h, weight));
  return activate ? relu(pre) : pre;
}

Tensor gcn_layer(const GraphBatch& batch, const Tensor& h, const Tensor& weight, bool activate) {
  return gcn_layer(gcn_operator(batch), h, weight, activate);
}

Tensor gin_layer(const SparseMatrix& propagate, const Tensor& h, const Mlp& mlp) {
  if (h.rows() != propagate.rows) {
    throw ShapeError("gin_layer: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(propagate.rows) + " nodes");
  }
  return mlp(sparse_matmul(propagate, h));
}

Tensor gin_layer(const GraphBatch& batch, const Tensor& h, const Mlp& mlp) {
  return gin_layer(gin_operator(batch), h, mlp);
}

Tensor encode(const GraphBatch& batch, const EncoderConfig& config, const EncoderParams& params) {
  if (batch.features.cols() != config.input_dim) {
    throw ShapeError("encode: batch has feature width " + std::to_string(batch.features.cols()) +
                     ", encoder expects " + std::to_string(config.input_dim));
  }
  Tensor h = params.input(batch.features);
  const bool gcn = config.kind == EncoderKind::GCN;
  const SparseMatrix op = gcn ? gcn_operator(batch) : gin_operator(batch);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const bool last = l + 1 == config.num_layers;
    if (gcn) {
      h = gcn_layer(op, h, params.gcn_weights.at(l), !last);
    } else {
      h = gin_layer(op, h, params.gin_mlps.at(l));
      if (!last) h = relu(h);
    }
  }
  return h;
}

Tensor readout(const Tensor& h, std::span<const std::size_t> segments, std::size_t num_graphs, ReadoutMode mode) {
  switch (mode) {
    case ReadoutMode::Sum: return segment_sum(h, segments, num_graphs);
    case ReadoutMode::Mean: return segment_mean(h, segments, num_graphs);
    case ReadoutMode::Max: return segment_max(h, segments, num_graphs);
  }
  throw ConfigError("unknown readout mode");
}

}  // namespace grea
