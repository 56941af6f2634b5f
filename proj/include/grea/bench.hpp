#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grea/graph.hpp"
#include "grea/rationale.hpp"

namespace grea {

/// Explicit counterpart of one environment-replacement cell: encodes the
/// disconnected union of g_i and g_j with the predictor GNN, then pools with
/// weights mask_i on g_i's nodes and 1 - mask_j on g_j's nodes. Returns [1 x d].
Tensor explicit_pair_rep(const Graph& gi, const Graph& gj, std::span<const double> mask_i,
                         std::span<const double> mask_j, const EncoderConfig& config, const EncoderParams& params);

/// Latent sum-aggregated pair grid for a batch, given per-node masks.
Tensor latent_pair_grid(const GraphBatch& batch, std::span<const double> mask, const EncoderConfig& config,
                        const EncoderParams& params);

/// Explicit grid, row-major over (i, j), built from B*B union encodings.
Tensor explicit_pair_grid(std::span<const Graph> graphs, std::span<const std::size_t> members,
                          std::span<const double> mask, const GraphBatch& batch, const EncoderConfig& config,
                          const EncoderParams& params);

struct BenchRow {
  std::size_t batch_size = 0;
  double t_latent_ms = 0.0;
  double t_explicit_ms = 0.0;
  double max_abs_dev = 0.0;
  double speedup = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  /// Header "B,t_latent_ms,t_explicit_ms,max_abs_dev,speedup", one row per B.
  std::string to_csv() const;
};

struct BenchOptions {
  std::vector<std::size_t> batch_sizes{8, 32, 128};
  std::size_t reps = 3;
  std::uint64_t seed = 0;
};

/// Times the latent path (one batched encode plus B*B vector sums) against
/// the explicit path (B*B union re-encodings) on the first B graphs of a
/// seeded shuffle, reporting median times and the largest deviation between
/// the two grids. Masks come from the model's separator and are shared.
BenchReport run_bench(std::span<const Graph> graphs, const Model& model, const BenchOptions& options);

}  // namespace grea
