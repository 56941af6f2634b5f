#pragma once

// Rationale/environment separation in latent space and the environment
// removal/replacement augmentations with their losses.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grea/gnn.hpp"
#include "grea/graph.hpp"
#include "grea/layers.hpp"

namespace grea {

enum class Task { Binary, Regression };
enum class Aggregation { Sum, Mean, Max, Concat };

std::string to_string(Task t);
std::string to_string(Aggregation a);
Task task_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

/// Per-node rationale probabilities, one [num_nodes x 1] column.
struct RationaleMask {
  Tensor m;
  std::vector<std::size_t> segments;
  std::size_t num_graphs = 0;
};

/// Mask-weighted sum pooling: rationale[i] = sum m_v h_v, environment[i] =
/// sum (1 - m_v) h_v over the nodes of graph i.
struct SeparatedReps {
  Tensor rationale;  // B x d
  Tensor environment;  // B x d
};

/// Pair representations from environment replacement. Row k combines the
/// rationale of graph anchor[k] with the environment of graph donor[k].
struct PairGrid {
  Tensor reps;
  std::vector<std::size_t> anchor;
  std::vector<std::size_t> donor;
};

struct AugConfig {
  Aggregation agg = Aggregation::Sum;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.3;
  double mask_threshold = 0.5;
  /// Pair each rationale with its own environment too (j = i).
  bool include_diagonal = true;
  /// Replace the separator by a constant all-ones mask.
  bool freeze_mask_full = false;

  void validate() const;
};

struct ModelConfig {
  EncoderConfig separator_encoder;
  EncoderConfig predictor_encoder;
  Task task = Task::Binary;
  /// Adds the separate 2d-wide predictor head used by concat aggregation.
  bool concat_head = false;
};

struct Separator {
  EncoderParams gnn;
  Mlp head;  // d1 -> d1 -> 1
};

struct Predictor {
  EncoderParams gnn;
  Mlp head;  // d2 -> d2 -> 1, used for removal and inference
  std::optional<Mlp> pair_head;  // 2*d2 -> d2 -> 1, concat replacement only
};

struct Model {
  ModelConfig config;
  Separator separator;
  Predictor predictor;

  static Model init(const ModelConfig& config, std::uint64_t seed);

  ParamList separator_params() const;
  ParamList predictor_params() const;
  ParamList all_params() const;
  /// Deep copy; parameters no longer share storage with this model.
  Model clone() const;
};

RationaleMask compute_mask(const GraphBatch& batch, const EncoderConfig& config, const Separator& separator);

SeparatedReps separate(const Tensor& node_reps, const RationaleMask& mask);

/// All B*B pairs (or B*(B-1) without the diagonal) in row-major (i, j) order.
PairGrid env_replace(const SeparatedReps& reps, Aggregation agg, bool include_diagonal = true);

/// Row-wise MLP producing [rows x 1] logits (binary) or values (regression).
/// Throws ConfigError when the width of `h` does not match the head.
Tensor predict(const Tensor& h, const Mlp& head);

Tensor task_loss(const Tensor& pred, const Tensor& target, Task task);

/// Removal loss on the rationale-only predictions.
Tensor loss_rem(const Tensor& pred, std::span<const double> labels, Task task);

/// Replacement loss: for each anchor i, the mean over its pairs of
/// loss(pred(i, j), y_i), then the mean over anchors.
Tensor loss_rep(const Tensor& pair_pred, const PairGrid& grid, std::span<const double> labels, Task task);

struct RegLoss {
  Tensor value;  // differentiable mean-size term plus the detached count term
  double size_fraction = 0.0;  // mean fraction of nodes with m > threshold
};

/// Per graph: (mean(m) - gamma) + (fraction of m above threshold - gamma),
/// averaged over graphs. The count term carries no gradient.
RegLoss loss_reg(const RationaleMask& mask, double gamma, double threshold);

Tensor loss_pred(const Tensor& rem, const Tensor& rep, double alpha);
Tensor loss_sep(const Tensor& rem, const Tensor& rep, const Tensor& reg, double alpha, double beta);

struct ForwardOutput {
  RationaleMask mask;
  Tensor node_reps;
  SeparatedReps reps;
  Tensor rem_pred;
  PairGrid grid;
  Tensor pair_pred;
  Tensor l_rem;
  Tensor l_rep;
  RegLoss l_reg;
  Tensor l_pred;
  Tensor l_sep;
};

/// Full training forward pass on a labeled batch.
ForwardOutput forward(const Model& model, const GraphBatch& batch, const AugConfig& aug);

/// Inference path: rationale-only predictions, [B x 1], plus the mask.
struct Inference {
  RationaleMask mask;
  Tensor pred;
};
Inference infer(const Model& model, const GraphBatch& batch, const AugConfig& aug);

}  // namespace grea
