#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grea/graph.hpp"
#include "grea/metrics.hpp"
#include "grea/rationale.hpp"

namespace grea {

struct TrainConfig {
  double alpha = 5.0;
  double beta = 1.0;
  double gamma = 0.3;
  Aggregation agg = Aggregation::Sum;
  std::size_t t_sep = 1;
  std::size_t t_pred = 2;
  std::size_t num_rounds = 40;
  /// Rounds without validation improvement before stopping; 0 disables.
  std::size_t patience = 10;
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t sep_dim = 64;
  std::size_t pred_dim = 64;
  std::size_t sep_layers = 2;
  std::size_t pred_layers = 2;
  EncoderKind encoder = EncoderKind::GIN;
  /// Separator encoder kind; defaults to `encoder`.
  std::optional<EncoderKind> sep_encoder;
  Task task = Task::Binary;
  std::uint64_t seed = 0;
  bool include_diagonal = true;
  double mask_threshold = 0.5;
  /// Degenerate baseline: constant all-ones mask, no separator phases.
  bool freeze_mask_full = false;
  SplitRatios ratios{};

  void validate() const;
  AugConfig aug() const;
  ModelConfig model_config(std::size_t feature_dim) const;
};

/// Strict conversion; unknown keys raise ConfigError. Missing keys keep defaults.
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// ---------------------------------------------------------------- optimizer

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using each parameter's current gradient.
/// Parameters without a populated gradient are treated as having zero gradient.
void adam_step(std::span<Tensor> params, OptimizerState& state, double learning_rate);

// ---------------------------------------------------------------- training

enum class Phase { Separator, Predictor };
std::string to_string(Phase p);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t round = 0;
  Phase phase = Phase::Predictor;
  double l_rem = 0.0;
  double l_rep = 0.0;
  double l_reg = 0.0;
  double loss = 0.0;  // the objective minimized in this phase
  double valid_metric = 0.0;
  double rationale_size = 0.0;
  double wall_ms = 0.0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::string metric_name;  // "auc", "neg_bce" or "rmse"
  bool higher_is_better = true;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;

  /// Wall times are left out unless asked for, so equal runs give equal JSON.
  nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainResult {
  Model model;
  RunHistory history;
};

/// Called after every epoch with the record just appended and the live model.
using EpochObserver = std::function<void(const EpochRecord&, const Model&)>;

/// Alternates separator phases (L_sep, predictor frozen) and predictor phases
/// (L_pred, separator frozen) for num_rounds, keeping the checkpoint with the
/// best validation metric. A tie goes to the later epoch, since the mask keeps
/// sharpening after the metric saturates, and also resets the patience count.
/// Throws NumericalError on a non-finite loss.

TrainResult train(std::span<const Graph> graphs, const DatasetSplit& split, const TrainConfig& config,
                  const EpochObserver& observer = {});

struct GraphPrediction {
  std::size_t graph_index = 0;
  double pred = 0.0;  // logit or value
  std::vector<double> mask;
};

/// Rationale-only inference, no augmentation, no gradients.
std::vector<GraphPrediction> run_inference(const Model& model, std::span<const Graph> graphs,
                                           std::span<const std::size_t> indices, const AugConfig& aug,
                                           std::size_t batch_size = 128);

/// Task metrics plus rationale top-k precision/recall (graphs with ground
/// truth only) and mean rationale-size fraction. Throws on an empty split.
MetricsRecord evaluate(const Model& model, std::span<const Graph> graphs, std::span<const std::size_t> indices,
                       const AugConfig& aug);

// ---------------------------------------------------------------- checkpoints

inline constexpr const char* kCheckpointFormat = "GREA-CKPT-1";

struct Checkpoint {
  Model model;
  TrainConfig config;
  std::size_t feature_dim = 0;
};

std::string checkpoint_to_string(const Model& model, const TrainConfig& config, std::size_t feature_dim);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& config,
                     std::size_t feature_dim);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace grea
