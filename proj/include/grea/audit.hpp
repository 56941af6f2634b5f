#pragma once

#include <cstdint>

#include "grea/rationale.hpp"
#include "grea/trainer.hpp"

namespace grea {

struct GradientAudit {
  GradCheckResult sep;  // L_sep over every model parameter
  GradCheckResult pred;  // L_pred over every model parameter

  double max_relative_error() const { return std::max(sep.max_relative_error, pred.max_relative_error); }
};

/// Finite-difference audit of both training objectives on one batch.
/// Leaves every parameter with gradients enabled and zeroed.
GradientAudit audit_gradients(const Model& model, const GraphBatch& batch, const AugConfig& aug, double eps = 1e-5);

/// Hidden width used by the audit unless the full configured width is asked for.
inline constexpr std::size_t kAuditWidth = 16;

/// Copy of `config` with both hidden widths capped at kAuditWidth.
TrainConfig audit_config(TrainConfig config);

/// Small random labeled batch of `num_graphs` planted-motif graphs.
GraphBatch audit_batch(std::size_t num_graphs, std::size_t feature_dim, std::uint64_t seed);

}  // namespace grea
