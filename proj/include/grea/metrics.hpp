#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grea {

struct MetricsRecord {
  std::optional<double> auc;
  std::optional<double> r2;
  std::optional<double> rmse;
  std::optional<double> rationale_precision;
  std::optional<double> rationale_recall;
  /// Mean fraction of nodes whose mask exceeds the threshold.
  std::optional<double> rationale_size;
  std::size_t n_examples = 0;

  std::string to_json() const;
};

/// 1 - SS_res / SS_tot. Throws UndefinedMetricError for constant targets.
double r2(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);

/// P(score+ > score-) + 0.5 P(tie), via average ranks. Labels are 0/1;
/// throws UndefinedMetricError when only one class is present.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

enum class RationaleSelect { Threshold, TopK };

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// Threshold mode selects m > threshold; top-k selects the |truth| largest
/// entries, ties broken by lower node index. Empty selections score precision 0.
PrecisionRecall rationale_score(std::span<const double> mask, std::span<const std::size_t> truth,
                                RationaleSelect mode, double threshold = 0.5);

/// Indices of the k largest entries, ties broken by lower index.
std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k);

}  // namespace grea
