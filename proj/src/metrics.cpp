#include "grea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "grea/errors.hpp"

namespace grea {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* name) {
  if (a.size() != b.size()) throw ShapeError(std::string(name) + ": inputs differ in length");
  if (a.empty()) throw UndefinedMetricError(std::string(name) + ": no examples");
}

}  // namespace

std::string MetricsRecord::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (auc) j["auc"] = *auc;
  if (r2) j["r2"] = *r2;
  if (rmse) j["rmse"] = *rmse;
  if (rationale_precision) j["rationale_precision"] = *rationale_precision;
  if (rationale_recall) j["rationale_recall"] = *rationale_recall;
  if (rationale_size) j["rationale_size"] = *rationale_size;
  j["n_examples"] = n_examples;
  return j.dump();
}

double r2(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "r2");
  const double mu = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
    ss_tot += (target[i] - mu) * (target[i] - mu);
  }
  if (ss_tot == 0.0) throw UndefinedMetricError("r2 is undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target, "rmse");
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) total += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(total / static_cast<double>(target.size()));
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  check_pair(scores, labels, "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney U from average ranks; tied scores share their mean rank.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] > 0.5) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("roc_auc needs both classes");
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, values.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  order.resize(k);
  return order;
}

PrecisionRecall rationale_score(std::span<const double> mask, std::span<const std::size_t> truth,
                                RationaleSelect mode, double threshold) {
  if (truth.empty()) throw UndefinedMetricError("rationale_score needs a non-empty ground truth");
  std::vector<bool> is_truth(mask.size(), false);
  for (auto v : truth) {
    if (v >= mask.size()) throw IndexError("rationale node " + std::to_string(v) + " outside mask");
    is_truth[v] = true;
  }
  std::vector<std::size_t> selected;
  if (mode == RationaleSelect::TopK) {
    selected = top_k(mask, truth.size());
  } else {
    for (std::size_t v = 0; v < mask.size(); ++v) {
      if (mask[v] > threshold) selected.push_back(v);
    }
  }
  std::size_t hits = 0;
  for (auto v : selected) hits += is_truth[v] ? 1 : 0;
  PrecisionRecall pr;
  pr.precision = selected.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(selected.size());
  pr.recall = static_cast<double>(hits) / static_cast<double>(truth.size());
  return pr;
}

}  // namespace grea
