#include "grea/rationale.hpp"

#include <random>

namespace grea {

std::string to_string(Task t) { return t == Task::Binary ? "binary" : "regression"; }

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Sum: return "sum";
    case Aggregation::Mean: return "mean";
    case Aggregation::Max: return "max";
    case Aggregation::Concat: return "concat";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "binary") return Task::Binary;
  if (s == "regression") return Task::Regression;
  throw ConfigError("unknown task '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum") return Aggregation::Sum;
  if (s == "mean") return Aggregation::Mean;
  if (s == "max") return Aggregation::Max;
  if (s == "concat") return Aggregation::Concat;
  throw ConfigError("unknown aggregation '" + s + "'");
}

void AugConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) throw ConfigError("mask_threshold must lie in [0, 1)");
}

// ---------------------------------------------------------------- model

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Model model{config, {}, {}};
  const std::size_t d1 = config.separator_encoder.hidden_dim;
  const std::size_t d2 = config.predictor_encoder.hidden_dim;
  model.separator.gnn = EncoderParams::init(config.separator_encoder, rng);
  model.separator.head = Mlp::init(d1, d1, 1, rng);
  model.predictor.gnn = EncoderParams::init(config.predictor_encoder, rng);
  model.predictor.head = Mlp::init(d2, d2, 1, rng);
  if (config.concat_head) model.predictor.pair_head = Mlp::init(2 * d2, d2, 1, rng);
  return model;
}

ParamList Model::separator_params() const {
  ParamList out;
  separator.gnn.collect("separator.gnn", out);
  separator.head.collect("separator.head", out);
  return out;
}

ParamList Model::predictor_params() const {
  ParamList out;
  predictor.gnn.collect("predictor.gnn", out);
  predictor.head.collect("predictor.head", out);
  if (predictor.pair_head) predictor.pair_head->collect("predictor.pair_head", out);
  return out;
}

ParamList Model::all_params() const {
  ParamList out = separator_params();
  ParamList pred = predictor_params();
  out.insert(out.end(), pred.begin(), pred.end());
  return out;
}

namespace {

Linear clone(const Linear& l) { return {l.weight.clone(), l.bias.clone()}; }
Mlp clone(const Mlp& m) { return {clone(m.first), clone(m.second)}; }

EncoderParams clone(const EncoderParams& e) {
  EncoderParams out;
  out.input = clone(e.input);
  for (const auto& w : e.gcn_weights) out.gcn_weights.push_back(w.clone());
  for (const auto& m : e.gin_mlps) out.gin_mlps.push_back(clone(m));
  return out;
}

}  // namespace

Model Model::clone() const {
  Model out{config, {grea::clone(separator.gnn), grea::clone(separator.head)},
            {grea::clone(predictor.gnn), grea::clone(predictor.head), std::nullopt}};
  if (predictor.pair_head) out.predictor.pair_head = grea::clone(*predictor.pair_head);
  return out;
}

// ---------------------------------------------------------------- separation

RationaleMask compute_mask(const GraphBatch& batch, const EncoderConfig& config, const Separator& separator) {
  Tensor h = encode(batch, config, separator.gnn);
  return {sigmoid(predict(h, separator.head)), batch.segments, batch.num_graphs};
}

SeparatedReps separate(const Tensor& node_reps, const RationaleMask& mask) {
  if (mask.m.rows() != node_reps.rows()) {
    throw ShapeError("separate: mask has " + std::to_string(mask.m.rows()) + " entries for " +
                     std::to_string(node_reps.rows()) + " node rows");
  }
  return {segment_sum(mask.m * node_reps, mask.segments, mask.num_graphs),
          segment_sum(one_minus(mask.m) * node_reps, mask.segments, mask.num_graphs)};
}

PairGrid env_replace(const SeparatedReps& reps, Aggregation agg, bool include_diagonal) {
  const std::size_t b = reps.rationale.rows();
  if (b < 1) throw ConfigError("env_replace needs at least one graph");
  if (reps.environment.shape() != reps.rationale.shape()) {
    throw ShapeError("env_replace: rationale " + shape_string(reps.rationale.shape()) + " vs environment " +
                     shape_string(reps.environment.shape()));
  }
  PairGrid grid;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j && !include_diagonal) continue;
      grid.anchor.push_back(i);
      grid.donor.push_back(j);
    }
  }
  if (grid.anchor.empty()) throw ConfigError("env_replace without the diagonal needs at least two graphs");
  Tensor r = gather_rows(reps.rationale, grid.anchor);
  Tensor e = gather_rows(reps.environment, grid.donor);
  switch (agg) {
    case Aggregation::Sum: grid.reps = r + e; break;
    case Aggregation::Mean: grid.reps = scale(r + e, 0.5); break;
    case Aggregation::Max: grid.reps = maximum(r, e); break;
    case Aggregation::Concat: grid.reps = hconcat(r, e); break;
  }
  return grid;
}

Tensor predict(const Tensor& h, const Mlp& head) {
  if (h.shape().size() != 2 || h.cols() != head.in_features()) {
    throw ConfigError("predictor head expects width " + std::to_string(head.in_features()) + " but got " +
                      shape_string(h.shape()) + "; check that the aggregation matches the predictor head");
  }
  return head(h);
}

// ---------------------------------------------------------------- losses

Tensor task_loss(const Tensor& pred, const Tensor& target, Task task) {
  return task == Task::Binary ? bce_with_logits(pred, target) : mse(pred, target);
}

namespace {

void check_labels(std::span<const double> labels, Task task) {
  if (task != Task::Binary) return;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw ConfigError("binary task needs 0/1 labels, got " + std::to_string(y));
  }
}

}  // namespace

Tensor loss_rem(const Tensor& pred, std::span<const double> labels, Task task) {
  if (pred.numel() != labels.size()) {
    throw ShapeError("loss_rem: " + std::to_string(pred.numel()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  check_labels(labels, task);
  const std::size_t n = labels.size();
  return task_loss(pred, Tensor({n, 1}, {labels.begin(), labels.end()}), task);
}

Tensor loss_rep(const Tensor& pair_pred, const PairGrid& grid, std::span<const double> labels, Task task) {
  if (pair_pred.numel() != grid.anchor.size()) {
    throw ShapeError("loss_rep: " + std::to_string(pair_pred.numel()) + " predictions for " +
                     std::to_string(grid.anchor.size()) + " pairs");
  }
  check_labels(labels, task);
  // Every anchor owns the same number of pairs, so the mean over anchors of
  // per-anchor means is the plain mean over all pairs.
  std::vector<double> target;
  target.reserve(grid.anchor.size());
  for (auto i : grid.anchor) {
    if (i >= labels.size()) throw IndexError("loss_rep: anchor outside label range");
    target.push_back(labels[i]);
  }
  const std::size_t n = target.size();
  return task_loss(pair_pred, Tensor({n, 1}, std::move(target)), task);
}

RegLoss loss_reg(const RationaleMask& mask, double gamma, double threshold) {
  const std::size_t b = mask.num_graphs;
  std::vector<double> count(b, 0.0), size(b, 0.0);
  auto m = mask.m.values();
  for (std::size_t v = 0; v < mask.segments.size(); ++v) {
    size[mask.segments[v]] += 1.0;
    note_branch(m[v] > threshold);
    if (m[v] > threshold) count[mask.segments[v]] += 1.0;
  }
  double fraction = 0.0;
  for (std::size_t g = 0; g < b; ++g) fraction += size[g] > 0 ? count[g] / size[g] : 0.0;
  fraction /= static_cast<double>(b);

  Tensor mean_mask = mean(segment_mean(mask.m, mask.segments, b));
  return {add_scalar(mean_mask, fraction - 2.0 * gamma), fraction};
}

Tensor loss_pred(const Tensor& rem, const Tensor& rep, double alpha) { return rem + scale(rep, alpha); }

Tensor loss_sep(const Tensor& rem, const Tensor& rep, const Tensor& reg, double alpha, double beta) {
  return loss_pred(rem, rep, alpha) + scale(reg, beta);
}

// ---------------------------------------------------------------- forward

namespace {

RationaleMask mask_for(const Model& model, const GraphBatch& batch, const AugConfig& aug) {
  if (aug.freeze_mask_full) return {Tensor::full({batch.num_nodes(), 1}, 1.0), batch.segments, batch.num_graphs};
  return compute_mask(batch, model.config.separator_encoder, model.separator);
}

}  // namespace

ForwardOutput forward(const Model& model, const GraphBatch& batch, const AugConfig& aug) {
  if (!batch.labeled()) throw ConfigError("training forward pass needs a labeled batch");
  ForwardOutput out;
  out.mask = mask_for(model, batch, aug);
  out.node_reps = encode(batch, model.config.predictor_encoder, model.predictor.gnn);
  out.reps = separate(out.node_reps, out.mask);
  out.rem_pred = predict(out.reps.rationale, model.predictor.head);
  out.l_rem = loss_rem(out.rem_pred, batch.labels, model.config.task);

  const bool diagonal = aug.include_diagonal || batch.num_graphs < 2;
  out.grid = env_replace(out.reps, aug.agg, diagonal);
  if (aug.agg == Aggregation::Concat) {
    if (!model.predictor.pair_head) throw ConfigError("concat aggregation needs the 2d-wide predictor head");
    out.pair_pred = predict(out.grid.reps, *model.predictor.pair_head);
  } else {
    out.pair_pred = predict(out.grid.reps, model.predictor.head);
  }
  out.l_rep = loss_rep(out.pair_pred, out.grid, batch.labels, model.config.task);
  out.l_reg = loss_reg(out.mask, aug.gamma, aug.mask_threshold);
  out.l_pred = loss_pred(out.l_rem, out.l_rep, aug.alpha);
  out.l_sep = loss_sep(out.l_rem, out.l_rep, out.l_reg.value, aug.alpha, aug.beta);
  return out;
}

Inference infer(const Model& model, const GraphBatch& batch, const AugConfig& aug) {
  Inference out;
  out.mask = mask_for(model, batch, aug);
  Tensor h = encode(batch, model.config.predictor_encoder, model.predictor.gnn);
  out.pred = predict(separate(h, out.mask).rationale, model.predictor.head);
  return out;
}

}  // namespace grea
