#include "grea/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace grea {

using nlohmann::json;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  aug().validate();
  if (t_sep < 1 || t_pred < 1) throw ConfigError("t_sep and t_pred must be at least 1");
  if (num_rounds < 1) throw ConfigError("num_rounds must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("training needs batch_size >= 2 for environment replacement");
  if (sep_dim < 1 || pred_dim < 1) throw ConfigError("hidden dims must be positive");
  if (sep_layers < 1 || pred_layers < 1) throw ConfigError("encoders need at least one layer");
  const double total = ratios.train + ratios.valid + ratios.test;
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
}

AugConfig TrainConfig::aug() const {
  AugConfig a;
  a.agg = agg;
  a.alpha = alpha;
  a.beta = beta;
  a.gamma = gamma;
  a.mask_threshold = mask_threshold;
  a.include_diagonal = include_diagonal;
  a.freeze_mask_full = freeze_mask_full;
  return a;
}

ModelConfig TrainConfig::model_config(std::size_t feature_dim) const {
  ModelConfig m;
  m.separator_encoder = {sep_encoder.value_or(encoder), feature_dim, sep_layers, sep_dim};
  m.predictor_encoder = {encoder, feature_dim, pred_layers, pred_dim};
  m.task = task;
  m.concat_head = agg == Aggregation::Concat;
  return m;
}

json to_json(const TrainConfig& c) {
  json j;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["agg"] = to_string(c.agg);
  j["t_sep"] = c.t_sep;
  j["t_pred"] = c.t_pred;
  j["num_rounds"] = c.num_rounds;
  j["patience"] = c.patience;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["sep_dim"] = c.sep_dim;
  j["pred_dim"] = c.pred_dim;
  j["sep_layers"] = c.sep_layers;
  j["pred_layers"] = c.pred_layers;
  j["encoder"] = to_string(c.encoder);
  j["sep_encoder"] = c.sep_encoder ? json(to_string(*c.sep_encoder)) : json(nullptr);
  j["task"] = to_string(c.task);
  j["seed"] = c.seed;
  j["include_diagonal"] = c.include_diagonal;
  j["mask_threshold"] = c.mask_threshold;
  j["freeze_mask_full"] = c.freeze_mask_full;
  j["split"] = {c.ratios.train, c.ratios.valid, c.ratios.test};
  return j;
}

namespace {

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_unsigned()) throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "alpha") c.alpha = get_as<double>(v, key);
    else if (key == "beta") c.beta = get_as<double>(v, key);
    else if (key == "gamma") c.gamma = get_as<double>(v, key);
    else if (key == "agg") c.agg = aggregation_from_string(get_as<std::string>(v, key));
    else if (key == "t_sep") c.t_sep = get_count(v, key);
    else if (key == "t_pred") c.t_pred = get_count(v, key);
    else if (key == "num_rounds") c.num_rounds = get_count(v, key);
    else if (key == "patience") c.patience = get_count(v, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(v, key);
    else if (key == "batch_size") c.batch_size = get_count(v, key);
    else if (key == "sep_dim") c.sep_dim = get_count(v, key);
    else if (key == "pred_dim") c.pred_dim = get_count(v, key);
    else if (key == "sep_layers") c.sep_layers = get_count(v, key);
    else if (key == "pred_layers") c.pred_layers = get_count(v, key);
    else if (key == "encoder") c.encoder = encoder_kind_from_string(get_as<std::string>(v, key));
    else if (key == "sep_encoder") {
      if (v.is_null()) c.sep_encoder.reset();
      else c.sep_encoder = encoder_kind_from_string(get_as<std::string>(v, key));
    }
    else if (key == "task") c.task = task_from_string(get_as<std::string>(v, key));
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "include_diagonal") c.include_diagonal = get_as<bool>(v, key);
    else if (key == "mask_threshold") c.mask_threshold = get_as<double>(v, key);
    else if (key == "freeze_mask_full") c.freeze_mask_full = get_as<bool>(v, key);
    else if (key == "split") {
      auto r = get_as<std::vector<double>>(v, key);
      if (r.size() != 3) throw ConfigError("'split' must hold three ratios");
      c.ratios = {r[0], r[1], r[2]};
    } else {
      throw ConfigError("unknown training config key '" + key + "'");
    }
  }
  return c;
}

// ---------------------------------------------------------------- Adam

void adam_step(std::span<Tensor> params, OptimizerState& state, double learning_rate) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: optimizer state/parameter mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != params[p].numel()) throw ShapeError("adam_step: moment shape differs from parameter");
    const bool has = params[p].has_grad();
    auto g = has ? params[p].grad() : std::span<const double>();
    auto x = params[p].mutable_values();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      x[k] -= learning_rate * (m[k] / correct1) / (std::sqrt(v[k] / correct2) + state.eps);
    }
  }
}

// ---------------------------------------------------------------- inference

std::string to_string(Phase p) { return p == Phase::Separator ? "separator" : "predictor"; }

std::vector<GraphPrediction> run_inference(const Model& model, std::span<const Graph> graphs,
                                           std::span<const std::size_t> indices, const AugConfig& aug,
                                           std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<GraphPrediction> out;
  out.reserve(indices.size());
  for (const auto& batch : make_batches(graphs, indices, batch_size, std::nullopt)) {
    Inference inf = infer(model, batch, aug);
    auto m = inf.mask.m.values();
    for (std::size_t g = 0; g < batch.num_graphs; ++g) {
      GraphPrediction p;
      p.graph_index = batch.source_index[g];
      p.pred = inf.pred.values()[g];
      p.mask.assign(m.begin() + static_cast<std::ptrdiff_t>(batch.offsets[g]),
                    m.begin() + static_cast<std::ptrdiff_t>(batch.offsets[g + 1]));
      out.push_back(std::move(p));
    }
  }
  return out;
}

MetricsRecord evaluate(const Model& model, std::span<const Graph> graphs, std::span<const std::size_t> indices,
                       const AugConfig& aug) {
  if (indices.empty()) throw UndefinedMetricError("cannot evaluate an empty split");
  auto preds = run_inference(model, graphs, indices, aug);
  std::vector<double> scores, labels;
  double size_sum = 0.0, precision_sum = 0.0, recall_sum = 0.0;
  std::size_t with_truth = 0;
  for (const auto& p : preds) {
    const Graph& g = graphs[p.graph_index];
    if (!g.label) throw DataError("graph " + std::to_string(p.graph_index) + " has no label");
    scores.push_back(p.pred);
    labels.push_back(*g.label);
    std::size_t above = 0;
    for (double m : p.mask) above += m > aug.mask_threshold ? 1 : 0;
    size_sum += static_cast<double>(above) / static_cast<double>(p.mask.size());
    if (g.rationale_truth && !g.rationale_truth->empty()) {
      auto pr = rationale_score(p.mask, *g.rationale_truth, RationaleSelect::TopK);
      precision_sum += pr.precision;
      recall_sum += pr.recall;
      ++with_truth;
    }
  }
  MetricsRecord rec;
  rec.n_examples = preds.size();
  rec.rationale_size = size_sum / static_cast<double>(preds.size());
  if (with_truth > 0) {
    rec.rationale_precision = precision_sum / static_cast<double>(with_truth);
    rec.rationale_recall = recall_sum / static_cast<double>(with_truth);
  }
  if (model.config.task == Task::Binary) {
    rec.auc = roc_auc(scores, labels);
  } else {
    rec.rmse = rmse(scores, labels);
    try {
      rec.r2 = r2(scores, labels);
    } catch (const UndefinedMetricError&) {
    }
  }
  return rec;
}

// ---------------------------------------------------------------- training

json RunHistory::to_json(bool include_timing) const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    json r{{"epoch", e.epoch},   {"round", e.round},   {"phase", to_string(e.phase)},
           {"l_rem", e.l_rem},   {"l_rep", e.l_rep},   {"l_reg", e.l_reg},
           {"loss", e.loss},     {"valid_metric", e.valid_metric}, {"rationale_size", e.rationale_size}};
    if (include_timing) r["wall_ms"] = e.wall_ms;
    epochs_json.push_back(std::move(r));
  }
  return {{"metric", metric_name},
          {"higher_is_better", higher_is_better},
          {"best_epoch", best_epoch},
          {"best_metric", best_metric},
          {"epochs", std::move(epochs_json)}};
}

namespace {

// Selection metric on the validation split: AUC when both classes are
// present, otherwise the negated rationale-only BCE; RMSE for regression.
struct Validator {
  std::span<const Graph> graphs;
  std::vector<std::size_t> indices;
  AugConfig aug;
  Task task;
  std::string name;
  bool higher_is_better = true;

  Validator(std::span<const Graph> g, std::vector<std::size_t> idx, const AugConfig& a, Task t)
      : graphs(g), indices(std::move(idx)), aug(a), task(t) {
    if (task == Task::Regression) {
      name = "rmse";
      higher_is_better = false;
      return;
    }
    bool pos = false, neg = false;
    for (auto i : indices) {
      if (!graphs[i].label) throw DataError("graph " + std::to_string(i) + " has no label");
      (*graphs[i].label > 0.5 ? pos : neg) = true;
    }
    name = pos && neg ? "auc" : "neg_bce";
  }

  std::pair<double, double> operator()(const Model& model) const {
    auto preds = run_inference(model, graphs, indices, aug);
    std::vector<double> scores, labels;
    double size = 0.0;
    for (const auto& p : preds) {
      scores.push_back(p.pred);
      labels.push_back(*graphs[p.graph_index].label);
      std::size_t above = 0;
      for (double m : p.mask) above += m > aug.mask_threshold ? 1 : 0;
      size += static_cast<double>(above) / static_cast<double>(p.mask.size());
    }
    size /= static_cast<double>(preds.size());
    const std::size_t n = scores.size();
    if (name == "auc") return {roc_auc(scores, labels), size};
    if (name == "rmse") return {rmse(scores, labels), size};
    NoGradGuard no_grad;
    return {-bce_with_logits(Tensor({n}, scores), Tensor({n}, labels)).item(), size};
  }

  bool at_least_as_good(double candidate, double best) const {
    return higher_is_better ? candidate >= best : candidate <= best;
  }
};

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL * (epoch + 1);
}

}  // namespace

TrainResult train(std::span<const Graph> graphs, const DatasetSplit& split, const TrainConfig& config,
                  const EpochObserver& observer) {
  config.validate();
  if (split.train.empty()) throw ConfigError("training split is empty");
  const std::size_t feature_dim = graphs[split.train.front()].feature_dim;
  for (auto i : split.train) {
    if (!graphs[i].label) throw DataError("training graph " + std::to_string(i) + " has no label");
  }

  const AugConfig aug = config.aug();
  Model model = Model::init(config.model_config(feature_dim), config.seed);
  const ParamList sep_named = model.separator_params();
  const ParamList pred_named = model.predictor_params();
  std::vector<Tensor> sep_params = tensors_of(sep_named);
  std::vector<Tensor> pred_params = tensors_of(pred_named);
  OptimizerState sep_state, pred_state;

  Validator validate(graphs, split.valid.empty() ? split.train : split.valid, aug, config.task);

  TrainResult result{model.clone(), {}};
  result.history.metric_name = validate.name;
  result.history.higher_is_better = validate.higher_is_better;

  std::size_t epoch = 0;
  std::size_t rounds_since_best = 0;
  bool have_best = false;

  auto run_epoch = [&](Phase phase, std::size_t round) {
    const auto start = std::chrono::steady_clock::now();
    const bool sep_phase = phase == Phase::Separator;
    set_requires_grad(sep_named, sep_phase);
    set_requires_grad(pred_named, !sep_phase);
    std::vector<Tensor>& active = sep_phase ? sep_params : pred_params;
    OptimizerState& state = sep_phase ? sep_state : pred_state;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.round = round;
    rec.phase = phase;
    double weight = 0.0;
    for (const auto& batch : make_batches(graphs, split.train, config.batch_size, epoch_seed(config.seed, epoch))) {
      ForwardOutput out = forward(model, batch, aug);
      const Tensor& loss = sep_phase ? out.l_sep : out.l_pred;
      if (!std::isfinite(loss.item())) {
        throw NumericalError("non-finite loss in " + to_string(phase) + " phase, round " + std::to_string(round) +
                             ", epoch " + std::to_string(epoch));
      }
      zero_grad(active);
      backward(loss);
      adam_step(active, state, config.learning_rate);

      const double w = static_cast<double>(batch.num_graphs);
      rec.l_rem += w * out.l_rem.item();
      rec.l_rep += w * out.l_rep.item();
      rec.l_reg += w * out.l_reg.value.item();
      rec.loss += w * loss.item();
      weight += w;
    }
    zero_grad(active);
    rec.l_rem /= weight;
    rec.l_rep /= weight;
    rec.l_reg /= weight;
    rec.loss /= weight;

    set_requires_grad(sep_named, false);
    set_requires_grad(pred_named, false);
    std::tie(rec.valid_metric, rec.rationale_size) = validate(model);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    if (!have_best || validate.at_least_as_good(rec.valid_metric, result.history.best_metric)) {
      have_best = true;
      result.model = model.clone();
      result.history.best_epoch = epoch;
      result.history.best_metric = rec.valid_metric;
      rounds_since_best = 0;
    }
    result.history.epochs.push_back(rec);
    if (observer) observer(rec, model);
    ++epoch;
  };

  for (std::size_t round = 0; round < config.num_rounds; ++round) {
    ++rounds_since_best;
    if (!config.freeze_mask_full) {
      for (std::size_t t = 0; t < config.t_sep; ++t) run_epoch(Phase::Separator, round);
    }
    for (std::size_t t = 0; t < config.t_pred; ++t) run_epoch(Phase::Predictor, round);
    if (config.patience > 0 && rounds_since_best >= config.patience) break;
  }
  return result;
}

// ---------------------------------------------------------------- checkpoints

std::string checkpoint_to_string(const Model& model, const TrainConfig& config, std::size_t feature_dim) {
  json params = json::array();
  for (const auto& p : model.all_params()) {
    auto v = p.tensor.values();
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"values", std::vector<double>(v.begin(), v.end())}});
  }
  json j{{"format", kCheckpointFormat}, {"config", to_json(config)}, {"feature_dim", feature_dim}, {"params", params}};
  return j.dump();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw DataError(std::string("not a ") + kCheckpointFormat + " checkpoint");
  }
  Checkpoint ck;
  ck.config = train_config_from_json(j.at("config"));
  ck.feature_dim = j.at("feature_dim").get<std::size_t>();
  ck.model = Model::init(ck.config.model_config(ck.feature_dim), ck.config.seed);

  std::map<std::string, const json*> stored;
  for (const auto& p : j.at("params")) stored[p.at("name").get<std::string>()] = &p;
  ParamList params = ck.model.all_params();
  if (stored.size() != params.size()) throw DataError("checkpoint parameter count does not match its config");
  for (auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->at("shape").get<Shape>() != p.tensor.shape()) {
      throw DataError("checkpoint parameter '" + p.name + "' has the wrong shape");
    }
    auto values = it->second->at("values").get<std::vector<double>>();
    auto dst = p.tensor.mutable_values();
    if (values.size() != dst.size()) throw DataError("checkpoint parameter '" + p.name + "' has the wrong size");
    std::copy(values.begin(), values.end(), dst.begin());
  }
  set_requires_grad(params, false);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& config,
                     std::size_t feature_dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_string(model, config, feature_dim) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace grea
