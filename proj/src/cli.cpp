#include "grea/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "grea/audit.hpp"
#include "grea/bench.hpp"

namespace grea::cli {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("synthetic key '" + key + "' has the wrong type");
  }
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

DatasetSplit split_for(const std::filesystem::path& data_path, std::size_t n, const TrainConfig& config) {
  const auto sidecar = split_sidecar(data_path);
  if (std::filesystem::exists(sidecar)) return load_split(sidecar, n);
  return split(n, config.ratios, config.seed);
}

std::vector<std::size_t> select_split(const DatasetSplit& s, const std::string& name, std::size_t n) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  if (name == "all") return all_indices(n);
  throw ConfigError("unknown split '" + name + "' (expected train, valid, test or all)");
}

void check_width(const std::vector<Graph>& graphs, std::size_t expected) {
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].feature_dim != expected) {
      throw ConfigError("feature width mismatch: checkpoint expects F=" + std::to_string(expected) + ", graph " +
                        std::to_string(i) + " has F=" + std::to_string(graphs[i].feature_dim));
    }
  }
}

TrainConfig train_config_for(const RunConfigFile& rc, std::optional<std::uint64_t> seed_flag) {
  TrainConfig config = rc.train ? train_config_from_json(*rc.train) : TrainConfig{};
  config.seed = resolve_seed(seed_flag, rc.train);
  config.validate();
  return config;
}

}  // namespace

// ---------------------------------------------------------------- config files

RunConfigFile parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfigFile rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "synthetic") {
      if (!v.is_object()) throw ConfigError("'synthetic' must be an object");
      synthetic_spec_from_json(v);
      rc.synthetic = v;
    } else if (key == "train") {
      if (!v.is_object()) throw ConfigError("'train' must be an object");
      train_config_from_json(v);
      rc.train = v;
    } else if (key == "data" || key == "out") {
      if (!v.is_string()) throw ConfigError("'" + key + "' must be a string path");
      (key == "data" ? rc.data : rc.out) = v.get<std::string>();
    } else {
      throw ConfigError("unknown run config key '" + key + "'");
    }
  }
  return rc;
}

RunConfigFile load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json_file(path)); }

SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec s) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "num_graphs") s.num_graphs = get_as<std::size_t>(v, key);
    else if (key == "base_min") s.base_min = get_as<std::size_t>(v, key);
    else if (key == "base_max") s.base_max = get_as<std::size_t>(v, key);
    else if (key == "feature_dim") s.feature_dim = get_as<std::size_t>(v, key);
    else if (key == "spurious_bias") s.spurious_bias = get_as<double>(v, key);
    else if (key == "label_noise") s.label_noise = get_as<double>(v, key);
    else if (key == "seed") s.seed = get_as<std::uint64_t>(v, key);
    else if (key == "base_kinds") {
      s.base_kinds.clear();
      for (const auto& k : get_as<std::vector<std::string>>(v, key)) s.base_kinds.push_back(base_kind_from_string(k));
    } else if (key == "class_motifs") {
      auto m = get_as<std::vector<std::string>>(v, key);
      if (m.size() != 2) throw ConfigError("'class_motifs' needs one motif per class");
      s.class_motifs = {motif_kind_from_string(m[0]), motif_kind_from_string(m[1])};
    } else if (key == "biased_base") {
      auto b = get_as<std::vector<std::string>>(v, key);
      if (b.size() != 2) throw ConfigError("'biased_base' needs one base kind per class");
      s.biased_base = {base_kind_from_string(b[0]), base_kind_from_string(b[1])};
    } else if (key == "split") {
      auto r = get_as<std::vector<double>>(v, key);
      if (r.size() != 3) throw ConfigError("'split' must hold three ratios");
      s.ratios = {r[0], r[1], r[2]};
    } else {
      throw ConfigError("unknown synthetic key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

json to_json(const SyntheticSpec& s) {
  json kinds = json::array();
  for (auto k : s.base_kinds) kinds.push_back(to_string(k));
  return {{"num_graphs", s.num_graphs},
          {"base_min", s.base_min},
          {"base_max", s.base_max},
          {"base_kinds", kinds},
          {"class_motifs", {to_string(s.class_motifs[0]), to_string(s.class_motifs[1])}},
          {"biased_base", {to_string(s.biased_base[0]), to_string(s.biased_base[1])}},
          {"feature_dim", s.feature_dim},
          {"spurious_bias", s.spurious_bias},
          {"label_noise", s.label_noise},
          {"split", {s.ratios.train, s.ratios.valid, s.ratios.test}},
          {"seed", s.seed}};
}

json to_json(const DatasetSummary& s) {
  return {{"num_graphs", s.num_graphs}, {"positives", s.positives},   {"negatives", s.negatives},
          {"unlabeled", s.unlabeled},   {"mean_nodes", s.mean_nodes}, {"mean_edges", s.mean_edges},
          {"max_nodes", s.max_nodes},   {"max_edges", s.max_edges}};
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const std::optional<json>& section) {
  if (flag) return *flag;
  if (section && section->contains("seed")) return section->at("seed").get<std::uint64_t>();
  if (const char* env = std::getenv("GREA_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GREA_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

// ---------------------------------------------------------------- commands

namespace {

struct Options {
  std::string spec, config, data, out, ckpt, split = "test", history, batch_sizes = "8,32,128";
  std::optional<std::uint64_t> seed;
  std::size_t reps = 3;
  bool full_width = false;
};

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  const json raw = read_json_file(o.spec);
  const bool wrapped = raw.is_object() && (raw.contains("synthetic") || raw.contains("train") ||
                                           raw.contains("data") || raw.contains("out"));
  RunConfigFile rc;
  if (wrapped) {
    rc = parse_run_config(raw);
  } else {
    rc.synthetic = raw;
  }
  SyntheticSpec spec = rc.synthetic ? synthetic_spec_from_json(*rc.synthetic) : SyntheticSpec{};
  spec.seed = resolve_seed(o.seed, rc.synthetic);
  const std::string path = !o.out.empty() ? o.out : rc.out.value_or("");
  if (path.empty()) throw ConfigError("gen-data needs --out");

  SyntheticDataset data = gen_planted_motif(spec);
  save_jsonl(path, data.graphs);
  save_split(split_sidecar(path), data.split);

  DatasetSummary s = summarize(data.graphs);
  out << json{{"dataset", path}, {"split", split_sidecar(path).string()}, {"summary", to_json(s)}}.dump() << '\n';
  err << "wrote " << s.num_graphs << " graphs (" << s.positives << " positive, " << s.negatives
      << " negative), mean nodes " << s.mean_nodes << ", mean edges " << s.mean_edges << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfigFile rc = o.config.empty() ? RunConfigFile{} : load_run_config(o.config);
  const TrainConfig config = train_config_for(rc, o.seed);
  const std::string data_path = !o.data.empty() ? o.data : rc.data.value_or("");
  const std::string ckpt_path = !o.out.empty() ? o.out : rc.out.value_or("");
  if (data_path.empty() || ckpt_path.empty()) throw ConfigError("train needs --data and --out");
  const std::string history_path = o.history.empty() ? ckpt_path + ".history.json" : o.history;

  const auto graphs = load_jsonl(data_path);
  if (graphs.empty()) throw DataError("dataset '" + data_path + "' is empty");
  check_width(graphs, graphs.front().feature_dim);
  const DatasetSplit s = split_for(data_path, graphs.size(), config);

  TrainResult result = train(graphs, s, config);
  save_checkpoint(ckpt_path, result.model, config, graphs.front().feature_dim);
  {
    std::ofstream h(history_path, std::ios::binary);
    if (!h) throw DataError("cannot write history '" + history_path + "'");
    h << result.history.to_json().dump(2) << '\n';
  }
  out << json{{"checkpoint", ckpt_path},
              {"history", history_path},
              {"best_epoch", result.history.best_epoch},
              {"metric", result.history.metric_name},
              {"best_metric", result.history.best_metric}}
             .dump()
      << '\n';
  err << "trained " << result.history.epochs.size() << " epochs; best " << result.history.metric_name << " "
      << result.history.best_metric << " at epoch " << result.history.best_epoch << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream&) {
  Checkpoint ck = load_checkpoint(o.ckpt);
  const auto graphs = load_jsonl(o.data);
  check_width(graphs, ck.feature_dim);
  const DatasetSplit s = split_for(o.data, graphs.size(), ck.config);
  const auto indices = select_split(s, o.split, graphs.size());
  out << evaluate(ck.model, graphs, indices, ck.config.aug()).to_json() << '\n';
  return kOk;
}

int cmd_explain(const Options& o, std::ostream& out, std::ostream& err) {
  Checkpoint ck = load_checkpoint(o.ckpt);
  const auto graphs = load_jsonl(o.data);
  check_width(graphs, ck.feature_dim);
  const std::string split_name = o.split.empty() ? "all" : o.split;
  const DatasetSplit s = split_for(o.data, graphs.size(), ck.config);
  const auto indices = select_split(s, split_name, graphs.size());

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary);
    if (!file) throw DataError("cannot write '" + o.out + "'");
  }
  std::ostream& dst = o.out.empty() ? out : file;
  for (const auto& p : run_inference(ck.model, graphs, indices, ck.config.aug())) {
    const Graph& g = graphs[p.graph_index];
    std::size_t k;
    if (g.rationale_truth && !g.rationale_truth->empty()) {
      k = g.rationale_truth->size();
    } else {
      k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ck.config.gamma * static_cast<double>(p.mask.size()))));
    }
    dst << json{{"graph_index", p.graph_index}, {"mask", p.mask}, {"topk", top_k(p.mask, k)}}.dump() << '\n';
  }
  err << "explained " << indices.size() << " graphs\n";
  return kOk;
}

int cmd_grad_check(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfigFile rc = o.config.empty() ? RunConfigFile{} : load_run_config(o.config);
  TrainConfig config = train_config_for(rc, o.seed);
  if (!o.full_width) config = audit_config(config);
  const std::size_t feature_dim = 6;
  GraphBatch batch = audit_batch(3, feature_dim, config.seed);
  Model model = Model::init(config.model_config(feature_dim), config.seed);
  GradientAudit audit = audit_gradients(model, batch, config.aug());
  const double worst = audit.max_relative_error();
  const bool pass = worst < 1e-4;
  out << json{{"max_rel_error", worst},
              {"max_rel_error_sep", audit.sep.max_relative_error},
              {"max_rel_error_pred", audit.pred.max_relative_error},
              {"probes", audit.sep.probes + audit.pred.probes},
              {"excluded_kink_probes", audit.sep.excluded + audit.pred.excluded},
              {"sep_dim", config.sep_dim},
              {"pred_dim", config.pred_dim},
              {"tolerance", 1e-4},
              {"pass", pass}}
             .dump()
      << '\n';
  err << "gradient audit " << (pass ? "passed" : "FAILED") << ": max relative error " << worst << '\n';
  return pass ? kOk : kSelfCheck;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  const auto graphs = load_jsonl(o.data);
  if (graphs.empty()) throw DataError("dataset '" + o.data + "' is empty");
  Model model;
  if (!o.ckpt.empty()) {
    Checkpoint ck = load_checkpoint(o.ckpt);
    check_width(graphs, ck.feature_dim);
    model = std::move(ck.model);
  } else {
    RunConfigFile rc = o.config.empty() ? RunConfigFile{} : load_run_config(o.config);
    const TrainConfig config = train_config_for(rc, o.seed);
    check_width(graphs, graphs.front().feature_dim);
    model = Model::init(config.model_config(graphs.front().feature_dim), config.seed);
  }
  BenchOptions opts;
  opts.batch_sizes.clear();
  std::stringstream ss(o.batch_sizes);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      opts.batch_sizes.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad batch size '" + tok + "'");
    }
  }
  opts.reps = o.reps;
  opts.seed = o.seed.value_or(0);
  BenchReport report = run_bench(graphs, model, opts);
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw DataError("cannot write '" + o.out + "'");
    f << report.to_csv();
  }
  out << report.to_csv();
  for (const auto& r : report.rows) {
    err << "B=" << r.batch_size << ": latent " << r.t_latent_ms << " ms, explicit " << r.t_explicit_ms
        << " ms, speedup " << r.speedup << "x, max dev " << r.max_abs_dev << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph rationalization with environment replacement"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a planted-motif dataset");
  gen->add_option("--spec", o.spec, "Synthetic spec or run config (JSON)")->required();
  gen->add_option("--out", o.out, "Output JSONL path");
  gen->add_option("--seed", seed, "Seed override");

  auto* tr = app.add_subcommand("train", "Train with alternating separator/predictor phases");
  tr->add_option("--config", o.config, "Run config (JSON)");
  tr->add_option("--data", o.data, "Dataset JSONL");
  tr->add_option("--out", o.out, "Checkpoint path");
  tr->add_option("--history", o.history, "History JSON path (default <out>.history.json)");
  tr->add_option("--seed", seed, "Seed override");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  ev->add_option("--data", o.data, "Dataset JSONL")->required();
  ev->add_option("--split", o.split, "train, valid, test or all");

  auto* ex = app.add_subcommand("explain", "Dump per-node rationale probabilities");
  ex->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  ex->add_option("--data", o.data, "Dataset JSONL")->required();
  ex->add_option("--out", o.out, "Output JSONL (default stdout)");
  std::string explain_split = "all";
  ex->add_option("--split", explain_split, "train, valid, test or all");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of both losses");
  gc->add_option("--config", o.config, "Run config (JSON)");
  gc->add_option("--seed", seed, "Seed override");
  gc->add_flag("--full-width", o.full_width, "Audit at the configured hidden widths instead of a capped width");

  auto* be = app.add_subcommand("bench", "Latent vs explicit augmentation timing");
  be->add_option("--data", o.data, "Dataset JSONL")->required();
  be->add_option("--batch-sizes", o.batch_sizes, "Comma-separated batch sizes");
  be->add_option("--config", o.config, "Run config for a random model");
  be->add_option("--ckpt", o.ckpt, "Checkpoint to benchmark instead");
  be->add_option("--reps", o.reps, "Timed repetitions per batch size");
  be->add_option("--out", o.out, "Also write the CSV here");
  be->add_option("--seed", seed, "Seed override");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  for (auto* sub : {gen, tr, gc, be}) {
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;
  }
  if (ex->parsed()) o.split = explain_split;

  try {
    if (gen->parsed()) return cmd_gen_data(o, out, err);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (ev->parsed()) return cmd_eval(o, out, err);
    if (ex->parsed()) return cmd_explain(o, out, err);
    if (gc->parsed()) return cmd_grad_check(o, out, err);
    if (be->parsed()) return cmd_bench(o, out, err);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace grea::cli
