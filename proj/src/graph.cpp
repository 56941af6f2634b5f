#include "grea/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace grea {

using nlohmann::json;

void Graph::validate() const {
  if (feature_dim == 0 || features.empty()) throw DataError("graph has no nodes");
  if (features.size() % feature_dim != 0) throw DataError("feature matrix is ragged");
  const std::size_t n = num_nodes();
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw DataError("edge [" + std::to_string(u) + "," + std::to_string(v) + "] out of range for " +
                      std::to_string(n) + " nodes");
    }
    if (u == v) throw DataError("self-loop on node " + std::to_string(u));
  }
  if (rationale_truth) {
    for (auto v : *rationale_truth) {
      if (v >= n) throw DataError("rationale node " + std::to_string(v) + " out of range");
    }
  }
}

// ---------------------------------------------------------------- batching

GraphBatch collate(std::span<const Graph> graphs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("cannot batch zero graphs");
  GraphBatch batch;
  batch.num_graphs = indices.size();
  const std::size_t feature_dim = graphs[indices[0]].feature_dim;
  std::size_t total = 0;
  bool labeled = true;
  for (auto i : indices) {
    if (i >= graphs.size()) throw IndexError("graph index " + std::to_string(i) + " outside dataset");
    if (graphs[i].feature_dim != feature_dim) throw DataError("graphs in a batch differ in feature width");
    total += graphs[i].num_nodes();
    labeled = labeled && graphs[i].label.has_value();
  }

  std::vector<double> features;
  features.reserve(total * feature_dim);
  batch.segments.reserve(total);
  batch.offsets.reserve(indices.size() + 1);
  std::size_t offset = 0;
  for (std::size_t g = 0; g < indices.size(); ++g) {
    const Graph& graph = graphs[indices[g]];
    batch.offsets.push_back(offset);
    features.insert(features.end(), graph.features.begin(), graph.features.end());
    batch.segments.insert(batch.segments.end(), graph.num_nodes(), g);
    for (const auto& [u, v] : graph.edges) batch.edges.push_back({u + offset, v + offset});
    if (labeled) batch.labels.push_back(*graph.label);
    batch.source_index.push_back(indices[g]);
    offset += graph.num_nodes();
  }
  batch.offsets.push_back(offset);
  batch.features = Tensor({total, feature_dim}, std::move(features));
  return batch;
}

GraphBatch collate(std::span<const Graph> graphs) {
  std::vector<std::size_t> all(graphs.size());
  std::iota(all.begin(), all.end(), 0);
  return collate(graphs, all);
}

std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, std::span<const std::size_t> indices,
                                     std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<GraphBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    batches.push_back(collate(graphs, std::span(order).subspan(start, len)));
  }
  return batches;
}

std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, std::size_t batch_size,
                                     std::optional<std::uint64_t> shuffle_seed) {
  std::vector<std::size_t> all(graphs.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batches(graphs, all, batch_size, shuffle_seed);
}

// ---------------------------------------------------------------- JSONL

namespace {

Graph graph_from_json(const json& j) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "nodes" && key != "edges" && key != "y" && key != "rationale_nodes") {
      throw DataError("unknown field '" + key + "'");
    }
  }
  if (!j.contains("nodes") || !j["nodes"].is_array()) throw DataError("missing 'nodes' array");
  Graph g;
  const auto& nodes = j["nodes"];
  if (nodes.empty()) throw DataError("graph has no nodes");
  g.feature_dim = nodes[0].is_array() ? nodes[0].size() : 0;
  if (g.feature_dim == 0) throw DataError("node feature rows must be non-empty arrays");
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    const auto& row = nodes[v];
    if (!row.is_array() || row.size() != g.feature_dim) {
      throw DataError("ragged feature row at node " + std::to_string(v));
    }
    for (const auto& x : row) {
      if (!x.is_number()) throw DataError("non-numeric feature at node " + std::to_string(v));
      g.features.push_back(x.get<double>());
    }
  }
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) throw DataError("'edges' must be an array");
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
        throw DataError("edge must be a pair of non-negative integers");
      }
      g.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
  }
  if (j.contains("y") && !j["y"].is_null()) {
    if (!j["y"].is_number()) throw DataError("'y' must be a number");
    g.label = j["y"].get<double>();
  }
  if (j.contains("rationale_nodes") && !j["rationale_nodes"].is_null()) {
    std::vector<std::size_t> truth;
    for (const auto& v : j["rationale_nodes"]) {
      if (!v.is_number_unsigned()) throw DataError("rationale node ids must be non-negative integers");
      truth.push_back(v.get<std::size_t>());
    }
    g.rationale_truth = std::move(truth);
  }
  g.validate();
  return g;
}

}  // namespace

std::vector<Graph> parse_jsonl(std::istream& in) {
  std::vector<Graph> graphs;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      graphs.push_back(graph_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), number);
    } catch (const DataError& e) {
      throw DataError(e.what(), number);
    }
  }
  return graphs;
}

std::vector<Graph> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return parse_jsonl(in);
}

std::string graph_to_json_line(const Graph& g) {
  json j;
  json nodes = json::array();
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto row = g.node(v);
    nodes.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  if (g.label) j["y"] = *g.label;
  if (g.rationale_truth) j["rationale_nodes"] = *g.rationale_truth;
  return j.dump();
}

void save_jsonl(const std::filesystem::path& path, std::span<const Graph> graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& g : graphs) out << graph_to_json_line(g) << '\n';
}

// ---------------------------------------------------------------- splits

DatasetSplit split(std::size_t n, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto cut = [n](double r) { return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_train = std::min(cut(ratios.train), n);
  const std::size_t n_valid = std::min(cut(ratios.valid), n - n_train);
  DatasetSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
  return s;
}

std::string split_to_json(const DatasetSplit& s) {
  return json{{"train", s.train}, {"valid", s.valid}, {"test", s.test}}.dump();
}

DatasetSplit split_from_json(const std::string& text, std::size_t dataset_size) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed split file: ") + e.what());
  }
  DatasetSplit s;
  std::vector<int> seen(dataset_size, 0);
  auto read = [&](const char* key, std::vector<std::size_t>& dst) {
    if (!j.contains(key) || !j[key].is_array()) throw DataError(std::string("split file lacks '") + key + "'");
    for (const auto& v : j[key]) {
      if (!v.is_number_unsigned() || v.get<std::size_t>() >= dataset_size) {
        throw DataError(std::string("split '") + key + "' holds an index outside the dataset");
      }
      const auto i = v.get<std::size_t>();
      if (seen[i]++) throw DataError("split lists graph " + std::to_string(i) + " more than once");
      dst.push_back(i);
    }
  };
  read("train", s.train);
  read("valid", s.valid);
  read("test", s.test);
  return s;
}

void save_split(const std::filesystem::path& path, const DatasetSplit& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << split_to_json(s) << '\n';
}

DatasetSplit load_split(const std::filesystem::path& path, std::size_t dataset_size) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return split_from_json(ss.str(), dataset_size);
}

std::filesystem::path split_sidecar(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".split.json");
}

// ---------------------------------------------------------------- synthetic

std::string to_string(BaseKind k) {
  switch (k) {
    case BaseKind::RandomTree: return "random-tree";
    case BaseKind::Ladder: return "ladder";
    case BaseKind::Wheel: return "wheel";
  }
  return "?";
}

std::string to_string(MotifKind k) { return k == MotifKind::House ? "house" : "cycle"; }

BaseKind base_kind_from_string(const std::string& s) {
  if (s == "random-tree") return BaseKind::RandomTree;
  if (s == "ladder") return BaseKind::Ladder;
  if (s == "wheel") return BaseKind::Wheel;
  throw ConfigError("unknown base kind '" + s + "'");
}

MotifKind motif_kind_from_string(const std::string& s) {
  if (s == "house") return MotifKind::House;
  if (s == "cycle") return MotifKind::Cycle;
  throw ConfigError("unknown motif kind '" + s + "'");
}

void SyntheticSpec::validate() const {
  if (num_graphs < 1) throw ConfigError("num_graphs must be positive");
  if (base_min < 4 || base_max < base_min) throw ConfigError("base size range must satisfy 4 <= min <= max");
  if (base_kinds.empty()) throw ConfigError("base_kinds must be non-empty");
  if (feature_dim < 2) throw ConfigError("feature_dim must be at least 2");
  if (!(spurious_bias >= 0.0 && spurious_bias <= 1.0)) throw ConfigError("spurious_bias must lie in [0, 1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("label_noise must lie in [0, 1]");
}

std::vector<Edge> motif_edges(MotifKind kind) {
  if (kind == MotifKind::House) {
    // square 0-1-2-3 with roof apex 4 over 0-1
    return {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}};
  }
  return {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}};
}

std::size_t motif_size(MotifKind kind) { return kind == MotifKind::House ? 5 : 6; }

namespace {

std::vector<Edge> base_edges(BaseKind kind, std::size_t size, std::mt19937_64& rng, std::size_t& actual_size) {
  std::vector<Edge> edges;
  switch (kind) {
    case BaseKind::RandomTree:
      actual_size = size;
      for (std::size_t v = 1; v < size; ++v) {
        std::uniform_int_distribution<std::size_t> parent(0, v - 1);
        edges.push_back({parent(rng), v});
      }
      break;
    case BaseKind::Ladder: {
      const std::size_t k = std::max<std::size_t>(2, size / 2);
      actual_size = 2 * k;
      for (std::size_t i = 0; i < k; ++i) {
        if (i + 1 < k) {
          edges.push_back({i, i + 1});
          edges.push_back({k + i, k + i + 1});
        }
        edges.push_back({i, k + i});
      }
      break;
    }
    case BaseKind::Wheel:
      actual_size = size;
      for (std::size_t v = 1; v < size; ++v) {
        edges.push_back({0, v});
        edges.push_back({v, v + 1 < size ? v + 1 : 1});
      }
      break;
  }
  return edges;
}

}  // namespace

SyntheticDataset gen_planted_motif(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset data;
  data.split = split(spec.num_graphs, spec.ratios, spec.seed);
  std::vector<bool> in_train(spec.num_graphs, false);
  for (auto i : data.split.train) in_train[i] = true;

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size_dist(spec.base_min, spec.base_max);
  std::uniform_int_distribution<std::size_t> kind_dist(0, spec.base_kinds.size() - 1);

  data.graphs.reserve(spec.num_graphs);
  for (std::size_t i = 0; i < spec.num_graphs; ++i) {
    const int cls = unit(rng) < 0.5 ? 0 : 1;
    BaseKind kind;
    if (in_train[i] && unit(rng) < spec.spurious_bias) {
      kind = spec.biased_base[static_cast<std::size_t>(cls)];
    } else {
      kind = spec.base_kinds[kind_dist(rng)];
    }

    std::size_t base_n = 0;
    std::vector<Edge> edges = base_edges(kind, size_dist(rng), rng, base_n);
    const MotifKind motif = spec.class_motifs[static_cast<std::size_t>(cls)];
    const std::size_t motif_n = motif_size(motif);
    for (const auto& [u, v] : motif_edges(motif)) edges.push_back({base_n + u, base_n + v});
    std::uniform_int_distribution<std::size_t> base_pick(0, base_n - 1);
    std::uniform_int_distribution<std::size_t> motif_pick(0, motif_n - 1);
    const std::size_t anchor = base_pick(rng);
    edges.push_back({anchor, base_n + motif_pick(rng)});

    const std::size_t n = base_n + motif_n;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    Graph g;
    g.feature_dim = spec.feature_dim;
    std::vector<std::size_t> degree(n, 0);
    for (auto& [u, v] : edges) {
      u = perm[u];
      v = perm[v];
      ++degree[u];
      ++degree[v];
    }
    g.edges = std::move(edges);
    g.features.assign(n * spec.feature_dim, 0.0);
    for (std::size_t v = 0; v < n; ++v) g.features[v * spec.feature_dim + std::min(degree[v], spec.feature_dim - 1)] = 1.0;

    std::vector<std::size_t> truth;
    for (std::size_t v = base_n; v < n; ++v) truth.push_back(perm[v]);
    std::sort(truth.begin(), truth.end());
    g.rationale_truth = std::move(truth);

    int label = cls;
    if (unit(rng) < spec.label_noise) label = 1 - label;
    g.label = static_cast<double>(label);

    data.graphs.push_back(std::move(g));
    data.base_kinds.push_back(kind);
    data.motif_class.push_back(cls);
  }
  return data;
}

DatasetSummary summarize(std::span<const Graph> graphs) {
  DatasetSummary s;
  s.num_graphs = graphs.size();
  double nodes = 0, edges = 0;
  for (const auto& g : graphs) {
    nodes += static_cast<double>(g.num_nodes());
    edges += static_cast<double>(g.edges.size());
    s.max_nodes = std::max(s.max_nodes, g.num_nodes());
    s.max_edges = std::max(s.max_edges, g.edges.size());
    if (!g.label) {
      ++s.unlabeled;
    } else if (*g.label > 0.5) {
      ++s.positives;
    } else {
      ++s.negatives;
    }
  }
  if (!graphs.empty()) {
    s.mean_nodes = nodes / static_cast<double>(graphs.size());
    s.mean_edges = edges / static_cast<double>(graphs.size());
  }
  return s;
}

}  // namespace grea
