#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grea/tensor.hpp"

namespace grea {

/// Undirected edge stored once; message passing expands both directions.
using Edge = std::array<std::size_t, 2>;

struct Graph {
  std::size_t feature_dim = 0;
  std::vector<double> features;  // num_nodes x feature_dim, row-major
  std::vector<Edge> edges;
  std::optional<double> label;
  std::optional<std::vector<std::size_t>> rationale_truth;

  std::size_t num_nodes() const { return feature_dim ? features.size() / feature_dim : 0; }
  std::span<const double> node(std::size_t v) const { return {features.data() + v * feature_dim, feature_dim}; }

  /// Throws DataError on: no nodes, ragged features, endpoint out of range,
  /// self-loops, rationale indices out of range.
  void validate() const;

  bool operator==(const Graph&) const = default;
};

/// Block-diagonal union of graphs with per-node graph ids.
struct GraphBatch {
  Tensor features;  // total_nodes x feature_dim, constant
  std::vector<Edge> edges;  // global node indices
  std::vector<std::size_t> segments;  // graph id of every node
  std::vector<std::size_t> offsets;  // first node of each graph, plus the total
  std::vector<double> labels;  // empty when unlabeled
  std::vector<std::size_t> source_index;  // dataset index of each member
  std::size_t num_graphs = 0;

  std::size_t num_nodes() const { return segments.size(); }
  std::size_t graph_size(std::size_t g) const { return offsets[g + 1] - offsets[g]; }
  bool labeled() const { return labels.size() == num_graphs; }
};

/// Batches graphs[indices[0]], graphs[indices[1]], ... in the given order.
GraphBatch collate(std::span<const Graph> graphs, std::span<const std::size_t> indices);
GraphBatch collate(std::span<const Graph> graphs);

/// Splits `indices` into consecutive batches of `batch_size`, keeping the
/// short final batch. With a seed the order is shuffled deterministically.
std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, std::span<const std::size_t> indices,
                                     std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed);
std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, std::size_t batch_size,
                                     std::optional<std::uint64_t> shuffle_seed);

// ---------------------------------------------------------------- I/O

/// One JSON object per line: {"nodes": [[...], ...], "edges": [[u, v], ...],
/// "y": number?, "rationale_nodes": [int]?}. Errors carry the line number.
std::vector<Graph> load_jsonl(const std::filesystem::path& path);
std::vector<Graph> parse_jsonl(std::istream& in);
std::string graph_to_json_line(const Graph& g);
void save_jsonl(const std::filesystem::path& path, std::span<const Graph> graphs);

// ---------------------------------------------------------------- splits

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;

  bool operator==(const DatasetSplit&) const = default;
};

struct SplitRatios {
  double train = 0.6;
  double valid = 0.1;
  double test = 0.3;
};

/// Shuffles 0..n-1 with `seed`, then cuts. Train and valid sizes are
/// floor(ratio * n) and test takes what is left (595 -> 357/59/179).
/// Throws ConfigError unless ratios are non-negative and sum to 1 +- 1e-9.
DatasetSplit split(std::size_t n, SplitRatios ratios, std::uint64_t seed);

std::string split_to_json(const DatasetSplit& s);
DatasetSplit split_from_json(const std::string& text, std::size_t dataset_size);
void save_split(const std::filesystem::path& path, const DatasetSplit& s);
DatasetSplit load_split(const std::filesystem::path& path, std::size_t dataset_size);
/// Sidecar path used next to a dataset file: data.jsonl -> data.jsonl.split.json
std::filesystem::path split_sidecar(const std::filesystem::path& data_path);

// ---------------------------------------------------------------- synthetic

enum class BaseKind { RandomTree = 0, Ladder = 1, Wheel = 2 };
enum class MotifKind { House, Cycle };

std::string to_string(BaseKind k);
std::string to_string(MotifKind k);
BaseKind base_kind_from_string(const std::string& s);
MotifKind motif_kind_from_string(const std::string& s);

struct SyntheticSpec {
  std::size_t num_graphs = 1000;
  std::size_t base_min = 10;
  std::size_t base_max = 20;
  std::vector<BaseKind> base_kinds{BaseKind::RandomTree, BaseKind::Ladder, BaseKind::Wheel};
  /// Motif planted for class 0 and class 1.
  std::array<MotifKind, 2> class_motifs{MotifKind::Cycle, MotifKind::House};
  /// Base kind favoured by each class in the training split.
  std::array<BaseKind, 2> biased_base{BaseKind::RandomTree, BaseKind::Ladder};
  std::size_t feature_dim = 6;
  double spurious_bias = 0.0;
  double label_noise = 0.0;
  SplitRatios ratios{};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<Graph> graphs;
  std::vector<BaseKind> base_kinds;
  std::vector<int> motif_class;  // label before noise
  DatasetSplit split;
};

/// Base graph plus one planted motif joined by a single edge. The label is
/// the motif class (optionally flipped with label_noise) and the motif nodes
/// are the ground-truth rationale. In the training split the base kind follows
/// the class with probability spurious_bias; elsewhere it is uniform.
SyntheticDataset gen_planted_motif(const SyntheticSpec& spec);

/// Motif edge lists on local indices 0..size-1.
std::vector<Edge> motif_edges(MotifKind kind);
std::size_t motif_size(MotifKind kind);

struct DatasetSummary {
  std::size_t num_graphs = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t unlabeled = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  std::size_t max_nodes = 0;
  std::size_t max_edges = 0;
};

DatasetSummary summarize(std::span<const Graph> graphs);

}  // namespace grea
