#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "grea/graph.hpp"

using namespace grea;

namespace {

std::vector<Graph> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_jsonl(in);
}

long error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.line();
  }
  return 0;
}

Graph two_node(double y) {
  Graph g;
  g.feature_dim = 2;
  g.features = {1, 0, 0, 1};
  g.edges = {{0, 1}};
  g.label = y;
  return g;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("jsonl parsing") {
  auto gs = parse(R"({"nodes":[[1,0],[0,1]],"edges":[[0,1]],"y":1})");
  REQUIRE(gs.size() == 1);
  CHECK(gs[0].num_nodes() == 2);
  CHECK(gs[0].label == 1.0);
  CHECK(gs[0].edges == std::vector<Edge>{{0, 1}});

  CHECK(parse("").empty());
  CHECK(parse("\n\n").size() == 0);

  const std::string good = R"({"nodes":[[1]],"edges":[]})";
  CHECK(error_line(good + "\n" + R"({"nodes":[[1,0],[0,1]],"edges":[[0,5]]})") == 2);
  CHECK(error_line(R"({"nodes":[[1,0],[0]],"edges":[]})") == 1);
  CHECK(error_line(R"({"nodes":[[1],[1]],"edges":[[1,1]]})") == 1);
  CHECK(error_line(good + "\n" + good + "\nnot json") == 3);
  CHECK(error_line(R"({"nodes":[[1]],"edges":[],"colour":3})") == 1);
  CHECK(error_line(R"({"nodes":[],"edges":[]})") == 1);
  CHECK(error_line(R"({"nodes":[[1],[2]],"edges":[],"rationale_nodes":[2]})") == 1);
}

TEST_CASE("jsonl round trip") {
  SyntheticSpec spec;
  spec.num_graphs = 20;
  spec.seed = 4;
  auto data = gen_planted_motif(spec);
  std::string text;
  for (const auto& g : data.graphs) text += graph_to_json_line(g) + "\n";
  CHECK(parse(text) == data.graphs);

  const auto path = std::filesystem::temp_directory_path() / "grea_graph_roundtrip.jsonl";
  save_jsonl(path, data.graphs);
  CHECK(load_jsonl(path) == data.graphs);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_jsonl(path), DataError);
}

TEST_CASE("collate offsets edges by graph") {
  std::vector<Graph> gs{two_node(0), two_node(1)};
  auto b = collate(gs);
  CHECK(b.segments == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(b.edges == std::vector<Edge>{{0, 1}, {2, 3}});
  CHECK(b.offsets == std::vector<std::size_t>{0, 2, 4});
  CHECK(b.labels == std::vector<double>{0, 1});
  CHECK(b.features.shape() == Shape{4, 2});
  CHECK(b.labeled());

  auto batches = make_batches(gs, 2, std::nullopt);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].segments == b.segments);
  CHECK_THROWS_AS(make_batches(gs, 0, std::nullopt), ConfigError);
}

TEST_CASE("make_batches keeps the short batch and is seed-deterministic") {
  SyntheticSpec spec;
  spec.num_graphs = 23;
  auto data = gen_planted_motif(spec);
  auto a = make_batches(data.graphs, 5, 9);
  auto b = make_batches(data.graphs, 5, 9);
  REQUIRE(a.size() == 5);
  CHECK(a.back().num_graphs == 3);
  std::multiset<std::size_t> seen;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].source_index == b[k].source_index);
    seen.insert(a[k].source_index.begin(), a[k].source_index.end());
    for (const auto& e : a[k].edges) CHECK(a[k].segments[e[0]] == a[k].segments[e[1]]);
    for (std::size_t g = 0; g < a[k].num_graphs; ++g) CHECK(a[k].graph_size(g) > 0);
  }
  CHECK(seen.size() == 23);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 23);
  auto c = make_batches(data.graphs, 5, 10);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) differs |= a[k].source_index != c[k].source_index;
  CHECK(differs);
}

TEST_CASE("split sizes") {
  auto s10 = split(10, {}, 1);
  CHECK(s10.train.size() == 6);
  CHECK(s10.valid.size() == 1);
  CHECK(s10.test.size() == 3);

  auto s = split(595, {}, 1);
  CHECK(s.train.size() == 357);
  CHECK(s.valid.size() == 59);
  CHECK(s.test.size() == 179);
  CHECK(split(595, {}, 1) == s);
  CHECK_FALSE(split(595, {}, 2) == s);

  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.valid, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 595);
  CHECK(*all.rbegin() == 594);

  CHECK_THROWS_AS(split(10, {0.5, 0.5, 0.5}, 0), ConfigError);
  CHECK_THROWS_AS(split(10, {-0.1, 0.6, 0.5}, 0), ConfigError);

  CHECK(split_from_json(split_to_json(s), 595) == s);
  CHECK_THROWS(split_from_json(split_to_json(s), 500));
  CHECK(split_sidecar("a/data.jsonl") == std::filesystem::path("a/data.jsonl.split.json"));
}

TEST_CASE("split sizes follow floor rule for every n") {
  for (std::size_t n = 1; n < 300; ++n) {
    auto s = split(n, {}, 0);
    CHECK(s.train.size() == static_cast<std::size_t>(std::floor(0.6 * static_cast<double>(n) + 1e-9)));
    CHECK(s.valid.size() == static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 1e-9)));
    CHECK(s.train.size() + s.valid.size() + s.test.size() == n);
  }
}

TEST_CASE("planted motif generator") {
  SyntheticSpec spec;
  spec.num_graphs = 200;
  spec.seed = 7;
  auto a = gen_planted_motif(spec);
  auto b = gen_planted_motif(spec);
  CHECK(a.graphs == b.graphs);
  CHECK(a.split == b.split);

  std::size_t houses = 0;
  for (std::size_t i = 0; i < a.graphs.size(); ++i) {
    const Graph& g = a.graphs[i];
    CHECK_NOTHROW(g.validate());
    REQUIRE(g.rationale_truth);
    const auto& truth = *g.rationale_truth;
    const int cls = a.motif_class[i];
    const MotifKind kind = spec.class_motifs[static_cast<std::size_t>(cls)];
    CHECK(truth.size() == motif_size(kind));
    if (kind == MotifKind::House) ++houses;
    CHECK(*g.label == static_cast<double>(cls));

    // exactly one edge leaves the motif, and the motif is connected
    std::set<std::size_t> in(truth.begin(), truth.end());
    std::size_t crossing = 0, inside = 0;
    for (const auto& e : g.edges) {
      const bool u = in.count(e[0]) > 0, v = in.count(e[1]) > 0;
      crossing += u != v;
      inside += u && v;
    }
    CHECK(crossing == 1);
    CHECK(inside == motif_edges(kind).size());

    // one-hot of clipped degree
    std::vector<std::size_t> deg(g.num_nodes(), 0);
    for (const auto& e : g.edges) {
      ++deg[e[0]];
      ++deg[e[1]];
    }
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      auto row = g.node(v);
      const std::size_t hot = std::min(deg[v], spec.feature_dim - 1);
      for (std::size_t c = 0; c < spec.feature_dim; ++c) CHECK(row[c] == (c == hot ? 1.0 : 0.0));
    }
  }
  CHECK(houses > 50);
  CHECK(motif_edges(MotifKind::House).size() == 6);
  CHECK(motif_edges(MotifKind::Cycle).size() == 6);

  spec.seed = 8;
  CHECK_FALSE(gen_planted_motif(spec).graphs == a.graphs);
}

TEST_CASE("spurious bias controls base/label correlation") {
  SyntheticSpec spec;
  spec.num_graphs = 1000;
  spec.ratios = {1.0, 0.0, 0.0};
  spec.base_kinds = {BaseKind::RandomTree, BaseKind::Ladder};

  auto corr_for = [&](double b) {
    spec.spurious_bias = b;
    auto data = gen_planted_motif(spec);
    std::vector<double> base, label;
    for (std::size_t i = 0; i < data.graphs.size(); ++i) {
      base.push_back(data.base_kinds[i] == spec.biased_base[1] ? 1.0 : 0.0);
      label.push_back(*data.graphs[i].label);
    }
    return correlation(base, label);
  };
  CHECK(corr_for(1.0) == doctest::Approx(1.0));
  CHECK(std::abs(corr_for(0.0)) < 0.1);

  // valid/test stay uniform regardless of the bias
  spec.ratios = {};
  spec.spurious_bias = 1.0;
  auto data = gen_planted_motif(spec);
  std::vector<double> base, label;
  for (auto i : data.split.test) {
    base.push_back(data.base_kinds[i] == spec.biased_base[1] ? 1.0 : 0.0);
    label.push_back(*data.graphs[i].label);
  }
  CHECK(std::abs(correlation(base, label)) < 0.2);
}

TEST_CASE("label noise flips labels but not truth") {
  SyntheticSpec spec;
  spec.num_graphs = 1000;
  spec.label_noise = 0.2;
  auto data = gen_planted_motif(spec);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    flipped += *data.graphs[i].label != static_cast<double>(data.motif_class[i]);
  }
  CHECK(flipped > 150);
  CHECK(flipped < 250);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.spurious_bias = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.base_min = 30;
  spec.base_max = 20;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.feature_dim = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK(base_kind_from_string(to_string(BaseKind::Wheel)) == BaseKind::Wheel);
  CHECK(motif_kind_from_string("house") == MotifKind::House);
  CHECK_THROWS_AS(motif_kind_from_string("star"), ConfigError);
}

TEST_CASE("summary recount") {
  SyntheticSpec spec;
  spec.num_graphs = 50;
  auto data = gen_planted_motif(spec);
  auto s = summarize(data.graphs);
  double nodes = 0, edges = 0;
  std::size_t pos = 0;
  for (const auto& g : data.graphs) {
    nodes += static_cast<double>(g.num_nodes());
    edges += static_cast<double>(g.edges.size());
    pos += *g.label == 1.0;
  }
  CHECK(s.num_graphs == 50);
  CHECK(s.mean_nodes == doctest::Approx(nodes / 50));
  CHECK(s.mean_edges == doctest::Approx(edges / 50));
  CHECK(s.positives == pos);
  CHECK(s.negatives == 50 - pos);
}
