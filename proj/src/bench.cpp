#include "grea/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace grea {

Tensor explicit_pair_rep(const Graph& gi, const Graph& gj, std::span<const double> mask_i,
                         std::span<const double> mask_j, const EncoderConfig& config, const EncoderParams& params) {
  if (mask_i.size() != gi.num_nodes() || mask_j.size() != gj.num_nodes()) {
    throw ShapeError("explicit_pair_rep: mask length differs from node count");
  }
  const Graph pair[2] = {gi, gj};
  GraphBatch u = collate(pair);
  Tensor h = encode(u, config, params);

  const std::size_t n = u.num_nodes();
  std::vector<double> weights;
  weights.reserve(n);
  weights.insert(weights.end(), mask_i.begin(), mask_i.end());
  for (double m : mask_j) weights.push_back(1.0 - m);
  const std::vector<std::size_t> one_segment(n, 0);
  return segment_sum(Tensor({n, 1}, std::move(weights)) * h, one_segment, 1);
}

Tensor latent_pair_grid(const GraphBatch& batch, std::span<const double> mask, const EncoderConfig& config,
                        const EncoderParams& params) {
  const std::size_t n = batch.num_nodes();
  RationaleMask m{Tensor({n, 1}, {mask.begin(), mask.end()}), batch.segments, batch.num_graphs};
  Tensor h = encode(batch, config, params);
  return env_replace(separate(h, m), Aggregation::Sum, true).reps;
}

Tensor explicit_pair_grid(std::span<const Graph> graphs, std::span<const std::size_t> members,
                          std::span<const double> mask, const GraphBatch& batch, const EncoderConfig& config,
                          const EncoderParams& params) {
  const std::size_t b = members.size();
  auto node_mask = [&](std::size_t g) {
    return mask.subspan(batch.offsets[g], batch.graph_size(g));
  };
  std::vector<double> out;
  std::size_t d = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      Tensor cell = explicit_pair_rep(graphs[members[i]], graphs[members[j]], node_mask(i), node_mask(j), config,
                                      params);
      d = cell.cols();
      out.insert(out.end(), cell.values().begin(), cell.values().end());
    }
  }
  return Tensor({b * b, d}, std::move(out));
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os.precision(6);
  os << "B,t_latent_ms,t_explicit_ms,max_abs_dev,speedup\n";
  for (const auto& r : rows) {
    os << r.batch_size << ',' << r.t_latent_ms << ',' << r.t_explicit_ms << ',' << r.max_abs_dev << ','
       << r.speedup << '\n';
  }
  return os.str();
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_ms(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

BenchReport run_bench(std::span<const Graph> graphs, const Model& model, const BenchOptions& options) {
  if (options.reps < 1) throw ConfigError("bench needs at least one repetition");
  NoGradGuard no_grad;
  const EncoderConfig& config = model.config.predictor_encoder;
  const EncoderParams& params = model.predictor.gnn;

  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  BenchReport report;
  for (std::size_t b : options.batch_sizes) {
    if (b < 1 || b > graphs.size()) {
      throw ConfigError("bench batch size " + std::to_string(b) + " needs between 1 and " +
                        std::to_string(graphs.size()) + " graphs");
    }
    std::span<const std::size_t> members(order.data(), b);
    GraphBatch batch = collate(graphs, members);
    Tensor mask_t = compute_mask(batch, model.config.separator_encoder, model.separator).m;
    std::vector<double> mask(mask_t.values().begin(), mask_t.values().end());

    Tensor latent, expl;
    latent = latent_pair_grid(batch, mask, config, params);  // warm-up
    std::vector<double> t_latent, t_explicit;
    for (std::size_t r = 0; r < options.reps; ++r) {
      t_latent.push_back(time_ms([&] { latent = latent_pair_grid(batch, mask, config, params); }));
      t_explicit.push_back(time_ms([&] { expl = explicit_pair_grid(graphs, members, mask, batch, config, params); }));
    }

    BenchRow row;
    row.batch_size = b;
    row.t_latent_ms = median(t_latent);
    row.t_explicit_ms = median(t_explicit);
    auto lv = latent.values();
    auto ev = expl.values();
    for (std::size_t k = 0; k < lv.size(); ++k) row.max_abs_dev = std::max(row.max_abs_dev, std::abs(lv[k] - ev[k]));
    row.speedup = row.t_explicit_ms / std::max(row.t_latent_ms, 1e-9);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace grea
