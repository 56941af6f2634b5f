#include "grea/layers.hpp"

#include <cmath>

namespace grea {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor::parameter({fan_in, fan_out}, std::move(values));
}

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {glorot_uniform(in, out, rng), Tensor::parameter({out}, std::vector<double>(out, 0.0))};
}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  Linear first = Linear::init(in, hidden, rng);
  Linear second = Linear::init(hidden, out, rng);
  return {std::move(first), std::move(second)};
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
}

void set_requires_grad(const ParamList& params, bool enabled) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(enabled);
  }
}

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace grea
