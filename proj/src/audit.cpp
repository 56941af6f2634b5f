#include "grea/audit.hpp"

#include <algorithm>

namespace grea {

GradientAudit audit_gradients(const Model& model, const GraphBatch& batch, const AugConfig& aug, double eps) {
  ParamList named = model.all_params();
  set_requires_grad(named, true);
  std::vector<Tensor> params = tensors_of(named);
  GradientAudit audit;
  audit.sep = grad_check([&] { return forward(model, batch, aug).l_sep; }, params, eps);
  audit.pred = grad_check([&] { return forward(model, batch, aug).l_pred; }, params, eps);
  return audit;
}

TrainConfig audit_config(TrainConfig config) {
  config.sep_dim = std::min(config.sep_dim, kAuditWidth);
  config.pred_dim = std::min(config.pred_dim, kAuditWidth);
  return config;
}

GraphBatch audit_batch(std::size_t num_graphs, std::size_t feature_dim, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_graphs = num_graphs;
  spec.base_min = 4;
  spec.base_max = 7;
  spec.feature_dim = feature_dim;
  spec.seed = seed;
  spec.ratios = {1.0, 0.0, 0.0};
  return collate(gen_planted_motif(spec).graphs);
}

}  // namespace grea
