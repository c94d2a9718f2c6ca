#include "layerstitch/merge.hpp"

#include <cmath>
#include <numeric>

#include "layerstitch/error.hpp"

namespace layerstitch {

ResidualBlock task_arithmetic_layer(const ResidualBlock& base,
                                    std::span<const ResidualBlock* const> selected, double factor) {
  Matrix d_w1 = Matrix::Zero(base.W1.rows(), base.W1.cols());
  Vector d_b1 = Vector::Zero(base.b1.size());
  Matrix d_w2 = Matrix::Zero(base.W2.rows(), base.W2.cols());
  Vector d_b2 = Vector::Zero(base.b2.size());
  for (const ResidualBlock* t : selected) {
    if (!t->same_shape(base)) throw ConfigError("task_arithmetic_layer: shape mismatch");
    d_w1 += t->W1 - base.W1;
    d_b1 += t->b1 - base.b1;
    d_w2 += t->W2 - base.W2;
    d_b2 += t->b2 - base.b2;
  }
  ResidualBlock out = base;
  out.W1 += factor * d_w1;
  out.b1 += factor * d_b1;
  out.W2 += factor * d_w2;
  out.b2 += factor * d_b2;
  return out;
}

std::vector<double> fold_weights(std::span<const double> importance) {
  if (importance.empty()) throw ConfigError("fold_layers: empty importance");
  double total = 0.0;
  for (double w : importance) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("fold_layers: importance must be positive");
    total += w;
  }
  std::vector<double> beta(importance.begin(), importance.end());
  for (double& b : beta) b /= total;
  return beta;
}

ResidualBlock fold_layers(const ResidualBlock& retained,
                          std::span<const ResidualBlock* const> removed_neighbors,
                          std::span<const double> importance) {
  if (importance.size() != removed_neighbors.size() + 1)
    throw ConfigError("fold_layers: need one importance per participating layer");
  const auto beta = fold_weights(importance);
  if (removed_neighbors.empty()) return retained;
  // sum_j beta_j L_j written as L_0 + sum_{j>0} beta_j (L_j - L_0): equal
  // participants then reproduce L_0 bit for bit.
  ResidualBlock out = retained;
  for (std::size_t j = 0; j < removed_neighbors.size(); ++j) {
    const ResidualBlock& n = *removed_neighbors[j];
    if (!n.same_shape(retained)) throw ConfigError("fold_layers: shape mismatch");
    out.W1 += beta[j + 1] * (n.W1 - retained.W1);
    out.b1 += beta[j + 1] * (n.b1 - retained.b1);
    out.W2 += beta[j + 1] * (n.W2 - retained.W2);
    out.b2 += beta[j + 1] * (n.b2 - retained.b2);
  }
  return out;
}

namespace {

void check_family(const SpaceSpec& spec, const LayeredModel& base,
                  std::span<const LayeredModel> candidates, bool need_candidates) {
  if (base.num_layers() != spec.l)
    throw ConfigError("assemble: base has " + std::to_string(base.num_layers()) +
                      " layers, space expects l = " + std::to_string(spec.l));
  if (need_candidates && static_cast<int>(candidates.size()) != spec.K)
    throw ConfigError("assemble: " + std::to_string(candidates.size()) +
                      " candidates given, space expects K = " + std::to_string(spec.K));
  for (const auto& c : candidates)
    if (c.shape() != base.shape()) throw ConfigError("assemble: candidate '" + c.label + "' is not shape-compatible");
}

}  // namespace

LayeredModel assemble(const Config& config, const SpaceSpec& spec, const LayeredModel& base,
                      std::span<const LayeredModel> candidates) {
  const auto problems = validate(config, spec);
  if (!problems.empty()) throw ConfigError("assemble: invalid config: " + problems.front());
  if (removed_count(config) >= spec.l) throw ConfigError("assemble: every layer removed (empty model)");

  LayeredModel out;
  out.input_dim = base.input_dim;
  out.hidden_dim = base.hidden_dim;
  out.num_classes = base.num_classes;
  out.head = base.head;
  out.label = "stitched";
  const auto l = static_cast<std::size_t>(spec.l);

  if (const auto* fold = std::get_if<FoldConfig>(&config)) {
    check_family(spec, base, candidates, false);
    const auto target = fold_targets(fold->fold_select);
    for (std::size_t i = 0; i < l; ++i) {
      if (fold->fold_select[i]) continue;
      std::vector<const ResidualBlock*> neighbors;
      std::vector<double> weights{fold->importance[i]};
      for (std::size_t j = 0; j < l; ++j) {
        if (fold->fold_select[j] && target[j] == static_cast<int>(i)) {
          neighbors.push_back(&base.blocks[j]);
          weights.push_back(fold->importance[j]);
        }
      }
      out.blocks.push_back(fold_layers(base.blocks[i], neighbors, weights));
    }
    return out;
  }

  const auto& cfg = std::get<PruneConfig>(config);
  check_family(spec, base, candidates, true);
  for (std::size_t i = 0; i < l; ++i) {
    if (cfg.r[i]) continue;
    std::vector<const ResidualBlock*> selected;
    for (std::size_t j = 0; j < cfg.c[i].size(); ++j)
      if (cfg.c[i][j]) selected.push_back(&candidates[j].blocks[i]);
    ResidualBlock block;
    if (selected.empty()) {
      block = base.blocks[i];
    } else if (selected.size() == 1) {
      block = *selected.front();
    } else {
      if (cfg.m[i] != 1) throw ConfigError("assemble: merge method " + std::to_string(cfg.m[i]) + " is not implemented");
      block = task_arithmetic_layer(base.blocks[i], selected, cfg.merge_factor[i]);
    }
    block.scale = cfg.output_scale[i];
    out.blocks.push_back(std::move(block));
  }
  return out;
}

}  // namespace layerstitch
