#pragma once

// Stitching operators: layer selection, task-arithmetic merging, and layer
// folding, plus assembly of a pruned model from a config and a model family.

#include <span>
#include <vector>

#include "layerstitch/space.hpp"
#include "layerstitch/zoo.hpp"

namespace layerstitch {

// p_out = p_base + factor * sum_t (p_t - p_base) for every block tensor.
// The result keeps the base block's scale.
ResidualBlock task_arithmetic_layer(const ResidualBlock& base,
                                    std::span<const ResidualBlock* const> selected, double factor);

// Convex combination of `retained` with its folded neighbours. `importance`
// holds the retained layer's weight first, then one weight per neighbour; the
// weights are normalized to sum to one.
ResidualBlock fold_layers(const ResidualBlock& retained,
                          std::span<const ResidualBlock* const> removed_neighbors,
                          std::span<const double> importance);

// Normalized fold weights (beta), same layout as `importance`.
std::vector<double> fold_weights(std::span<const double> importance);

// Builds the pruned model. Retained blocks keep their original order.
// Prune configs: base block when no candidate is selected, the candidate's
// block for a single selection, task arithmetic over the selection otherwise;
// the layer's output_scale multiplies the residual branch. Fold configs fold
// every removed base layer into its fold_targets() receiver.
// Throws ConfigError for invalid configs or when every layer is removed.
LayeredModel assemble(const Config& config, const SpaceSpec& spec, const LayeredModel& base,
                      std::span<const LayeredModel> candidates);

}  // namespace layerstitch
