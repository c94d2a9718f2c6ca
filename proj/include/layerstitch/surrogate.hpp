#pragma once

// Random-forest surrogate over (config encoding, normalized budget) and the
// expected-improvement proposal rule used to sample new configurations.

#include <cstdint>
#include <span>
#include <vector>

#include "layerstitch/objective.hpp"
#include "layerstitch/rng.hpp"
#include "layerstitch/space.hpp"

namespace layerstitch {

enum class TrialStatus { kOk, kFailed };

// One evaluation. `t` doubles as the monotonic timestamp.
struct TrialRecord {
  std::size_t t = 0;
  int sweep = 0;
  int bracket_s = 0;
  int stage_i = 0;
  std::size_t budget = 0;
  LambdaWeights lambda;
  Config config;
  std::vector<double> encoding;
  ObjectiveVector objectives;
  double scalarized = 0.0;
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::kOk;
};

struct ForestParams {
  std::size_t num_trees = 32;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 2;
  bool bootstrap = true;
  // Features tried per split; 0 means floor(sqrt(d)).
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double mean = 0.0;
  std::size_t count = 0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
};

struct Forest {
  std::vector<RegressionTree> trees;
  std::size_t dim = 0;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Variance-reduction trees on bootstrap rows, splitting at midpoints of
// sorted unique feature values.
Forest fit_forest(std::span<const std::vector<double>> features, std::span<const double> targets,
                  const ForestParams& params);

// Features are encoding ++ [budget / b_max]; targets are scalarized values.
std::vector<double> surrogate_features(std::span<const double> encoding, std::size_t budget,
                                       std::size_t b_max);
Forest fit(std::span<const TrialRecord> history, const ForestParams& params, std::size_t b_max);

// Mean of per-tree predictions and their population variance.
Prediction predict(const Forest& forest, std::span<const double> x);

// Expected improvement below `incumbent` under N(mean, variance).
double expected_improvement(const Prediction& p, double incumbent);

struct ProposalParams {
  std::size_t n_min_fit = 16;
  std::size_t pool_min = 1000;
  std::size_t pool_per_n = 50;
  double rho = 0.7;
  ForestParams forest;
};

// Cold start (empty history): warm-start configs. Short history: uniform
// samples. Otherwise the top ceil(rho*n) pool members by expected improvement
// plus uniform samples for the rest. Configs already evaluated at b_max and
// duplicates within the batch are replaced by fresh samples while the space
// allows it.
std::vector<Config> sample_configurations(std::size_t n, std::span<const TrialRecord> history,
                                          const SpaceSpec& spec, Rng& rng,
                                          const ProposalParams& params, std::size_t b_max);

}  // namespace layerstitch
