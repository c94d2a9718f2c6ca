#include "layerstitch/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <thread>

#include "layerstitch/error.hpp"

namespace layerstitch {

double RegressionTree::predict(std::span<const double> x) const {
  int idx = 0;
  while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(idx)];
    idx = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].mean;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const std::vector<double>> x, std::span<const double> y,
              const ForestParams& params, std::size_t mtry, Rng rng)
      : x_(x), y_(y), params_(params), mtry_(mtry), rng_(std::move(rng)) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    RegressionTree tree;
    grow(tree, rows, 0);
    return tree;
  }

 private:
  int grow(RegressionTree& tree, std::vector<std::size_t>& rows, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (auto r : rows) sum += y_[r];
    tree.nodes.back().mean = sum / static_cast<double>(rows.size());
    tree.nodes.back().count = rows.size();
    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf) return id;

    const Split split = best_split(rows);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (x_[r][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows) {
    const std::size_t dim = x_[0].size();
    std::vector<std::size_t> features(dim);
    std::iota(features.begin(), features.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(features));
    Split best;
    std::vector<std::pair<double, double>> col(rows.size());
    for (std::size_t fi = 0; fi < dim; ++fi) {
      // Standard forest behaviour: keep looking past mtry only while no
      // valid split has been found.
      if (fi >= mtry_ && best.feature >= 0) break;
      const std::size_t f = features[fi];
      for (std::size_t i = 0; i < rows.size(); ++i) col[i] = {x_[rows[i]][f], y_[rows[i]]};
      std::sort(col.begin(), col.end());
      if (col.front().first == col.back().first) continue;
      double total = 0.0, total_sq = 0.0;
      for (const auto& [v, t] : col) {
        total += t;
        total_sq += t * t;
      }
      const double n = static_cast<double>(col.size());
      const double sse_all = total_sq - total * total / n;
      double left = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < col.size(); ++i) {
        left += col[i].second;
        left_sq += col[i].second * col[i].second;
        if (col[i].first == col[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        if (nl < static_cast<double>(params_.min_leaf) || nr < static_cast<double>(params_.min_leaf)) continue;
        const double right = total - left;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left * left / nl) + (right_sq - right * right / nr);
        const double gain = sse_all - sse;
        if (gain > best.gain + 1e-15) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (col[i].first + col[i + 1].first);
        }
      }
    }
    return best;
  }

  std::span<const std::vector<double>> x_;
  std::span<const double> y_;
  const ForestParams& params_;
  std::size_t mtry_;
  Rng rng_;
};

}  // namespace

Forest fit_forest(std::span<const std::vector<double>> features, std::span<const double> targets,
                  const ForestParams& params) {
  if (features.empty()) throw ConfigError("fit: empty training set");
  if (features.size() != targets.size()) throw ConfigError("fit: features and targets differ in length");
  if (params.num_trees == 0) throw ConfigError("fit: num_trees must be positive");
  const std::size_t dim = features[0].size();
  for (const auto& row : features)
    if (row.size() != dim) throw ConfigError("fit: ragged feature matrix");
  const std::size_t mtry = params.max_features > 0
                               ? std::min(params.max_features, dim)
                               : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(dim))));
  Forest forest;
  forest.dim = dim;
  forest.trees.resize(params.num_trees);
  const std::size_t n = features.size();
  auto build_tree = [&](std::size_t t) {
    Rng rng(splitmix64(params.seed + 0x9e37 * (t + 1)));
    std::vector<std::size_t> rows(n);
    if (params.bootstrap)
      for (auto& r : rows) r = rng.uniform_index(n);
    else
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    TreeBuilder builder(features, targets, params, mtry, rng.split());
    forest.trees[t] = builder.build(std::move(rows));
  };
  const std::size_t workers = std::min(std::max<std::size_t>(1, params.threads), params.num_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < params.num_trees; ++t) build_tree(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < params.num_trees; t += workers) build_tree(t);
      });
  }
  return forest;
}

std::vector<double> surrogate_features(std::span<const double> encoding, std::size_t budget,
                                       std::size_t b_max) {
  std::vector<double> out(encoding.begin(), encoding.end());
  out.push_back(static_cast<double>(budget) / static_cast<double>(b_max));
  return out;
}

Forest fit(std::span<const TrialRecord> history, const ForestParams& params, std::size_t b_max) {
  if (history.empty()) throw ConfigError("fit: history is empty");
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& rec : history) {
    x.push_back(surrogate_features(rec.encoding, rec.budget, b_max));
    y.push_back(rec.scalarized);
  }
  return fit_forest(x, y, params);
}

Prediction predict(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.dim)
    throw ConfigError("predict: input has dimension " + std::to_string(x.size()) + ", forest expects " +
                      std::to_string(forest.dim));
  std::vector<double> per_tree;
  per_tree.reserve(forest.trees.size());
  for (const auto& tree : forest.trees) per_tree.push_back(tree.predict(x));
  const double n = static_cast<double>(per_tree.size());
  const double mean = std::accumulate(per_tree.begin(), per_tree.end(), 0.0) / n;
  double var = 0.0;
  for (double v : per_tree) var += (v - mean) * (v - mean);
  return {mean, var / n};
}

double expected_improvement(const Prediction& p, double incumbent) {
  const double sigma = std::sqrt(std::max(0.0, p.variance));
  const double gap = incumbent - p.mean;
  if (sigma < 1e-12) return std::max(gap, 0.0);
  const double z = gap / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, gap * cdf + sigma * pdf);
}

namespace {

// Draws uniform configs until one avoids both sets, giving up after `tries`.
Config draw_fresh(const SpaceSpec& spec, Rng& rng, const std::set<std::vector<double>>& taken,
                  const std::set<std::vector<double>>& excluded, std::size_t tries) {
  Config c = sample(spec, rng);
  for (std::size_t i = 1; i < tries; ++i) {
    const auto e = encode(c, spec);
    if (!taken.contains(e) && !excluded.contains(e)) break;
    c = sample(spec, rng);
  }
  return c;
}

}  // namespace

std::vector<Config> sample_configurations(std::size_t n, std::span<const TrialRecord> history,
                                          const SpaceSpec& spec, Rng& rng,
                                          const ProposalParams& params, std::size_t b_max) {
  if (n == 0) throw ConfigError("sample_configurations: n must be at least 1");
  check_spec(spec);
  if (history.empty()) return warm_start(spec, n, rng).configs;

  std::set<std::vector<double>> excluded;
  std::size_t top_budget = 0;
  for (const auto& rec : history) top_budget = std::max(top_budget, rec.budget);
  double incumbent = std::numeric_limits<double>::infinity();
  for (const auto& rec : history) {
    if (rec.budget == b_max) excluded.insert(rec.encoding);
    if (rec.budget == top_budget) incumbent = std::min(incumbent, rec.scalarized);
  }

  const std::size_t pool_size = std::max(params.pool_min, params.pool_per_n * n);
  std::vector<Config> out;
  std::set<std::vector<double>> taken;
  auto accept = [&](Config c) {
    taken.insert(encode(c, spec));
    out.push_back(std::move(c));
  };

  if (history.size() >= params.n_min_fit) {
    ForestParams fp = params.forest;
    fp.seed = rng.next_u64();
    const Forest forest = fit(history, fp, b_max);
    struct Scored {
      double ei;
      std::vector<double> encoding;
      std::size_t index;
    };
    std::vector<Config> pool;
    std::vector<Scored> scored;
    pool.reserve(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) {
      pool.push_back(sample(spec, rng));
      auto e = encode(pool.back(), spec);
      const double ei = expected_improvement(predict(forest, surrogate_features(e, b_max, b_max)), incumbent);
      scored.push_back({ei, std::move(e), i});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      if (a.ei != b.ei) return a.ei > b.ei;
      return a.encoding < b.encoding;
    });
    const auto want = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(params.rho * static_cast<double>(n) - 1e-9)), 1, n);
    for (const auto& s : scored) {
      if (out.size() >= want) break;
      if (taken.contains(s.encoding) || excluded.contains(s.encoding)) continue;
      accept(pool[s.index]);
    }
  }
  while (out.size() < n) accept(draw_fresh(spec, rng, taken, excluded, pool_size));
  return out;
}

}  // namespace layerstitch
