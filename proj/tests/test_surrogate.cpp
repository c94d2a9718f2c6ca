#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "layerstitch/error.hpp"
#include "layerstitch/surrogate.hpp"

using namespace layerstitch;

namespace {

RegressionTree leaf(double mean) {
  RegressionTree t;
  TreeNode n;
  n.mean = mean;
  n.count = 1;
  t.nodes.push_back(n);
  return t;
}

TrialRecord record(const Config& c, const SpaceSpec& spec, std::size_t budget, double y) {
  TrialRecord r;
  r.config = c;
  r.encoding = encode(c, spec);
  r.budget = budget;
  r.scalarized = y;
  r.lambda = LambdaWeights::from_values({1.0});
  r.objectives.values = {y};
  return r;
}

// Layer 0 removed scores 0.1, anything else 0.9.
std::vector<TrialRecord> separable_history(const SpaceSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrialRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Config c = sample(spec, rng);
    out.push_back(record(c, spec, 1000, removal_bits(c)[0] ? 0.1 : 0.9));
  }
  return out;
}

}  // namespace

TEST_CASE("constant targets predict the constant everywhere") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    x.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    y.push_back(0.37);
  }
  const Forest f = fit_forest(x, y, ForestParams{});
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> q = {rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(-1, 2)};
    const Prediction p = predict(f, q);
    CHECK(p.mean == doctest::Approx(0.37).epsilon(1e-14));
    CHECK(p.variance == doctest::Approx(0.0).epsilon(1e-20));
  }
}

TEST_CASE("one depth-1 tree splits two points at the midpoint") {
  const std::vector<std::vector<double>> x = {{0.0}, {1.0}};
  const std::vector<double> y = {0.0, 1.0};
  ForestParams p;
  p.num_trees = 1;
  p.max_depth = 1;
  p.min_leaf = 1;
  p.bootstrap = false;
  const Forest f = fit_forest(x, y, p);
  REQUIRE(f.trees[0].nodes.size() == 3);
  CHECK(f.trees[0].nodes[0].threshold == 0.5);
  const double zero[] = {0.0}, one[] = {1.0};
  CHECK(predict(f, zero).mean == 0.0);
  CHECK(predict(f, one).mean == 1.0);
  CHECK(predict(f, zero).variance == 0.0);
}

TEST_CASE("predictions stay within the training target range") {
  Rng rng(2);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 120; ++i) {
    x.push_back({rng.uniform01(), rng.uniform01()});
    y.push_back(std::sin(6 * x.back()[0]) + x.back()[1]);
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const Forest f = fit_forest(x, y, ForestParams{});
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> q = {rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)};
    const Prediction p = predict(f, q);
    CHECK(p.mean >= *lo);
    CHECK(p.mean <= *hi);
    CHECK(std::isfinite(p.variance));
    CHECK(p.variance >= 0.0);
  }
}

TEST_CASE("every leaf mean is the average of its training targets") {
  Rng rng(3);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 60; ++i) {
    x.push_back({static_cast<double>(rng.uniform_index(6)), rng.uniform01()});
    y.push_back(rng.uniform01());
  }
  ForestParams p;
  p.num_trees = 1;
  p.bootstrap = false;
  const Forest f = fit_forest(x, y, p);
  const auto& tree = f.trees[0];
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    int idx = 0;
    while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
      const auto& n = tree.nodes[static_cast<std::size_t>(idx)];
      idx = x[i][static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    acc[idx].first += y[i];
    acc[idx].second += 1;
  }
  for (const auto& [idx, s] : acc) {
    const auto& n = tree.nodes[static_cast<std::size_t>(idx)];
    CHECK(n.mean == doctest::Approx(s.first / s.second).epsilon(1e-12));
    CHECK(n.count == static_cast<std::size_t>(s.second));
    CHECK(n.count >= p.min_leaf);
  }
}

TEST_CASE("forest variance examples") {
  Forest one;
  one.dim = 1;
  one.trees = {leaf(4.0)};
  const double x[] = {0.0};
  CHECK(predict(one, x).variance == 0.0);
  Forest dup;
  dup.dim = 1;
  dup.trees = {leaf(2.5), leaf(2.5), leaf(2.5)};
  CHECK(predict(dup, x).mean == 2.5);
  CHECK(predict(dup, x).variance == 0.0);
  Forest two;
  two.dim = 1;
  two.trees = {leaf(1.0), leaf(3.0)};
  CHECK(predict(two, x).mean == 2.0);
  CHECK(predict(two, x).variance == 1.0);
  const double wrong[] = {0.0, 1.0};
  CHECK_THROWS_AS(predict(two, wrong), ConfigError);
}

TEST_CASE("fit is deterministic and rejects an empty history") {
  const SpaceSpec spec = make_space_spec(8, 3, Rational{1, 4});
  const auto hist = separable_history(spec, 40, 5);
  ForestParams p;
  p.seed = 11;
  const Forest a = fit(hist, p, 1000), b = fit(hist, p, 1000);
  ForestParams pt = p;
  pt.threads = 3;
  const Forest c = fit(hist, pt, 1000);
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const auto e = encode(sample(spec, rng), spec);
    const auto q = surrogate_features(e, 300, 1000);
    CHECK(predict(a, q).mean == predict(b, q).mean);
    CHECK(predict(a, q).variance == predict(c, q).variance);
  }
  CHECK_THROWS_AS(fit(std::span<const TrialRecord>{}, p, 1000), ConfigError);
  CHECK(surrogate_features(std::vector<double>{1.0, 2.0}, 300, 1000).back() == 0.3);
}

TEST_CASE("expected improvement properties") {
  CHECK(expected_improvement({0.9, 0.0}, 0.1) == 0.0);
  CHECK(expected_improvement({0.05, 0.0}, 0.1) == doctest::Approx(0.05));
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const Prediction p{rng.uniform(-1, 1), rng.uniform(0, 0.5)};
    CHECK(expected_improvement(p, rng.uniform(-1, 1)) >= 0.0);
  }
  // Closed form at mean == incumbent: sigma * phi(0).
  CHECK(expected_improvement({0.5, 0.04}, 0.5) == doctest::Approx(0.2 * 0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("cold start returns warm-start configs") {
  const SpaceSpec spec = make_space_spec(8, 3, Rational{1, 4});
  Rng rng(1), ref(1);
  const auto out = sample_configurations(9, {}, spec, rng, ProposalParams{}, 1000);
  CHECK(out.size() == 9);
  CHECK(out == warm_start(spec, 9, ref).configs);
  for (const auto& c : out) CHECK(validate(c, spec).empty());
}

TEST_CASE("short history gives valid distinct uniform samples") {
  const SpaceSpec spec = make_space_spec(8, 3, Rational{1, 4});
  const auto hist = separable_history(spec, 5, 2);
  Rng rng(3);
  const auto out = sample_configurations(20, hist, spec, rng, ProposalParams{}, 1000);
  REQUIRE(out.size() == 20);
  std::set<std::vector<double>> encs;
  for (const auto& c : out) {
    CHECK(validate(c, spec).empty());
    encs.insert(encode(c, spec));
  }
  CHECK(encs.size() == 20);
  for (const auto& h : hist) CHECK_FALSE(encs.contains(h.encoding));
}

TEST_CASE("EI picks concentrate in the better region") {
  const SpaceSpec spec = make_space_spec(8, 3, Rational{1, 4});
  const std::size_t n = 9;
  const std::size_t need = 7;  // ceil(0.7 * 9)
  int good_seeds = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto hist = separable_history(spec, 60, 100 + seed);
    Rng rng(seed);
    ProposalParams params;
    params.forest.seed = seed;
    const auto out = sample_configurations(n, hist, spec, rng, params, 1000);
    REQUIRE(out.size() == n);
    std::size_t in_region = 0;
    for (const auto& c : out) {
      CHECK(validate(c, spec).empty());
      in_region += removal_bits(c)[0];
    }
    good_seeds += in_region >= need;
  }
  CHECK(good_seeds >= 9);
}

TEST_CASE("n = 1 with a rich history keeps one EI pick") {
  const SpaceSpec spec = make_space_spec(8, 3, Rational{1, 4});
  const auto hist = separable_history(spec, 60, 9);
  Rng rng(4);
  const auto out = sample_configurations(1, hist, spec, rng, ProposalParams{}, 1000);
  REQUIRE(out.size() == 1);
  CHECK(removal_bits(out[0])[0] == 1);
}

TEST_CASE("proposals avoid configs already evaluated at full budget") {
  SpaceSpec spec = fixtures::space_108();
  const auto all = enumerate_all(spec);
  std::vector<TrialRecord> hist;
  for (std::size_t i = 0; i < 100; ++i) hist.push_back(record(all[i], spec, 1000, 0.5));
  Rng rng(8);
  ProposalParams params;
  params.pool_min = 200;
  const auto out = sample_configurations(8, hist, spec, rng, params, 1000);
  std::set<std::vector<double>> left;
  for (std::size_t i = 100; i < 108; ++i) left.insert(encode(all[i], spec));
  std::set<std::vector<double>> got;
  for (const auto& c : out) got.insert(encode(c, spec));
  CHECK(got == left);
}
