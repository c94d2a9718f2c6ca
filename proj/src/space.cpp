#include "layerstitch/space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "layerstitch/error.hpp"

namespace layerstitch {

std::string to_string(SpaceMode mode) {
  switch (mode) {
    case SpaceMode::kFull: return "full";
    case SpaceMode::kRemoveOnly: return "remove_only";
    case SpaceMode::kSelectRemove: return "select_remove";
    case SpaceMode::kFold: return "fold";
  }
  return "unknown";
}

SpaceMode parse_space_mode(const std::string& name) {
  if (name == "full") return SpaceMode::kFull;
  if (name == "remove_only") return SpaceMode::kRemoveOnly;
  if (name == "select_remove") return SpaceMode::kSelectRemove;
  if (name == "fold") return SpaceMode::kFold;
  throw ConfigError("unknown space mode '" + name + "'");
}

double mode_code(SpaceMode mode) { return static_cast<double>(static_cast<int>(mode)); }

Rational Rational::from_double(double value) {
  if (!std::isfinite(value)) throw ConfigError("sparsity must be finite");
  constexpr std::int64_t kDen = 1'000'000'000;
  Rational r{std::llround(value * static_cast<double>(kDen)), kDen};
  const std::int64_t g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

Rational Rational::parse(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return from_double(std::stod(text));
    Rational r{std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
    if (r.den <= 0) throw ConfigError("sparsity denominator must be positive: '" + text + "'");
    const std::int64_t g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
    if (g > 1) {
      r.num /= g;
      r.den /= g;
    }
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse sparsity '" + text + "'");
  }
}

std::string Rational::str() const { return std::to_string(num) + "/" + std::to_string(den); }

int ceil_remove_count(int l, const Rational& s) {
  if (s.den <= 0 || s.num < 0) throw ConfigError("sparsity must be a nonnegative rational");
  const std::int64_t prod = static_cast<std::int64_t>(l) * s.num;
  return static_cast<int>((prod + s.den - 1) / s.den);
}

std::vector<double> default_merge_factor_grid() {
  std::vector<double> g;
  for (int k = 50; k <= 100; k += 5) g.push_back(k / 100.0);
  return g;
}

std::vector<double> default_output_scale_grid() {
  std::vector<double> g;
  for (int k = 5; k <= 15; ++k) g.push_back(k / 10.0);
  return g;
}

std::vector<double> default_importance_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(k / 10.0);
  return g;
}

SpaceSpec make_space_spec(int l, int K, Rational sparsity, SpaceMode mode) {
  SpaceSpec spec;
  spec.l = l;
  spec.K = K;
  spec.sparsity = sparsity;
  spec.remove_count = ceil_remove_count(l, sparsity);
  spec.merge_factor_grid = default_merge_factor_grid();
  spec.output_scale_grid = default_output_scale_grid();
  spec.importance_grid = default_importance_grid();
  spec.mode = mode;
  return spec;
}

namespace {

void check_grid(const std::vector<double>& grid, const char* name, double lo, double hi,
                bool open_lo) {
  if (grid.empty()) throw ConfigError(std::string(name) + " must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = grid[i];
    if (!std::isfinite(v) || v > hi || v < lo || (open_lo && v <= lo))
      throw ConfigError(std::string(name) + " value " + std::to_string(v) + " outside its range");
    if (i > 0 && !(grid[i - 1] < v))
      throw ConfigError(std::string(name) + " must be strictly increasing");
  }
}

bool on_grid(double v, const std::vector<double>& grid) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

double nearest_one(const std::vector<double>& grid) { return snap_to_grid(1.0, grid); }

}  // namespace

void check_spec(const SpaceSpec& spec) {
  if (spec.l < 1) throw ConfigError("space: l must be positive");
  if (spec.K < 0) throw ConfigError("space: K must be nonnegative");
  if (spec.K > 20) throw ConfigError("space: K larger than 20 is not supported");
  if (spec.sparsity.den <= 0 || spec.sparsity.num < 0 || spec.sparsity.num > spec.sparsity.den)
    throw ConfigError("space: sparsity must lie in [0, 1]");
  if (spec.remove_count > spec.l)
    throw ConfigError("space: remove_count " + std::to_string(spec.remove_count) +
                      " exceeds l = " + std::to_string(spec.l));
  const int expected = ceil_remove_count(spec.l, spec.sparsity);
  if (spec.remove_count != expected)
    throw ConfigError("space: remove_count " + std::to_string(spec.remove_count) +
                      " != ceil(l*s) = " + std::to_string(expected));
  if (spec.Z != 1) throw ConfigError("space: only Z = 1 (task arithmetic) is implemented");
  check_grid(spec.merge_factor_grid, "merge_factor_grid", 0.5, 1.0, false);
  check_grid(spec.output_scale_grid, "output_scale_grid", 0.5, 1.5, false);
  if (spec.mode == SpaceMode::kFold) check_grid(spec.importance_grid, "importance_grid", 0.0, 1.0, true);
}

int PruneConfig::selected(std::size_t layer) const {
  int n = 0;
  for (auto bit : c[layer]) n += bit != 0;
  return n;
}

int removed_count(const Config& config) {
  const auto& bits = removal_bits(config);
  return static_cast<int>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

const std::vector<std::uint8_t>& removal_bits(const Config& config) {
  if (const auto* p = std::get_if<PruneConfig>(&config)) return p->r;
  return std::get<FoldConfig>(config).fold_select;
}

namespace {

PruneConfig defaults(const SpaceSpec& spec) {
  PruneConfig cfg;
  const auto l = static_cast<std::size_t>(spec.l);
  cfg.r.assign(l, 0);
  cfg.c.assign(l, std::vector<std::uint8_t>(static_cast<std::size_t>(spec.K), 0));
  cfg.merge_factor.assign(l, 1.0);
  cfg.output_scale.assign(l, 1.0);
  cfg.m.assign(l, 1);
  return cfg;
}

}  // namespace

PruneConfig identity_config(const SpaceSpec& spec) {
  PruneConfig cfg = defaults(spec);
  const double one = nearest_one(spec.output_scale_grid);
  std::fill(cfg.output_scale.begin(), cfg.output_scale.end(), one);
  return cfg;
}

std::vector<int> fold_targets(const std::vector<std::uint8_t>& removed) {
  const int l = static_cast<int>(removed.size());
  std::vector<int> target(removed.size(), -1);
  int first_retained = -1;
  for (int i = 0; i < l; ++i)
    if (!removed[i]) {
      first_retained = i;
      break;
    }
  int below = -1;
  for (int i = 0; i < l; ++i) {
    if (!removed[i]) {
      below = i;
      target[i] = i;
    } else {
      target[i] = below >= 0 ? below : first_retained;
    }
  }
  return target;
}

namespace {

// Layers whose importance weight participates in some fold.
std::vector<std::uint8_t> fold_active(const std::vector<std::uint8_t>& removed) {
  const auto target = fold_targets(removed);
  std::vector<std::uint8_t> active(removed.size(), 0);
  for (std::size_t j = 0; j < removed.size(); ++j) {
    if (removed[j] && target[j] >= 0) {
      active[j] = 1;
      active[static_cast<std::size_t>(target[j])] = 1;
    }
  }
  return active;
}

std::vector<std::uint8_t> placement(const SpaceSpec& spec, const std::vector<std::size_t>& idx) {
  std::vector<std::uint8_t> r(static_cast<std::size_t>(spec.l), 0);
  for (auto i : idx) r[i] = 1;
  return r;
}

template <typename T>
const T& pick(const std::vector<T>& grid, Rng& rng) {
  return grid[rng.uniform_index(grid.size())];
}

void sample_layer(const SpaceSpec& spec, PruneConfig& cfg, std::size_t i, Rng& rng) {
  auto& row = cfg.c[i];
  switch (spec.mode) {
    case SpaceMode::kRemoveOnly: break;
    case SpaceMode::kSelectRemove: {
      const auto choice = rng.uniform_index(static_cast<std::uint64_t>(spec.K) + 1);
      if (choice > 0) row[choice - 1] = 1;
      break;
    }
    default:
      for (auto& bit : row) bit = rng.coin() ? 1 : 0;
      break;
  }
  if (cfg.selected(i) > 1) {
    cfg.merge_factor[i] = pick(spec.merge_factor_grid, rng);
    cfg.m[i] = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.Z)));
  }
  cfg.output_scale[i] = pick(spec.output_scale_grid, rng);
}

FoldConfig make_fold(const SpaceSpec& spec, std::vector<std::uint8_t> removed, Rng* rng) {
  FoldConfig cfg;
  cfg.importance.assign(removed.size(), 1.0);
  const auto active = fold_active(removed);
  const double one = nearest_one(spec.importance_grid);
  for (std::size_t i = 0; i < removed.size(); ++i)
    if (active[i]) cfg.importance[i] = rng ? pick(spec.importance_grid, *rng) : one;
  cfg.fold_select = std::move(removed);
  return cfg;
}

}  // namespace

Config sample(const SpaceSpec& spec, Rng& rng) {
  check_spec(spec);
  auto removed = placement(spec, rng.subset(static_cast<std::size_t>(spec.l),
                                            static_cast<std::size_t>(spec.remove_count)));
  if (spec.mode == SpaceMode::kFold) return make_fold(spec, std::move(removed), &rng);
  PruneConfig cfg = defaults(spec);
  cfg.r = std::move(removed);
  for (std::size_t i = 0; i < cfg.r.size(); ++i)
    if (!cfg.r[i]) sample_layer(spec, cfg, i, rng);
  return cfg;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void validate_prune(const PruneConfig& cfg, const SpaceSpec& spec, std::vector<std::string>& out) {
  const auto l = static_cast<std::size_t>(spec.l);
  if (cfg.r.size() != l || cfg.c.size() != l || cfg.merge_factor.size() != l ||
      cfg.output_scale.size() != l || cfg.m.size() != l) {
    out.push_back("shape: per-layer fields must have length l = " + std::to_string(spec.l));
    return;
  }
  int removed = 0;
  for (std::size_t i = 0; i < l; ++i) {
    if (cfg.r[i] > 1) out.push_back("r[" + std::to_string(i) + "] is not a bit");
    removed += cfg.r[i] != 0;
    if (cfg.c[i].size() != static_cast<std::size_t>(spec.K)) {
      out.push_back("shape: c[" + std::to_string(i) + "] must have length K = " + std::to_string(spec.K));
      return;
    }
  }
  if (removed != spec.remove_count)
    out.push_back("sparsity constraint: " + std::to_string(removed) + " layers removed, expected " +
                  std::to_string(spec.remove_count) + " = ceil(l*s)");
  for (std::size_t i = 0; i < l; ++i) {
    const std::string at = "[" + std::to_string(i) + "]";
    for (auto bit : cfg.c[i])
      if (bit > 1) out.push_back("c" + at + " contains a non-bit");
    const int sel = cfg.selected(i);
    if (cfg.r[i]) {
      if (sel != 0 || cfg.merge_factor[i] != 1.0 || cfg.output_scale[i] != 1.0 || cfg.m[i] != 1)
        out.push_back("canonical defaults: removed layer" + at +
                      " must carry c = 0, merge_factor = 1, output_scale = 1, m = 1");
      continue;
    }
    if (spec.mode == SpaceMode::kRemoveOnly && sel != 0)
      out.push_back("mode remove_only: layer" + at + " selects a candidate");
    if (spec.mode == SpaceMode::kSelectRemove && sel > 1)
      out.push_back("mode select_remove: layer" + at + " merges " + std::to_string(sel) + " candidates");
    if (sel > 1) {
      if (!on_grid(cfg.merge_factor[i], spec.merge_factor_grid))
        out.push_back("merge_factor" + at + " = " + fmt(cfg.merge_factor[i]) + " not in merge_factor_grid");
      if (cfg.m[i] < 1 || cfg.m[i] > spec.Z)
        out.push_back("m" + at + " = " + std::to_string(cfg.m[i]) + " outside [1, Z]");
    } else if (cfg.merge_factor[i] != 1.0 || cfg.m[i] != 1) {
      out.push_back("canonical defaults: layer" + at +
                    " does not merge, so merge_factor and m must be 1");
    }
    if (!on_grid(cfg.output_scale[i], spec.output_scale_grid))
      out.push_back("output_scale" + at + " = " + fmt(cfg.output_scale[i]) + " not in output_scale_grid");
  }
}

void validate_fold(const FoldConfig& cfg, const SpaceSpec& spec, std::vector<std::string>& out) {
  const auto l = static_cast<std::size_t>(spec.l);
  if (cfg.fold_select.size() != l || cfg.importance.size() != l) {
    out.push_back("shape: fold_select and importance must have length l = " + std::to_string(spec.l));
    return;
  }
  int removed = 0;
  for (auto b : cfg.fold_select) {
    if (b > 1) out.push_back("fold_select contains a non-bit");
    removed += b != 0;
  }
  if (removed != spec.remove_count)
    out.push_back("sparsity constraint: " + std::to_string(removed) + " layers folded, expected " +
                  std::to_string(spec.remove_count) + " = ceil(l*s)");
  const auto active = fold_active(cfg.fold_select);
  for (std::size_t i = 0; i < l; ++i) {
    const std::string at = "importance[" + std::to_string(i) + "]";
    const double w = cfg.importance[i];
    if (!(w > 0.0 && w <= 1.0)) out.push_back(at + " = " + fmt(w) + " outside (0, 1]");
    if (active[i]) {
      if (!on_grid(w, spec.importance_grid)) out.push_back(at + " = " + fmt(w) + " not in importance_grid");
    } else if (w != 1.0) {
      out.push_back("canonical defaults: " + at + " is inert and must be 1");
    }
  }
}

}  // namespace

std::vector<std::string> validate(const Config& config, const SpaceSpec& spec) {
  std::vector<std::string> out;
  if (const auto* p = std::get_if<PruneConfig>(&config)) {
    if (spec.mode == SpaceMode::kFold) out.push_back("mode fold expects a fold config");
    validate_prune(*p, spec, out);
  } else {
    if (spec.mode != SpaceMode::kFold) out.push_back("mode " + to_string(spec.mode) + " does not accept a fold config");
    validate_fold(std::get<FoldConfig>(config), spec, out);
  }
  return out;
}

double snap_to_grid(double value, const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("snap_to_grid: empty grid");
  double best = grid.front();
  double best_dist = std::abs(value - best);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double d = std::abs(value - grid[i]);
    if (d < best_dist) {
      best = grid[i];
      best_dist = d;
    }
  }
  return best;
}

namespace {

std::vector<std::uint8_t> repair_removals(std::vector<std::uint8_t> r, const SpaceSpec& spec, Rng& rng) {
  r.resize(static_cast<std::size_t>(spec.l), 0);
  for (auto& b : r) b = b ? 1 : 0;
  auto indices = [&](std::uint8_t value) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r.size(); ++i)
      if (r[i] == value) idx.push_back(i);
    return idx;
  };
  int count = static_cast<int>(std::count(r.begin(), r.end(), 1));
  while (count > spec.remove_count) {
    const auto idx = indices(1);
    r[idx[rng.uniform_index(idx.size())]] = 0;
    --count;
  }
  while (count < spec.remove_count) {
    const auto idx = indices(0);
    r[idx[rng.uniform_index(idx.size())]] = 1;
    ++count;
  }
  return r;
}

}  // namespace

Config repair(const Config& config, const SpaceSpec& spec, Rng& rng) {
  check_spec(spec);
  const auto l = static_cast<std::size_t>(spec.l);
  if (spec.mode == SpaceMode::kFold) {
    FoldConfig in;
    if (const auto* f = std::get_if<FoldConfig>(&config)) in = *f;
    else in.fold_select = std::get<PruneConfig>(config).r;
    FoldConfig out;
    out.fold_select = repair_removals(in.fold_select, spec, rng);
    in.importance.resize(l, 1.0);
    const auto active = fold_active(out.fold_select);
    out.importance.assign(l, 1.0);
    for (std::size_t i = 0; i < l; ++i)
      if (active[i]) out.importance[i] = snap_to_grid(in.importance[i], spec.importance_grid);
    return out;
  }

  PruneConfig cfg;
  if (const auto* p = std::get_if<PruneConfig>(&config)) cfg = *p;
  else cfg.r = std::get<FoldConfig>(config).fold_select;
  cfg.r = repair_removals(cfg.r, spec, rng);
  cfg.c.resize(l);
  cfg.merge_factor.resize(l, 1.0);
  cfg.output_scale.resize(l, 1.0);
  cfg.m.resize(l, 1);
  for (std::size_t i = 0; i < l; ++i) {
    auto& row = cfg.c[i];
    row.resize(static_cast<std::size_t>(spec.K), 0);
    for (auto& b : row) b = b ? 1 : 0;
    if (cfg.r[i]) {
      std::fill(row.begin(), row.end(), 0);
      cfg.merge_factor[i] = 1.0;
      cfg.output_scale[i] = 1.0;
      cfg.m[i] = 1;
      continue;
    }
    if (spec.mode == SpaceMode::kRemoveOnly) std::fill(row.begin(), row.end(), 0);
    if (spec.mode == SpaceMode::kSelectRemove && cfg.selected(i) > 1) {
      std::vector<std::size_t> on;
      for (std::size_t j = 0; j < row.size(); ++j)
        if (row[j]) on.push_back(j);
      const auto keep = on[rng.uniform_index(on.size())];
      std::fill(row.begin(), row.end(), 0);
      row[keep] = 1;
    }
    if (cfg.selected(i) > 1) {
      cfg.merge_factor[i] = snap_to_grid(cfg.merge_factor[i], spec.merge_factor_grid);
      cfg.m[i] = std::clamp(cfg.m[i], 1, spec.Z);
    } else {
      cfg.merge_factor[i] = 1.0;
      cfg.m[i] = 1;
    }
    cfg.output_scale[i] = snap_to_grid(cfg.output_scale[i], spec.output_scale_grid);
  }
  return cfg;
}

std::size_t encoding_length(const SpaceSpec& spec) {
  return static_cast<std::size_t>(spec.l) * static_cast<std::size_t>(1 + spec.K + 2) + 1;
}

std::vector<double> encode(const Config& config, const SpaceSpec& spec) {
  const auto problems = validate(config, spec);
  if (!problems.empty()) throw ConfigError("encode: invalid config: " + problems.front());
  std::vector<double> out;
  out.reserve(encoding_length(spec));
  const auto l = static_cast<std::size_t>(spec.l);
  if (const auto* p = std::get_if<PruneConfig>(&config)) {
    for (std::size_t i = 0; i < l; ++i) {
      out.push_back(p->r[i]);
      for (auto bit : p->c[i]) out.push_back(bit);
      out.push_back(p->merge_factor[i]);
      out.push_back(p->output_scale[i]);
    }
  } else {
    const auto& f = std::get<FoldConfig>(config);
    for (std::size_t i = 0; i < l; ++i) {
      out.push_back(f.fold_select[i]);
      for (int k = 0; k < spec.K; ++k) out.push_back(0.0);
      out.push_back(f.importance[i]);
      out.push_back(1.0);
    }
  }
  out.push_back(mode_code(spec.mode));
  return out;
}

namespace {

BigInt binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  BigInt result = 1;
  for (int i = 1; i <= k; ++i) {
    result *= n - k + i;
    result /= i;
  }
  return result;
}

BigInt power(BigInt base, int exp) {
  BigInt out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

// Counts fold configs: sum over placements of |grid|^(#active layers).
BigInt fold_cardinality(const SpaceSpec& spec) {
  if (spec.remove_count == spec.l) return 1;
  const BigInt g = static_cast<unsigned>(spec.importance_grid.size());
  const int rc = spec.remove_count;
  // States: 0 start, 1 leading removed run, 2 last retained (not receiver),
  // 3 last retained (already receiver), 4 run after a retained layer.
  using Row = std::vector<BigInt>;
  std::array<Row, 5> cur;
  for (auto& r : cur) r.assign(static_cast<std::size_t>(rc) + 1, 0);
  cur[0][0] = 1;
  for (int layer = 0; layer < spec.l; ++layer) {
    std::array<Row, 5> nxt;
    for (auto& r : nxt) r.assign(static_cast<std::size_t>(rc) + 1, 0);
    for (int k = 0; k <= rc; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      // retain this layer
      nxt[2][ku] += cur[0][ku] + cur[2][ku] + cur[3][ku] + cur[4][ku];
      nxt[3][ku] += cur[1][ku] * g;
      if (k == rc) continue;
      // remove this layer
      nxt[1][ku + 1] += (cur[0][ku] + cur[1][ku]) * g;
      nxt[4][ku + 1] += cur[2][ku] * g * g + (cur[3][ku] + cur[4][ku]) * g;
    }
    cur = std::move(nxt);
  }
  const auto end = static_cast<std::size_t>(rc);
  return cur[2][end] + cur[3][end] + cur[4][end];
}

}  // namespace

BigInt cardinality(const SpaceSpec& spec) {
  check_spec(spec);
  if (spec.mode == SpaceMode::kFold) return fold_cardinality(spec);
  const BigInt os = static_cast<unsigned>(spec.output_scale_grid.size());
  const BigInt mf = static_cast<unsigned>(spec.merge_factor_grid.size());
  const BigInt k = spec.K;
  BigInt per_layer;
  switch (spec.mode) {
    case SpaceMode::kRemoveOnly: per_layer = os; break;
    case SpaceMode::kSelectRemove: per_layer = os * (1 + k); break;
    default: {
      const BigInt subsets = BigInt(1) << spec.K;
      per_layer = os * ((1 + k) + (subsets - 1 - k) * spec.Z * mf);
      break;
    }
  }
  return binomial(spec.l, spec.remove_count) * power(per_layer, spec.l - spec.remove_count);
}

// ---------------------------------------------------------------------------

Enumerator::Enumerator(const SpaceSpec& spec, std::uint64_t cap) : spec_(spec) {
  cardinality_ = layerstitch::cardinality(spec);
  if (cardinality_ > cap) throw CapExceeded(cardinality_.str(), std::to_string(cap));
  if (spec.mode != SpaceMode::kFold) {
    const auto subsets = std::size_t{1} << spec.K;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      std::vector<std::uint8_t> row(static_cast<std::size_t>(spec.K), 0);
      int sel = 0;
      for (int j = 0; j < spec.K; ++j)
        if (mask >> j & 1) {
          row[static_cast<std::size_t>(j)] = 1;
          ++sel;
        }
      if (spec.mode == SpaceMode::kRemoveOnly && sel != 0) continue;
      if (spec.mode == SpaceMode::kSelectRemove && sel > 1) continue;
      const std::vector<double> factors = sel > 1 ? spec.merge_factor_grid : std::vector<double>{1.0};
      for (double f : factors)
        for (double s : spec.output_scale_grid) choices_.push_back({row, f, s});
    }
    radix_ = choices_.size();
  } else {
    radix_ = spec.importance_grid.size();
  }
  combo_.resize(static_cast<std::size_t>(spec.remove_count));
  std::iota(combo_.begin(), combo_.end(), std::size_t{0});
}

void Enumerator::begin_placement() {
  std::vector<std::uint8_t> removed(static_cast<std::size_t>(spec_.l), 0);
  for (auto i : combo_) removed[i] = 1;
  slots_.clear();
  if (spec_.mode == SpaceMode::kFold) {
    const auto active = fold_active(removed);
    for (std::size_t i = 0; i < active.size(); ++i)
      if (active[i]) slots_.push_back(static_cast<int>(i));
  } else {
    for (std::size_t i = 0; i < removed.size(); ++i)
      if (!removed[i]) slots_.push_back(static_cast<int>(i));
  }
  digits_.assign(slots_.size(), 0);
}

bool Enumerator::next_placement() {
  const auto n = static_cast<std::size_t>(spec_.l);
  const auto k = combo_.size();
  std::size_t i = k;
  while (i > 0 && combo_[i - 1] == n - k + i - 1) --i;
  if (i == 0) return false;
  ++combo_[i - 1];
  for (std::size_t j = i; j < k; ++j) combo_[j] = combo_[j - 1] + 1;
  return true;
}

bool Enumerator::advance_digits() {
  for (std::size_t i = digits_.size(); i-- > 0;) {
    if (++digits_[i] < radix_) return true;
    digits_[i] = 0;
  }
  return false;
}

Config Enumerator::current() const {
  std::vector<std::uint8_t> removed(static_cast<std::size_t>(spec_.l), 0);
  for (auto i : combo_) removed[i] = 1;
  if (spec_.mode == SpaceMode::kFold) {
    FoldConfig cfg;
    cfg.fold_select = removed;
    cfg.importance.assign(removed.size(), 1.0);
    for (std::size_t s = 0; s < slots_.size(); ++s)
      cfg.importance[static_cast<std::size_t>(slots_[s])] = spec_.importance_grid[digits_[s]];
    return cfg;
  }
  PruneConfig cfg = defaults(spec_);
  cfg.r = removed;
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const auto i = static_cast<std::size_t>(slots_[s]);
    const auto& choice = choices_[digits_[s]];
    cfg.c[i] = choice.row;
    cfg.merge_factor[i] = choice.merge_factor;
    cfg.output_scale[i] = choice.output_scale;
  }
  return cfg;
}

std::optional<Config> Enumerator::next() {
  if (done_) return std::nullopt;
  if (!started_) {
    started_ = true;
    begin_placement();
    return current();
  }
  if (!advance_digits()) {
    if (!next_placement()) {
      done_ = true;
      return std::nullopt;
    }
    begin_placement();
  }
  return current();
}

std::vector<Config> enumerate_all(const SpaceSpec& spec, std::uint64_t cap) {
  Enumerator e(spec, cap);
  std::vector<Config> out;
  while (auto c = e.next()) out.push_back(std::move(*c));
  return out;
}

// ---------------------------------------------------------------------------

WarmStart warm_start(const SpaceSpec& spec, std::size_t n, Rng& rng) {
  check_spec(spec);
  if (n == 0) throw ConfigError("warm_start: n must be at least 1");
  WarmStart out;
  const auto lo = static_cast<std::size_t>(spec.l / 4);
  const auto hi = static_cast<std::size_t>((3 * spec.l + 3) / 4);
  std::size_t band_lo = lo, band_size = hi - lo;
  if (band_size < static_cast<std::size_t>(spec.remove_count)) {
    out.fallback = true;
    band_lo = 0;
    band_size = static_cast<std::size_t>(spec.l);
  }
  const auto k = static_cast<std::size_t>(spec.remove_count);
  std::set<std::vector<std::size_t>> seen;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> idx;
    for (int attempt = 0; attempt < 32; ++attempt) {
      idx = rng.subset(band_size, k);
      for (auto& v : idx) v += band_lo;
      if (seen.insert(idx).second) break;
    }
    auto removed = placement(spec, idx);
    if (spec.mode == SpaceMode::kFold) {
      out.configs.push_back(make_fold(spec, std::move(removed), nullptr));
      continue;
    }
    PruneConfig cfg = defaults(spec);
    cfg.r = std::move(removed);
    const double scale = nearest_one(spec.output_scale_grid);
    for (std::size_t j = 0; j < cfg.r.size(); ++j)
      if (!cfg.r[j]) cfg.output_scale[j] = scale;
    out.configs.push_back(std::move(cfg));
  }
  return out;
}

}  // namespace layerstitch
