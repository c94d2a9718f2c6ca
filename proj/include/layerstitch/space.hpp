#pragma once

// The pruning search space: layer removal, per-layer selection among K
// finetuned candidates, task-arithmetic merging, plus the ablation
// sub-spaces (remove-only, select+remove) and the layer-folding space.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "layerstitch/rng.hpp"

namespace layerstitch {

using BigInt = boost::multiprecision::cpp_int;

enum class SpaceMode { kFull, kRemoveOnly, kSelectRemove, kFold };

std::string to_string(SpaceMode mode);
SpaceMode parse_space_mode(const std::string& name);
// Numeric code appended to every encoding.
double mode_code(SpaceMode mode);

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  // Decimal approximation reduced to lowest terms (denominator <= 1e9).
  static Rational from_double(double value);
  static Rational parse(const std::string& text);  // "9/32" or "0.28"
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
  bool operator==(const Rational&) const = default;
};

// ceil(l * s) in exact integer arithmetic.
int ceil_remove_count(int l, const Rational& sparsity);

struct SpaceSpec {
  int l = 0;
  int K = 0;
  Rational sparsity;
  int remove_count = 0;
  int Z = 1;
  std::vector<double> merge_factor_grid;
  std::vector<double> output_scale_grid;
  // Legal importance weights for the fold space.
  std::vector<double> importance_grid;
  SpaceMode mode = SpaceMode::kFull;
};

// Default grids: merge factor {0.50, 0.55, ..., 1.00}, output scale
// {0.5, 0.6, ..., 1.5}, importance {0.1, 0.2, ..., 1.0}.
std::vector<double> default_merge_factor_grid();
std::vector<double> default_output_scale_grid();
std::vector<double> default_importance_grid();

SpaceSpec make_space_spec(int l, int K, Rational sparsity, SpaceMode mode = SpaceMode::kFull);

// Throws ConfigError when the spec itself is unusable.
void check_spec(const SpaceSpec& spec);

struct PruneConfig {
  std::vector<std::uint8_t> r;               // 1 = removed
  std::vector<std::vector<std::uint8_t>> c;  // l x K selection bits
  std::vector<double> merge_factor;          // active where sum(c_i) > 1
  std::vector<double> output_scale;          // active where r_i == 0
  std::vector<int> m;                        // merge method ids in [1, Z]

  int selected(std::size_t layer) const;
  bool operator==(const PruneConfig&) const = default;
};

struct FoldConfig {
  std::vector<std::uint8_t> fold_select;  // 1 = removed and folded
  std::vector<double> importance;         // active on removed layers and their receivers

  bool operator==(const FoldConfig&) const = default;
};

using Config = std::variant<PruneConfig, FoldConfig>;

int removed_count(const Config& config);
const std::vector<std::uint8_t>& removal_bits(const Config& config);

// Canonical "keep every layer from the base" config (remove_count must be 0).
PruneConfig identity_config(const SpaceSpec& spec);

// For each layer, the layer whose folded block absorbs it: itself when
// retained; for a removed layer, the nearest retained layer below it, or the
// nearest above when nothing below is retained. -1 if no layer is retained.
std::vector<int> fold_targets(const std::vector<std::uint8_t>& removed);

Config sample(const SpaceSpec& spec, Rng& rng);

// Empty iff the config satisfies every invariant of its type under `spec`.
std::vector<std::string> validate(const Config& config, const SpaceSpec& spec);

// Minimal randomized edit that makes `config` valid.
Config repair(const Config& config, const SpaceSpec& spec, Rng& rng);

// Nearest grid member, ties toward the lower member. Grid must be sorted.
double snap_to_grid(double value, const std::vector<double>& grid);

// Per layer [r_i, c_i1..c_iK, merge_factor_i, output_scale_i], then the mode
// code. Fold configs place importance in the merge-factor slot. Throws
// ConfigError for invalid configs.
std::vector<double> encode(const Config& config, const SpaceSpec& spec);
std::size_t encoding_length(const SpaceSpec& spec);

BigInt cardinality(const SpaceSpec& spec);

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

// Yields every valid config exactly once in a fixed order: removal placements
// lexicographically, then per-layer choices as a mixed-radix counter.
class Enumerator {
 public:
  // Throws CapExceeded when cardinality(spec) > cap.
  explicit Enumerator(const SpaceSpec& spec, std::uint64_t cap = kDefaultEnumerationCap);

  std::optional<Config> next();
  const BigInt& cardinality() const { return cardinality_; }

 private:
  struct LayerChoice {
    std::vector<std::uint8_t> row;
    double merge_factor;
    double output_scale;
  };

  bool next_placement();
  void begin_placement();
  Config current() const;
  bool advance_digits();

  SpaceSpec spec_;
  BigInt cardinality_;
  std::vector<LayerChoice> choices_;
  std::vector<std::size_t> combo_;  // removed indices, ascending
  std::vector<int> slots_;          // layers carrying a digit
  std::vector<std::size_t> digits_;
  std::size_t radix_ = 1;
  bool started_ = false;
  bool done_ = false;
};

std::vector<Config> enumerate_all(const SpaceSpec& spec,
                                  std::uint64_t cap = kDefaultEnumerationCap);

struct WarmStart {
  std::vector<Config> configs;
  // The middle band was too small for remove_count; removals were drawn from
  // the full range instead.
  bool fallback = false;
};

// Configs whose removals lie in the middle band [floor(l/4), ceil(3l/4)),
// selecting only base layers with factors and scales at the grid member
// nearest 1.0.
WarmStart warm_start(const SpaceSpec& spec, std::size_t n, Rng& rng);

}  // namespace layerstitch
