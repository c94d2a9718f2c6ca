#pragma once

// Bracketed successive halving over calibration budgets with surrogate-driven
// sampling, a hard trial cap, and Pareto/incumbent bookkeeping.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerstitch/objective.hpp"
#include "layerstitch/space.hpp"
#include "layerstitch/surrogate.hpp"

namespace layerstitch {

enum class LambdaPolicy { kPerBracket, kPerStage, kPerTrial, kFixed };

std::string to_string(LambdaPolicy policy);
LambdaPolicy parse_lambda_policy(const std::string& name);

struct SearchConfig {
  std::size_t b_min = 100;
  std::size_t b_max = 1000;
  int eta = 3;
  std::size_t T_max = 500;
  double alpha = kDefaultAlpha;
  std::uint64_t seed = 0;
  SpaceSpec space;
  ProposalParams surrogate;
  LambdaPolicy lambda_policy = LambdaPolicy::kPerBracket;
  std::vector<double> fixed_lambda;  // used by kFixed
  int lattice_q = kDefaultLatticeQ;
};

struct Stage {
  std::size_t count = 0;
  std::size_t budget = 0;
};

struct Bracket {
  int s = 0;
  std::size_t n = 0;
  std::vector<Stage> stages;
};

struct HyperbandSchedule {
  int s_max = 0;
  std::vector<std::size_t> ladder;  // ascending budget rungs
  std::vector<Bracket> brackets;    // s = s_max first

  std::size_t trials_per_sweep() const;
};

// s_max = floor(log_eta(b_max / b_min)); rungs b_min * eta^i for i < s_max
// plus b_max; bracket s climbs from rung s_max - s with
// n = ceil((s_max + 1) / (s + 1) * eta^s) and n_i = floor(n / eta^i).
HyperbandSchedule compute_schedule(std::size_t b_min, std::size_t b_max, int eta);

// Indices into `stage` of the survivors, best first: ascending scalarized
// value, ties by lexicographic encoding; keeps floor(n / eta), at least one
// when the stage is not final.
std::vector<std::size_t> promote(std::span<const TrialRecord> stage, int eta, bool final_stage);

// Evaluates one config at one global budget. Must be safe to call from
// several threads at once.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::size_t num_objectives() const = 0;
  virtual ObjectiveVector evaluate(const Config& config, std::size_t budget) const = 0;
};

struct RunOptions {
  std::size_t threads = 1;
  // Stop (resumably) once this many trials exist in total.
  std::optional<std::size_t> halt_after;
  // Previously journaled trials; they are replayed instead of re-evaluated
  // and must match what this run would do.
  std::vector<TrialRecord> replay;
  // Called once per newly evaluated trial, in trial order.
  std::function<void(const TrialRecord&)> on_trial;
};

struct SearchResult {
  std::optional<TrialRecord> best;
  ParetoFront front;
  std::vector<TrialRecord> history;
  bool halted = false;
};

void check_search_config(const SearchConfig& cfg);

SearchResult run_search(const SearchConfig& cfg, const Evaluator& evaluator,
                        const RunOptions& options = {});

// Rebuilds the front from b_max trials in journal order.
ParetoFront front_from_history(std::span<const TrialRecord> history, std::size_t b_max);
// Argmin scalarized among successful b_max trials, falling back to the
// highest budget present.
std::optional<TrialRecord> best_from_history(std::span<const TrialRecord> history, std::size_t b_max);

struct AllocationRow {
  std::size_t budget = 0;
  std::size_t trials = 0;
  double percent = 0.0;
};

std::vector<AllocationRow> budget_allocation_report(std::span<const TrialRecord> history);
std::string format_allocation(std::span<const AllocationRow> rows);
std::string allocation_csv(std::span<const AllocationRow> rows);

}  // namespace layerstitch
