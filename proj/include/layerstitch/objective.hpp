#pragma once

// Budgeted multi-task evaluation, ParEGO scalarization, and Pareto front
// maintenance.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerstitch/rng.hpp"
#include "layerstitch/space.hpp"
#include "layerstitch/zoo.hpp"

namespace layerstitch {

// Per-task error rates (1 - accuracy), each in [0, 1], minimized.
struct ObjectiveVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double mean() const;
  bool operator==(const ObjectiveVector&) const = default;
};

struct LambdaWeights {
  std::vector<double> values;
  // Lattice numerators k_i with sum k_i == q when drawn from the simplex
  // lattice; empty for user-supplied weights.
  std::vector<int> numerators;
  int q = 0;

  static LambdaWeights from_values(std::vector<double> values);  // validates
  static LambdaWeights from_lattice(std::vector<int> numerators, int q);
  std::size_t size() const { return values.size(); }
};

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr int kDefaultLatticeQ = 10;

// max_i(lambda_i f_i) + alpha * sum_i(lambda_i f_i).
double parego_scalarize(const ObjectiveVector& f, const LambdaWeights& lambda, double alpha);

// Uniform draw from {k / q : sum k = q}.
LambdaWeights sample_lambda(std::size_t m, Rng& rng, int q = kDefaultLatticeQ);
// Every lattice vector, lexicographic in the numerators.
std::vector<LambdaWeights> lambda_lattice(std::size_t m, int q = kDefaultLatticeQ);

struct CalibrationTask {
  std::string task_id;
  LabeledDataset data;  // already in shuffled order; budget b uses rows [0, b)
  std::vector<std::size_t> permutation;  // data row i is original row permutation[i]
  std::size_t max_budget = 0;
  std::uint64_t shuffle_seed = 0;
  // Optional per-rung override (global budget -> this task's budget).
  std::map<std::size_t, std::size_t> rung_budgets;

  std::size_t budget_for(std::size_t global_budget) const;
};

struct CalibrationSuite {
  std::vector<CalibrationTask> tasks;

  std::size_t num_tasks() const { return tasks.size(); }
};

// Shuffles `data` once with `shuffle_seed` and wraps it as a suite task.
// max_budget must not exceed the dataset size.
CalibrationTask make_calibration_task(std::string task_id, const LabeledDataset& data,
                                      std::size_t max_budget, std::uint64_t shuffle_seed,
                                      std::map<std::size_t, std::size_t> rung_budgets = {});

// Error on the first budgets[t] examples of each task's fixed shuffle.
ObjectiveVector evaluate(const LayeredModel& model, const CalibrationSuite& suite,
                         std::span<const std::size_t> budgets);
// Same global budget for every task, mapped through budget_for().
ObjectiveVector evaluate(const LayeredModel& model, const CalibrationSuite& suite, std::size_t budget);

// Original-dataset indices evaluated for task `t` at budget `b`.
std::vector<std::size_t> evaluated_indices(const CalibrationSuite& suite, std::size_t t, std::size_t b);

// a dominates b: a <= b componentwise and a < b somewhere.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

struct FrontMember {
  Config config;
  std::vector<double> encoding;
  ObjectiveVector objectives;
  double scalarized_best = 0.0;
};

struct ParetoFront {
  std::vector<FrontMember> members;  // insertion order

  std::size_t size() const { return members.size(); }
};

// Inserts `candidate` unless it is dominated; drops members it dominates.
// A candidate whose encoding is already present only refreshes
// scalarized_best. Returns true when the member set changed.
bool pareto_update(ParetoFront& front, FrontMember candidate);

// Brute-force non-dominated filter, deduplicated by encoding (first wins).
std::vector<std::size_t> non_dominated_indices(std::span<const ObjectiveVector> rows,
                                               std::span<const std::vector<double>> encodings);

nlohmann::json pareto_to_json(const ParetoFront& front);
std::string pareto_to_csv(const ParetoFront& front, std::span<const std::string> task_ids);

}  // namespace layerstitch
