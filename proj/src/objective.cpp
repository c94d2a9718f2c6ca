#include "layerstitch/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "layerstitch/error.hpp"
#include "layerstitch/space_json.hpp"

namespace layerstitch {

double ObjectiveVector::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

LambdaWeights LambdaWeights::from_values(std::vector<double> values) {
  if (values.empty()) throw ConfigError("lambda: at least one weight is required");
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("lambda: weights must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("lambda: weights must sum to 1");
  LambdaWeights out;
  out.values = std::move(values);
  return out;
}

LambdaWeights LambdaWeights::from_lattice(std::vector<int> numerators, int q) {
  LambdaWeights out;
  out.q = q;
  for (int k : numerators) out.values.push_back(static_cast<double>(k) / q);
  out.numerators = std::move(numerators);
  return out;
}

double parego_scalarize(const ObjectiveVector& f, const LambdaWeights& lambda, double alpha) {
  if (f.size() != lambda.size() || f.size() == 0)
    throw ConfigError("parego_scalarize: objective and weight lengths differ");
  if (!(alpha > 0.0)) throw ConfigError("parego_scalarize: alpha must be positive");
  double worst = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double term = lambda.values[i] * f.values[i];
    worst = std::max(worst, term);
    sum += term;
  }
  return worst + alpha * sum;
}

LambdaWeights sample_lambda(std::size_t m, Rng& rng, int q) {
  if (m == 0) throw ConfigError("sample_lambda: m must be at least 1");
  // Stars and bars: m-1 bar positions among q+m-1 slots, uniformly.
  const auto slots = static_cast<std::size_t>(q) + m - 1;
  const auto bars = rng.subset(slots, m - 1);
  std::vector<int> k;
  std::size_t prev = 0;
  for (std::size_t b : bars) {
    k.push_back(static_cast<int>(b - prev));
    prev = b + 1;
  }
  k.push_back(static_cast<int>(slots - prev));
  return LambdaWeights::from_lattice(std::move(k), q);
}

std::vector<LambdaWeights> lambda_lattice(std::size_t m, int q) {
  if (m == 0) throw ConfigError("lambda_lattice: m must be at least 1");
  std::vector<LambdaWeights> out;
  std::vector<int> k(m, 0);
  auto rec = [&](auto&& self, std::size_t i, int left) -> void {
    if (i + 1 == m) {
      k[i] = left;
      out.push_back(LambdaWeights::from_lattice(k, q));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      k[i] = v;
      self(self, i + 1, left - v);
    }
  };
  rec(rec, 0, q);
  return out;
}

std::size_t CalibrationTask::budget_for(std::size_t global_budget) const {
  const auto it = rung_budgets.find(global_budget);
  return it == rung_budgets.end() ? global_budget : it->second;
}

CalibrationTask make_calibration_task(std::string task_id, const LabeledDataset& data,
                                      std::size_t max_budget, std::uint64_t shuffle_seed,
                                      std::map<std::size_t, std::size_t> rung_budgets) {
  if (max_budget > data.size())
    throw ConfigError("calibration task '" + task_id + "': max_budget " + std::to_string(max_budget) +
                      " exceeds dataset size " + std::to_string(data.size()));
  for (const auto& [rung, b] : rung_budgets)
    if (b > max_budget || b == 0)
      throw ConfigError("calibration task '" + task_id + "': rung budget " + std::to_string(b) +
                        " outside (0, max_budget]");
  CalibrationTask task;
  task.task_id = std::move(task_id);
  task.max_budget = max_budget;
  task.shuffle_seed = shuffle_seed;
  task.rung_budgets = std::move(rung_budgets);
  task.permutation.resize(data.size());
  std::iota(task.permutation.begin(), task.permutation.end(), std::size_t{0});
  Rng rng(shuffle_seed);
  rng.shuffle(std::span<std::size_t>(task.permutation));
  task.data.order_seed = shuffle_seed;
  task.data.inputs = Matrix(data.inputs.rows(), data.inputs.cols());
  task.data.labels.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    task.data.inputs.row(static_cast<Eigen::Index>(i)) =
        data.inputs.row(static_cast<Eigen::Index>(task.permutation[i]));
    task.data.labels[i] = data.labels[task.permutation[i]];
  }
  return task;
}

ObjectiveVector evaluate(const LayeredModel& model, const CalibrationSuite& suite,
                         std::span<const std::size_t> budgets) {
  if (budgets.size() != suite.tasks.size())
    throw ConfigError("evaluate: one budget per task is required");
  ObjectiveVector out;
  for (std::size_t t = 0; t < suite.tasks.size(); ++t) {
    const auto& task = suite.tasks[t];
    const std::size_t b = budgets[t];
    if (b == 0) throw ConfigError("evaluate: task '" + task.task_id + "' has a zero budget");
    if (b > task.max_budget || b > task.data.size())
      throw ConfigError("evaluate: budget " + std::to_string(b) + " exceeds task '" + task.task_id +
                        "' maximum " + std::to_string(std::min(task.max_budget, task.data.size())));
    const auto pred = predict_labels(model, task.data.inputs.topRows(static_cast<Eigen::Index>(b)));
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < b; ++i) wrong += pred[i] != task.data.labels[i];
    out.values.push_back(static_cast<double>(wrong) / static_cast<double>(b));
  }
  return out;
}

ObjectiveVector evaluate(const LayeredModel& model, const CalibrationSuite& suite, std::size_t budget) {
  std::vector<std::size_t> budgets;
  for (const auto& t : suite.tasks) budgets.push_back(t.budget_for(budget));
  return evaluate(model, suite, budgets);
}

std::vector<std::size_t> evaluated_indices(const CalibrationSuite& suite, std::size_t t, std::size_t b) {
  const auto& perm = suite.tasks.at(t).permutation;
  if (b > perm.size()) throw ConfigError("evaluated_indices: budget exceeds dataset");
  return {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(b)};
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  if (a.size() != b.size()) throw ConfigError("dominates: objective lengths differ");
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values[i] > b.values[i]) return false;
    if (a.values[i] < b.values[i]) strictly = true;
  }
  return strictly;
}

bool pareto_update(ParetoFront& front, FrontMember candidate) {
  for (auto& m : front.members) {
    if (m.encoding == candidate.encoding) {
      m.scalarized_best = std::min(m.scalarized_best, candidate.scalarized_best);
      return false;
    }
  }
  for (const auto& m : front.members)
    if (dominates(m.objectives, candidate.objectives)) return false;
  std::erase_if(front.members,
                [&](const FrontMember& m) { return dominates(candidate.objectives, m.objectives); });
  front.members.push_back(std::move(candidate));
  return true;
}

std::vector<std::size_t> non_dominated_indices(std::span<const ObjectiveVector> rows,
                                               std::span<const std::vector<double>> encodings) {
  std::vector<std::size_t> out;
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!seen.insert(encodings[i]).second) continue;
    bool dominated = false;
    for (std::size_t j = 0; j < rows.size() && !dominated; ++j)
      dominated = j != i && dominates(rows[j], rows[i]);
    if (!dominated) out.push_back(i);
  }
  return out;
}

nlohmann::json pareto_to_json(const ParetoFront& front) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : front.members) {
    out.push_back({{"encoding", m.encoding},
                   {"config", to_json(m.config)},
                   {"objectives", m.objectives.values},
                   {"scalarized_best", m.scalarized_best}});
  }
  return out;
}

std::string pareto_to_csv(const ParetoFront& front, std::span<const std::string> task_ids) {
  std::ostringstream os;
  os.precision(17);
  os << "member";
  for (const auto& id : task_ids) os << ",error_" << id;
  os << ",mean_error,scalarized_best,removed_layers\n";
  for (std::size_t i = 0; i < front.members.size(); ++i) {
    const auto& m = front.members[i];
    os << i;
    for (double v : m.objectives.values) os << ',' << v;
    os << ',' << m.objectives.mean() << ',' << m.scalarized_best;
    os << ",\"";
    const auto& bits = removal_bits(m.config);
    bool first = true;
    for (std::size_t j = 0; j < bits.size(); ++j)
      if (bits[j]) {
        os << (first ? "" : " ") << j;
        first = false;
      }
    os << "\"\n";
  }
  return os.str();
}

}  // namespace layerstitch
