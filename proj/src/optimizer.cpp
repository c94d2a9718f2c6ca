#include "layerstitch/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "layerstitch/error.hpp"

namespace layerstitch {

std::string to_string(LambdaPolicy policy) {
  switch (policy) {
    case LambdaPolicy::kPerBracket: return "per_bracket";
    case LambdaPolicy::kPerStage: return "per_stage";
    case LambdaPolicy::kPerTrial: return "per_trial";
    case LambdaPolicy::kFixed: return "fixed";
  }
  return "unknown";
}

LambdaPolicy parse_lambda_policy(const std::string& name) {
  if (name == "per_bracket") return LambdaPolicy::kPerBracket;
  if (name == "per_stage") return LambdaPolicy::kPerStage;
  if (name == "per_trial") return LambdaPolicy::kPerTrial;
  if (name == "fixed") return LambdaPolicy::kFixed;
  throw ConfigError("unknown lambda policy '" + name + "'");
}

std::size_t HyperbandSchedule::trials_per_sweep() const {
  std::size_t total = 0;
  for (const auto& b : brackets)
    for (const auto& s : b.stages) total += s.count;
  return total;
}

HyperbandSchedule compute_schedule(std::size_t b_min, std::size_t b_max, int eta) {
  if (b_min == 0 || b_min > b_max) throw ConfigError("schedule: need 0 < b_min <= b_max");
  if (eta < 2) throw ConfigError("schedule: eta must be at least 2");
  const auto e = static_cast<std::size_t>(eta);
  HyperbandSchedule sched;
  // Largest s with b_min * eta^s <= b_max, in integers.
  std::size_t rung = b_min;
  while (rung <= b_max / e && rung * e <= b_max) {
    rung *= e;
    ++sched.s_max;
  }
  rung = b_min;
  for (int i = 0; i < sched.s_max; ++i) {
    sched.ladder.push_back(rung);
    rung *= e;
  }
  sched.ladder.push_back(b_max);

  for (int s = sched.s_max; s >= 0; --s) {
    Bracket b;
    b.s = s;
    std::size_t eta_s = 1;
    for (int i = 0; i < s; ++i) eta_s *= e;
    const auto num = static_cast<std::size_t>(sched.s_max + 1) * eta_s;
    const auto den = static_cast<std::size_t>(s + 1);
    b.n = (num + den - 1) / den;
    std::size_t divisor = 1;
    for (int i = 0; i <= s; ++i) {
      b.stages.push_back({b.n / divisor, sched.ladder[static_cast<std::size_t>(sched.s_max - s + i)]});
      divisor *= e;
    }
    sched.brackets.push_back(std::move(b));
  }
  return sched;
}

std::vector<std::size_t> promote(std::span<const TrialRecord> stage, int eta, bool final_stage) {
  std::vector<std::size_t> order(stage.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (stage[a].scalarized != stage[b].scalarized) return stage[a].scalarized < stage[b].scalarized;
    if (stage[a].encoding != stage[b].encoding) return stage[a].encoding < stage[b].encoding;
    return a < b;
  });
  std::size_t keep = stage.size() / static_cast<std::size_t>(eta);
  if (!final_stage && !stage.empty()) keep = std::max<std::size_t>(keep, 1);
  order.resize(std::min(keep, order.size()));
  return order;
}

void check_search_config(const SearchConfig& cfg) {
  check_spec(cfg.space);
  if (cfg.b_min == 0 || cfg.b_min > cfg.b_max) throw ConfigError("search: need 0 < b_min <= b_max");
  if (cfg.eta < 2) throw ConfigError("search: eta must be at least 2");
  if (cfg.T_max < 1) throw ConfigError("search: T_max must be at least 1");
  if (!(cfg.alpha > 0.0)) throw ConfigError("search: alpha must be positive");
  if (cfg.lattice_q < 1) throw ConfigError("search: lattice_q must be positive");
  if (cfg.lambda_policy == LambdaPolicy::kFixed) LambdaWeights::from_values(cfg.fixed_lambda);
  if (cfg.space.remove_count >= cfg.space.l)
    throw ConfigError("search: zero feasible configurations (every layer would be removed)");
}

namespace {

TrialRecord make_record(std::size_t t, int sweep, const Bracket& bracket, int stage_i,
                        const Stage& stage, const LambdaWeights& lambda, const Config& config,
                        const SearchConfig& cfg) {
  TrialRecord rec;
  rec.t = t;
  rec.sweep = sweep;
  rec.bracket_s = bracket.s;
  rec.stage_i = stage_i;
  rec.budget = stage.budget;
  rec.lambda = lambda;
  rec.config = config;
  rec.encoding = encode(config, cfg.space);
  rec.seed = cfg.seed;
  return rec;
}

void evaluate_one(TrialRecord& rec, const Evaluator& evaluator, std::size_t m, double alpha) {
  try {
    rec.objectives = evaluator.evaluate(rec.config, rec.budget);
    if (rec.objectives.size() != m) throw Error("evaluator returned the wrong number of objectives");
    for (double v : rec.objectives.values)
      if (!std::isfinite(v)) throw Error("evaluator returned a non-finite objective");
    rec.status = TrialStatus::kOk;
  } catch (const std::exception&) {
    rec.objectives.values.assign(m, 1.0);
    rec.status = TrialStatus::kFailed;
  }
  rec.scalarized = parego_scalarize(rec.objectives, rec.lambda, alpha);
}

void evaluate_all(std::vector<TrialRecord*>& jobs, const Evaluator& evaluator, std::size_t m,
                  double alpha, std::size_t threads) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), jobs.size());
  if (workers <= 1) {
    for (auto* rec : jobs) evaluate_one(*rec, evaluator, m, alpha);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) evaluate_one(*jobs[i], evaluator, m, alpha);
    });
}

}  // namespace

SearchResult run_search(const SearchConfig& cfg, const Evaluator& evaluator, const RunOptions& options) {
  check_search_config(cfg);
  const std::size_t m = evaluator.num_objectives();
  if (m == 0) throw ConfigError("search: evaluator has no objectives");
  if (cfg.lambda_policy == LambdaPolicy::kFixed && cfg.fixed_lambda.size() != m)
    throw ConfigError("search: fixed_lambda length differs from the number of objectives");

  const HyperbandSchedule sched = compute_schedule(cfg.b_min, cfg.b_max, cfg.eta);
  Rng rng(cfg.seed);
  SearchResult result;
  auto& history = result.history;
  const std::size_t cap =
      options.halt_after ? std::min(cfg.T_max, *options.halt_after) : cfg.T_max;
  auto draw_lambda = [&] {
    if (cfg.lambda_policy == LambdaPolicy::kFixed) return LambdaWeights::from_values(cfg.fixed_lambda);
    return sample_lambda(m, rng, cfg.lattice_q);
  };

  for (int sweep = 0; history.size() < cap; ++sweep) {
    for (const auto& bracket : sched.brackets) {
      if (history.size() >= cap) break;
      LambdaWeights lambda = draw_lambda();
      std::vector<Config> configs =
          sample_configurations(bracket.n, history, cfg.space, rng, cfg.surrogate, cfg.b_max);
      for (std::size_t i = 0; i < bracket.stages.size(); ++i) {
        if (history.size() >= cap) break;
        const Stage& stage = bracket.stages[i];
        if (cfg.lambda_policy == LambdaPolicy::kPerStage && i > 0) lambda = draw_lambda();
        const std::size_t count = std::min(configs.size(), cap - history.size());
        const std::size_t first = history.size();
        std::vector<TrialRecord*> jobs;
        for (std::size_t k = 0; k < count; ++k) {
          if (cfg.lambda_policy == LambdaPolicy::kPerTrial) lambda = draw_lambda();
          history.push_back(make_record(first + k, sweep, bracket, static_cast<int>(i), stage, lambda,
                                        configs[k], cfg));
        }
        for (std::size_t k = first; k < history.size(); ++k) {
          TrialRecord& rec = history[k];
          if (k < options.replay.size()) {
            const TrialRecord& old = options.replay[k];
            if (old.encoding != rec.encoding || old.budget != rec.budget ||
                old.lambda.values != rec.lambda.values)
              throw IntegrityError("journal line " + std::to_string(k) +
                                   " does not match this run configuration");
            rec.objectives = old.objectives;
            rec.status = old.status;
            rec.scalarized = parego_scalarize(rec.objectives, rec.lambda, cfg.alpha);
          } else {
            jobs.push_back(&rec);
          }
        }
        evaluate_all(jobs, evaluator, m, cfg.alpha, options.threads);
        for (auto* rec : jobs)
          if (options.on_trial) options.on_trial(*rec);
        if (count < configs.size()) break;
        if (i + 1 < bracket.stages.size()) {
          const std::span<const TrialRecord> done(history.data() + first, count);
          std::vector<Config> survivors;
          for (auto idx : promote(done, cfg.eta, false)) survivors.push_back(configs[idx]);
          configs = std::move(survivors);
        }
      }
    }
  }
  result.halted = history.size() < cfg.T_max;
  result.front = front_from_history(history, cfg.b_max);
  result.best = best_from_history(history, cfg.b_max);
  return result;
}

ParetoFront front_from_history(std::span<const TrialRecord> history, std::size_t b_max) {
  ParetoFront front;
  for (const auto& rec : history) {
    if (rec.budget != b_max || rec.status != TrialStatus::kOk) continue;
    pareto_update(front, {rec.config, rec.encoding, rec.objectives, rec.scalarized});
  }
  return front;
}

std::optional<TrialRecord> best_from_history(std::span<const TrialRecord> history, std::size_t b_max) {
  std::size_t top = 0;
  bool any_max = false;
  for (const auto& rec : history) {
    if (rec.status != TrialStatus::kOk) continue;
    top = std::max(top, rec.budget);
    any_max = any_max || rec.budget == b_max;
  }
  const std::size_t target = any_max ? b_max : top;
  std::optional<TrialRecord> best;
  for (const auto& rec : history) {
    if (rec.status != TrialStatus::kOk || rec.budget != target) continue;
    if (!best || rec.scalarized < best->scalarized) best = rec;
  }
  return best;
}

std::vector<AllocationRow> budget_allocation_report(std::span<const TrialRecord> history) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& rec : history) ++counts[rec.budget];
  std::vector<AllocationRow> rows;
  for (const auto& [budget, n] : counts)
    rows.push_back({budget, n, 100.0 * static_cast<double>(n) / static_cast<double>(history.size())});
  return rows;
}

std::string format_allocation(std::span<const AllocationRow> rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "budget" << std::setw(10) << "trials" << "percent\n";
  for (const auto& r : rows)
    os << std::left << std::setw(10) << r.budget << std::setw(10) << r.trials << std::fixed
       << std::setprecision(1) << r.percent << "\n";
  return os.str();
}

std::string allocation_csv(std::span<const AllocationRow> rows) {
  std::ostringstream os;
  os << "budget,trials,percent\n";
  for (const auto& r : rows) os << r.budget << ',' << r.trials << ',' << std::fixed << std::setprecision(1) << r.percent << "\n";
  return os.str();
}

}  // namespace layerstitch
