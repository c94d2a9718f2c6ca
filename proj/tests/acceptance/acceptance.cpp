// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "../fixtures.hpp"
#include "layerstitch/journal.hpp"
#include "layerstitch/merge.hpp"

using namespace layerstitch;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances.
constexpr double kFormulaRel = 1e-12;
constexpr int kAllocationSlack = 3;
constexpr double kPercentSlack = 0.7;
constexpr double kOracleRel = 0.02;
constexpr int kOracleSeedsExact = 9;
constexpr int kStitchWins = 7;
constexpr double kGradTol = 1e-3;
// One calibration example on every task of the 1000-row suite.
constexpr double kMonotoneSlack = 1e-3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  failures += o.pass ? 0 : 1;
  std::printf("%s C%d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

// A run bound to an in-memory family.
struct Bench {
  RunConfig cfg;
  CalibrationSuite suite;
  std::unique_ptr<StitchEvaluator> evaluator;

  Bench(const Family& family, const json& doc) {
    cfg = run_config_from_json(doc);
    bind_family(cfg, family);
    suite = make_suite(family, cfg);
    evaluator = std::make_unique<StitchEvaluator>(family, suite, cfg.search.space);
  }
  SearchResult run(const RunOptions& options = {}) const { return run_search(cfg.search, *evaluator, options); }
};

json run_doc(json space, std::size_t T_max, std::uint64_t seed) {
  return {{"seed", seed},
          {"space", std::move(space)},
          {"search", {{"b_min", 100}, {"b_max", 1000}, {"eta", 3}, {"T_max", T_max}}}};
}

json toy_space() {
  return {{"sparsity", "1/3"}, {"mode", "full"}, {"merge_factor_grid", {0.5, 0.75, 1.0}},
          {"output_scale_grid", {1.0}}};
}

// O(n^2) dominance filter over distinct encodings.
std::set<std::vector<double>> brute_front(const std::vector<OracleRow>& rows) {
  std::set<std::vector<double>> out;
  for (const auto& a : rows) {
    if (!a.feasible) continue;
    bool dominated = false;
    for (const auto& b : rows) {
      if (!b.feasible) continue;
      bool le = true, lt = false;
      for (std::size_t i = 0; i < a.objectives.size(); ++i) {
        le = le && b.objectives.values[i] <= a.objectives.values[i];
        lt = lt || b.objectives.values[i] < a.objectives.values[i];
      }
      dominated = dominated || (le && lt);
    }
    if (!dominated) out.insert(a.encoding);
  }
  return out;
}

std::vector<double> flat(const ResidualBlock& b) {
  std::vector<double> out;
  for (const auto* m : {&b.W1, &b.W2}) out.insert(out.end(), m->data(), m->data() + m->size());
  for (const auto* v : {&b.b1, &b.b2}) out.insert(out.end(), v->data(), v->data() + v->size());
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  return os.str();
}

Outcome budget_ladder() {
  const auto t0 = Clock::now();
  const auto s = compute_schedule(100, 1000, 3);
  const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  const bool ok = s.ladder == std::vector<std::size_t>{100, 300, 1000} && us < 1000.0;
  return {ok, "ladder {" + join(s.ladder) + "} in " + std::to_string(us) + " us"};
}

Outcome allocation() {
  const Bench bench(fixtures::toy_family(), run_doc(toy_space(), 500, 1));
  const auto result = bench.run();
  const auto rows = budget_allocation_report(result.history);
  const std::size_t want[] = {207, 183, 110};
  const double pct[] = {41.4, 36.6, 22.0};
  std::size_t total = 0;
  bool ok = rows.size() == 3;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; ok && i < 3; ++i) {
    counts.push_back(rows[i].trials);
    total += rows[i].trials;
    ok = ok && std::abs(static_cast<long>(rows[i].trials) - static_cast<long>(want[i])) <= kAllocationSlack;
    ok = ok && std::abs(rows[i].percent - pct[i]) <= kPercentSlack;
  }
  ok = ok && total == 500;
  std::ostringstream os;
  os << "counts (" << join(counts) << ") vs (207, 183, 110), total " << total;
  return {ok, os.str()};
}

Outcome oracle_optimality() {
  json doc = run_doc(toy_space(), 400, 0);
  doc["search"]["lambda_policy"] = "fixed";
  doc["search"]["fixed_lambda"] = {0.5, 0.5};
  const Bench probe(fixtures::toy_family(), doc);
  const std::vector<LambdaWeights> lambdas = {LambdaWeights::from_values({0.5, 0.5})};
  const auto oracle = run_oracle(probe.cfg.search.space, *probe.evaluator, 1000, lambdas, kDefaultAlpha);
  if (oracle.rows.size() != 108 || oracle.argmin.empty()) return {false, "oracle space is not the 108 space"};
  const double target = oracle.argmin[0].scalarized;
  int exact = 0;
  bool rest_close = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    doc["seed"] = seed;
    const Bench bench(fixtures::toy_family(), doc);
    const auto best = bench.run().best;
    if (best && best->budget == 1000 && best->scalarized == target) ++exact;
    else rest_close = rest_close && best && std::abs(best->scalarized - target) <= kOracleRel * std::abs(target);
  }
  std::ostringstream os;
  os << exact << "/10 seeds hit the oracle minimum " << target;
  return {exact >= kOracleSeedsExact && (exact == 10 || (exact == 9 && rest_close)), os.str()};
}

Outcome pareto_soundness() {
  struct Case {
    std::string name;
    const Family* family;
    json space;
  };
  const std::vector<Case> cases = {
      {"toy full", &fixtures::toy_family(), toy_space()},
      {"toy remove_only", &fixtures::toy_family(), {{"sparsity", "1/3"}, {"mode", "remove_only"}}},
      {"toy select_remove", &fixtures::toy_family(),
       {{"sparsity", "1/3"}, {"mode", "select_remove"}, {"output_scale_grid", {0.9, 1.0}}}},
      {"toy fold", &fixtures::toy_family(),
       {{"sparsity", "1/3"}, {"mode", "fold"}, {"importance_grid", {0.25, 0.5, 1.0}}}},
      {"default remove_only", &fixtures::default_family(),
       {{"sparsity", "1/4"}, {"mode", "remove_only"}, {"output_scale_grid", {1.0}}}},
  };
  std::ostringstream os;
  bool ok = true;
  for (const auto& c : cases) {
    json doc = run_doc(c.space, 1, 5);
    doc["search"]["b_min"] = 1000;
    const Bench probe(*c.family, doc);
    const auto oracle = run_oracle(probe.cfg.search.space, *probe.evaluator, 1000, {}, kDefaultAlpha);
    doc["search"]["T_max"] = 3 * oracle.rows.size();
    const Bench bench(*c.family, doc);
    const auto result = bench.run();
    std::set<std::vector<double>> got;
    for (const auto& m : result.front.members) got.insert(m.encoding);
    const bool same = got == brute_front(oracle.rows);
    ok = ok && same;
    os << (os.tellp() > 0 ? "; " : "") << c.name << " |space| " << oracle.rows.size() << " front "
       << got.size() << (same ? " equal" : " DIFFERENT");
  }
  return {ok, os.str()};
}

Outcome formula_units() {
  std::vector<std::string> bad;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) bad.push_back(what);
  };
  const LambdaWeights half = LambdaWeights::from_values({0.5, 0.5});
  check(close_rel(parego_scalarize({{0.4, 0.6}}, half, 0.05), 0.325, kFormulaRel), "parego (0.4, 0.6)");
  check(parego_scalarize({{0.0, 0.0}}, half, 0.05) == 0.0, "parego zero");
  check(close_rel(parego_scalarize({{0.4, 0.6}}, LambdaWeights::from_values({1.0, 0.0}), 0.05), 0.42, kFormulaRel),
        "parego lambda (1, 0)");

  ResidualBlock base = ResidualBlock::zeros(2), v1 = base, v2 = base;
  base.b1 << 1, 2;
  v1.b1 << 2, 2;
  v2.b1 << 1, 4;
  const ResidualBlock* both[] = {&v1, &v2};
  const auto merged = task_arithmetic_layer(base, both, 0.5);
  check(close_rel(merged.b1(0), 1.5, kFormulaRel) && close_rel(merged.b1(1), 3.0, kFormulaRel), "task arithmetic");
  const LayeredModel& fb = fixtures::default_family().base;
  const LayeredModel& fv = fixtures::default_family().variants[0];
  const ResidualBlock* one[] = {&fv.blocks[2]};
  check(flat(task_arithmetic_layer(fb.blocks[2], one, 0.0)) == flat(fb.blocks[2]), "task arithmetic factor 0");
  const auto to_v = flat(task_arithmetic_layer(fb.blocks[2], one, 1.0));
  const auto pv = flat(fv.blocks[2]);
  bool telescopes = true;
  for (std::size_t i = 0; i < pv.size(); ++i) telescopes = telescopes && close_rel(to_v[i], pv[i], kFormulaRel);
  check(telescopes, "task arithmetic single variant");

  const double w31[] = {3.0, 1.0};
  const auto beta = fold_weights(w31);
  check(close_rel(beta[0], 0.75, kFormulaRel) && close_rel(beta[1], 0.25, kFormulaRel), "fold beta (3, 1)");
  const ResidualBlock *li = &fb.blocks[0], *lj = &fb.blocks[1], *lk = &fb.blocks[2];
  const ResidualBlock* nj[] = {lj};
  const auto f31 = flat(fold_layers(*li, nj, w31));
  const auto pi = flat(*li), pj = flat(*lj), pk = flat(*lk);
  bool f31_ok = true;
  for (std::size_t n = 0; n < pi.size(); ++n) f31_ok = f31_ok && close_rel(f31[n], 0.75 * pi[n] + 0.25 * pj[n], kFormulaRel);
  check(f31_ok, "fold 0.75 / 0.25");
  const double alone[] = {0.3};
  check(flat(fold_layers(*li, {}, alone)) == pi, "fold with no neighbours");
  const double eq[] = {1.0, 1.0, 1.0};
  const ResidualBlock* njk[] = {lj, lk};
  const auto f3 = flat(fold_layers(*li, njk, eq));
  bool f3_ok = true;
  for (double b : fold_weights(eq)) f3_ok = f3_ok && close_rel(b, 1.0 / 3.0, kFormulaRel);
  for (std::size_t n = 0; n < pi.size(); ++n)
    f3_ok = f3_ok && close_rel(f3[n], (pi[n] + pj[n] + pk[n]) / 3.0, kFormulaRel);
  check(f3_ok, "fold thirds");

  if (bad.empty()) return {true, "all hand examples within 1e-12 relative"};
  std::string msg = "mismatch:";
  for (const auto& b : bad) msg += " [" + b + "]";
  return {false, msg};
}

Outcome stitching_beats_removal() {
  int wins = 0;
  std::ostringstream os;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Bench full(fixtures::default_family(), run_doc({{"sparsity", "1/4"}, {"mode", "full"}}, 200, seed));
    const Bench ro(fixtures::default_family(), run_doc({{"sparsity", "1/4"}, {"mode", "remove_only"}}, 200, seed));
    const double a = best_average_error(full.run().front);
    const double b = best_average_error(ro.run().front);
    wins += a <= b;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%.4f/%.4f", seed ? " " : "", a, b);
    os << buf;
  }
  return {wins >= kStitchWins, std::to_string(wins) + "/10 seeds full <= remove_only (" + os.str() + ")"};
}

Outcome monotone_degradation() {
  const std::vector<double> ratios = {0.0, 0.25, 0.375, 0.5};
  std::vector<std::vector<double>> by_ratio(ratios.size());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunConfig cfg = run_config_from_json(run_doc({{"sparsity", 0.0}, {"mode", "full"}}, 200, seed * 16));
    const auto rows = sweep_ratios(fixtures::default_family(), cfg, ratios);
    for (std::size_t i = 0; i < rows.size(); ++i) by_ratio[i].push_back(rows[i].best_average_error);
  }
  bool ok = true;
  std::ostringstream os;
  os << "medians";
  double prev = -1.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double m = median(by_ratio[i]);
    char buf[48];
    std::snprintf(buf, sizeof buf, " %.3g:%.4f", ratios[i], m);
    os << buf;
    if (prev >= 0.0) ok = ok && m + kMonotoneSlack >= prev;
    prev = m;
  }
  return {ok, os.str()};
}

Outcome numerical_hygiene() {
  const Family& fam = fixtures::default_family();
  const auto data = make_task_datasets(fam.tasks[0]);
  LabeledDataset probe;
  probe.inputs = data.calib.inputs.topRows(64);
  probe.labels.assign(data.calib.labels.begin(), data.calib.labels.begin() + 64);
  const auto gc = grad_check(fam.base, probe, 1e-5, 128, 7);

  const auto dir = fixtures::scratch_dir("acceptance_hygiene");
  save_checkpoint(fam.variants[1], dir / "ckpt.json");
  const bool round_trip = parameters_equal(load_checkpoint(dir / "ckpt.json"), fam.variants[1]);

  ZooConfig zoo = fixtures::toy_zoo_config();
  zoo.output_dir = dir / "zoo";
  write_family(fixtures::toy_family(), zoo);
  json doc = run_doc(toy_space(), 120, 4);
  doc["manifest"] = (dir / "zoo" / "manifest.json").string();
  std::size_t hashes[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path out = dir / ("run" + std::to_string(rep));
    doc["output_dir"] = out.string();
    std::ofstream(dir / "run.json") << doc.dump();
    std::ostringstream o, e;
    if (cmd_search(dir / "run.json", {}, false, std::nullopt, o, e) != 0) return {false, "search failed: " + e.str()};
    hashes[rep] = std::hash<std::string>{}(fixtures::read_file(out / "journal.jsonl"));
  }
  std::ostringstream os;
  os << "grad_check max rel " << gc.max_relative_error << " over " << gc.checked << ", checkpoint "
     << (round_trip ? "bit-exact" : "DIFFERS") << ", journal hashes " << (hashes[0] == hashes[1] ? "equal" : "DIFFER");
  return {gc.max_relative_error < kGradTol && gc.checked > 0 && round_trip && hashes[0] == hashes[1], os.str()};
}

Outcome ablation_contracts() {
  const Family& fam = fixtures::default_family();
  std::size_t ro_bad = 0, sr_bad = 0, fold_bad = 0, fold_checked = 0;
  const Bench ro(fam, run_doc({{"sparsity", "1/4"}, {"mode", "remove_only"}}, 100, 3));
  for (const auto& rec : ro.run().history)
    for (const auto& row : std::get<PruneConfig>(rec.config).c) ro_bad += std::count(row.begin(), row.end(), 1) > 0;
  const Bench sr(fam, run_doc({{"sparsity", "1/4"}, {"mode", "select_remove"}}, 100, 3));
  for (const auto& rec : sr.run().history)
    for (const auto& row : std::get<PruneConfig>(rec.config).c) sr_bad += std::count(row.begin(), row.end(), 1) > 1;

  const Bench fold(fam, run_doc({{"sparsity", "3/8"}, {"mode", "fold"}}, 100, 3));
  const SpaceSpec& spec = fold.cfg.search.space;
  for (const auto& rec : fold.run().history) {
    const auto& f = std::get<FoldConfig>(rec.config);
    const LayeredModel m = assemble(f, spec, fam.base, fam.variants);
    // Receiver of each removed layer: nearest retained below, else above.
    std::size_t out_pos = 0;
    for (std::size_t i = 0; i < f.fold_select.size(); ++i) {
      if (f.fold_select[i]) continue;
      std::vector<std::size_t> group = {i};
      for (std::size_t j = 0; j < f.fold_select.size(); ++j) {
        if (!f.fold_select[j]) continue;
        std::optional<std::size_t> below, above;
        for (std::size_t k = j; k-- > 0;)
          if (!f.fold_select[k]) { below = k; break; }
        for (std::size_t k = j + 1; k < f.fold_select.size(); ++k)
          if (!f.fold_select[k]) { above = k; break; }
        if ((below ? *below : *above) == i) group.push_back(j);
      }
      double total = 0.0;
      for (auto g : group) total += f.importance[g];
      std::vector<double> expect(flat(fam.base.blocks[i]).size(), 0.0);
      for (auto g : group) {
        const auto p = flat(fam.base.blocks[g]);
        for (std::size_t n = 0; n < p.size(); ++n) expect[n] += f.importance[g] / total * p[n];
      }
      const auto got = flat(m.blocks[out_pos++]);
      for (std::size_t n = 0; n < got.size(); ++n) fold_bad += !close_rel(got[n], expect[n], kFormulaRel);
      ++fold_checked;
    }
  }
  std::ostringstream os;
  os << "remove_only selections " << ro_bad << ", select_remove merges " << sr_bad << ", fold mismatches "
     << fold_bad << " over " << fold_checked << " folded blocks";
  return {ro_bad == 0 && sr_bad == 0 && fold_bad == 0 && fold_checked > 0, os.str()};
}

}  // namespace

int main() {
  report(1, "budget ladder", budget_ladder);
  report(2, "allocation reproduction", allocation);
  report(3, "oracle optimality", oracle_optimality);
  report(4, "pareto soundness", pareto_soundness);
  report(5, "formula units", formula_units);
  report(6, "stitching beats single-model pruning", stitching_beats_removal);
  report(7, "monotone degradation", monotone_degradation);
  report(8, "numerical hygiene", numerical_hygiene);
  report(9, "ablation-mode contracts", ablation_contracts);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
