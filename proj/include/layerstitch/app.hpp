#pragma once

// Pipeline glue shared by the CLI and the integration tests: zoo and run
// configuration documents, the model family, the stitched-model evaluator,
// and one function per CLI command.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerstitch/objective.hpp"
#include "layerstitch/optimizer.hpp"
#include "layerstitch/space.hpp"
#include "layerstitch/zoo.hpp"

namespace layerstitch {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitRuntime = 4,
  kExitCap = 5,
};

struct ZooConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "zoo";
  ModelShape shape;
  std::vector<TaskSpec> tasks;
  TrainHyper base;
  TrainHyper finetune;
};

// Three tasks (gaussian-blobs, xor-bands, modular-sum), input_dim 8,
// hidden_dim 32, 8 layers, 4 classes.
ZooConfig default_zoo_config();
ZooConfig zoo_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ZooConfig& cfg);

nlohmann::json to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const nlohmann::json& doc);

struct Family {
  LayeredModel base;
  std::vector<LayeredModel> variants;  // one per task, in task order
  std::vector<TaskSpec> tasks;
};

Family build_family(const ZooConfig& cfg);
// Writes base/variant checkpoints and manifest.json under cfg.output_dir.
std::filesystem::path write_family(const Family& family, const ZooConfig& cfg);
Family load_family(const std::filesystem::path& manifest);

std::vector<std::string> task_ids(const Family& family);

// Fraction of the base model's parameters absent from `pruned`.
double pruned_parameter_fraction(const LayeredModel& base, const LayeredModel& pruned);

struct SuiteTaskConfig {
  std::string task_id;
  std::size_t max_budget = 0;
  std::uint64_t shuffle_seed = 0;
  std::map<std::size_t, std::size_t> rung_budgets;
};

struct RunConfig {
  std::filesystem::path manifest = "zoo/manifest.json";
  std::filesystem::path output_dir = "run";
  // The "space" object as written; l and K may be omitted and are then taken
  // from the family by bind_family().
  nlohmann::json space_doc = nlohmann::json::object();
  SearchConfig search;
  // Empty: every family task with max_budget = b_max.
  std::vector<SuiteTaskConfig> suite;
  std::size_t threads = 1;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);

// Parses space_doc into search.space, filling l and K from the family.
void bind_family(RunConfig& cfg, const Family& family);

CalibrationSuite make_suite(const Family& family, const RunConfig& cfg);

// Assembles the config from the family and evaluates it on the suite.
class StitchEvaluator final : public Evaluator {
 public:
  StitchEvaluator(const Family& family, const CalibrationSuite& suite, const SpaceSpec& space);
  std::size_t num_objectives() const override { return suite_.num_tasks(); }
  ObjectiveVector evaluate(const Config& config, std::size_t budget) const override;

 private:
  const Family& family_;
  const CalibrationSuite& suite_;
  SpaceSpec space_;
};

// Mean error of the best front member (lowest mean); +inf for an empty front.
double best_average_error(const ParetoFront& front);
std::optional<std::size_t> best_average_member(const ParetoFront& front);

struct OracleRow {
  Config config;
  std::vector<double> encoding;
  ObjectiveVector objectives;
  bool feasible = true;
};

struct OracleArgmin {
  LambdaWeights lambda;
  double scalarized = 0.0;
  std::size_t row = 0;
};

struct OracleResult {
  BigInt cardinality;
  std::vector<OracleRow> rows;
  std::vector<std::size_t> front;  // row indices
  std::vector<OracleArgmin> argmin;
};

// Evaluates every config of the space at `budget`; argmin per lambda (ties to
// the earliest row).
OracleResult run_oracle(const SpaceSpec& space, const Evaluator& evaluator, std::size_t budget,
                        std::span<const LambdaWeights> lambdas, double alpha,
                        std::uint64_t cap = kDefaultEnumerationCap);

struct SweepRow {
  double ratio = 0.0;
  int remove_count = 0;
  std::uint64_t seed = 0;
  double best_average_error = 0.0;
  std::optional<FrontMember> best;
};

// One search per ratio with seed ^ ratio index.
std::vector<SweepRow> sweep_ratios(const Family& family, const RunConfig& cfg,
                                   std::span<const double> ratios);

// ---- CLI commands. Each returns an exit code and never throws. ----

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> T_max;
  std::optional<std::string> mode;
  std::optional<std::string> sparsity;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> manifest;
  std::optional<std::size_t> threads;
};

// Field precedence: flag > LAYERSTITCH_SEED (seed only) > file > default.
void apply_overrides(RunConfig& cfg, const RunOverrides& overrides);

int cmd_zoo_build(const std::optional<std::filesystem::path>& config,
                  const std::optional<std::filesystem::path>& output_dir,
                  const std::optional<std::uint64_t>& seed, std::ostream& out, std::ostream& err);
int cmd_search(const std::filesystem::path& run_config, const RunOverrides& overrides, bool resume,
               std::optional<std::size_t> halt_after, std::ostream& out, std::ostream& err);
int cmd_oracle(const std::filesystem::path& run_config, const RunOverrides& overrides,
               std::uint64_t cap, std::ostream& out, std::ostream& err);
int cmd_eval(const std::filesystem::path& run_config, const std::filesystem::path& config,
             const RunOverrides& overrides, std::ostream& out, std::ostream& err);
int cmd_pareto_export(const std::filesystem::path& run_config, const RunOverrides& overrides,
                      std::ostream& out, std::ostream& err);
int cmd_report_budgets(const std::filesystem::path& journal, std::ostream& out, std::ostream& err);
int cmd_sweep_ratio(const std::filesystem::path& run_config, const std::vector<double>& ratios,
                    const RunOverrides& overrides, std::ostream& out, std::ostream& err);

}  // namespace layerstitch
