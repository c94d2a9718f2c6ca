// layerstitch command-line entry point.

#include <CLI11.hpp>

#include <iostream>

#include "layerstitch/app.hpp"

namespace ls = layerstitch;

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> T_max;
  std::optional<std::string> mode;
  std::optional<std::string> sparsity;
  std::optional<std::string> output_dir;
  std::optional<std::string> manifest;
  std::optional<std::size_t> threads;

  ls::RunOverrides overrides() const {
    ls::RunOverrides o;
    o.seed = seed;
    o.T_max = T_max;
    o.mode = mode;
    o.sparsity = sparsity;
    if (output_dir) o.output_dir = *output_dir;
    if (manifest) o.manifest = *manifest;
    o.threads = threads;
    return o;
  }
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("config", f.config, "Run config JSON")->required();
  cmd->add_option("--seed", f.seed, "Override the run seed");
  cmd->add_option("--T-max", f.T_max, "Override the trial cap");
  cmd->add_option("--mode", f.mode, "Space mode: full, remove_only, select_remove, fold");
  cmd->add_option("--sparsity", f.sparsity, "Sparsity ratio, decimal or p/q");
  cmd->add_option("--output-dir", f.output_dir, "Override the output directory");
  cmd->add_option("--manifest", f.manifest, "Override the zoo manifest path");
  cmd->add_option("--threads", f.threads, "Worker threads (default 1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning by layer removal, selection and merging"};
  app.require_subcommand(1);
  int code = 0;

  auto* zoo = app.add_subcommand("zoo", "Model zoo");
  zoo->require_subcommand(1);
  auto* zoo_build = zoo->add_subcommand("build", "Train the base model and its task variants");
  std::optional<std::string> zoo_config, zoo_out;
  std::optional<std::uint64_t> zoo_seed;
  zoo_build->add_option("config", zoo_config, "Zoo config JSON (defaults when omitted)");
  zoo_build->add_option("--output-dir", zoo_out, "Override the output directory");
  zoo_build->add_option("--seed", zoo_seed, "Override the zoo seed");
  zoo_build->callback([&] {
    std::optional<std::filesystem::path> cfg, out;
    if (zoo_config) cfg = *zoo_config;
    if (zoo_out) out = *zoo_out;
    code = ls::cmd_zoo_build(cfg, out, zoo_seed, std::cout, std::cerr);
  });

  auto* search = app.add_subcommand("search", "Pruning search");
  search->require_subcommand(1);
  RunFlags run_flags, resume_flags;
  std::optional<std::size_t> run_halt, resume_halt;
  auto* search_run = search->add_subcommand("run", "Start a search from scratch");
  add_run_flags(search_run, run_flags);
  search_run->add_option("--halt-after", run_halt, "Stop resumably after this many trials");
  search_run->callback([&] {
    code = ls::cmd_search(run_flags.config, run_flags.overrides(), false, run_halt, std::cout, std::cerr);
  });
  auto* search_resume = search->add_subcommand("resume", "Continue a search from its journal");
  add_run_flags(search_resume, resume_flags);
  search_resume->add_option("--halt-after", resume_halt, "Stop resumably after this many trials");
  search_resume->callback([&] {
    code = ls::cmd_search(resume_flags.config, resume_flags.overrides(), true, resume_halt, std::cout,
                          std::cerr);
  });

  auto* oracle = app.add_subcommand("oracle", "Exhaustive evaluation");
  oracle->require_subcommand(1);
  auto* oracle_enum = oracle->add_subcommand("enumerate", "Evaluate every config of the space");
  RunFlags oracle_flags;
  std::uint64_t cap = ls::kDefaultEnumerationCap;
  add_run_flags(oracle_enum, oracle_flags);
  oracle_enum->add_option("--cap", cap, "Refuse spaces larger than this");
  oracle_enum->callback([&] {
    code = ls::cmd_oracle(oracle_flags.config, oracle_flags.overrides(), cap, std::cout, std::cerr);
  });

  auto* eval = app.add_subcommand("eval", "Assemble and evaluate one config at full budget");
  RunFlags eval_flags;
  std::string eval_config;
  add_run_flags(eval, eval_flags);
  eval->add_option("prune_config", eval_config, "Config JSON (bare, a journal line, or a front member)")
      ->required();
  eval->callback([&] {
    code = ls::cmd_eval(eval_flags.config, eval_config, eval_flags.overrides(), std::cout, std::cerr);
  });

  auto* pareto = app.add_subcommand("pareto", "Pareto front");
  pareto->require_subcommand(1);
  auto* pareto_export = pareto->add_subcommand("export", "Rebuild exports from the journal");
  RunFlags pareto_flags;
  add_run_flags(pareto_export, pareto_flags);
  pareto_export->callback([&] {
    code = ls::cmd_pareto_export(pareto_flags.config, pareto_flags.overrides(), std::cout, std::cerr);
  });

  auto* report = app.add_subcommand("report", "Reports");
  report->require_subcommand(1);
  auto* report_budgets = report->add_subcommand("budgets", "Trials per budget rung");
  std::string journal;
  report_budgets->add_option("journal", journal, "Journal JSONL")->required();
  report_budgets->callback([&] { code = ls::cmd_report_budgets(journal, std::cout, std::cerr); });

  auto* sweep = app.add_subcommand("sweep", "Analysis sweeps");
  sweep->require_subcommand(1);
  auto* sweep_ratio = sweep->add_subcommand("ratio", "One search per pruning ratio");
  RunFlags sweep_flags;
  std::vector<double> ratios;
  add_run_flags(sweep_ratio, sweep_flags);
  sweep_ratio->add_option("--ratios", ratios, "Pruning ratios in [0, 1)")->delimiter(',');
  sweep_ratio->callback([&] {
    code = ls::cmd_sweep_ratio(sweep_flags.config, ratios, sweep_flags.overrides(), std::cout, std::cerr);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ls::kExitConfig;
  }
  return code;
}
