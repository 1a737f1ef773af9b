// layoutplan: plan layouts with an LLM, train the example sampler, evaluate.
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "layoutplan/commands.hpp"

namespace lp = layoutplan;

namespace {

void add_common(CLI::App* cmd, lp::CommonOptions& o, bool with_shots) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the configured seed");
  if (with_shots) cmd->add_option("--shots", o.shots, "In-context examples per prompt");
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM layout planner with a learned in-context example sampler"};
  app.set_version_flag("--version", lp::kVersion);
  app.require_subcommand(1);

  lp::PlanOptions plan;
  std::string plan_strategy = "policy";
  auto* plan_cmd = app.add_subcommand("plan", "Plan layouts for captions");
  add_common(plan_cmd, plan.common, true);
  plan_cmd->add_option("--strategy", plan_strategy, "random | nn | policy");
  plan_cmd->add_option("--caption", plan.caption, "A single caption");
  plan_cmd->add_option("--captions-file", plan.captions_file, "JSON Lines {id, caption} or one caption per line")
      ->check(CLI::ExistingFile);
  plan_cmd->add_flag("--svg", plan.svg, "Also render each layout as SVG");

  lp::PlanOptions base;
  std::string base_strategy = "random";
  auto* base_cmd = app.add_subcommand("baselines", "Plan with random or nearest-neighbor example selection");
  add_common(base_cmd, base.common, true);
  base_cmd->add_option("--strategy", base_strategy, "random | nn");
  base_cmd->add_option("--captions-file", base.captions_file)->check(CLI::ExistingFile);
  base_cmd->add_flag("--svg", base.svg);

  lp::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-sampler", "Train the example-selection policy");
  add_common(train_cmd, train.common, true);
  train_cmd->add_flag("--resume", train.resume, "Continue from <out>/checkpoint.json");

  lp::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score generated layouts against gold layouts");
  add_common(eval_cmd, eval.common, false);
  eval_cmd->add_option("--generated", eval.generated)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold", eval.gold, "Gold layouts; one file per subset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--generated-features", eval.generated_features)->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold-features", eval.gold_features)->check(CLI::ExistingFile);

  lp::BuildTestsetOptions testset;
  auto* testset_cmd = app.add_subcommand("build-testset", "Tag captions and write the evaluation subsets");
  add_common(testset_cmd, testset.common, false);

  std::uint64_t kernel_seed = 0;
  auto* kernel_cmd = app.add_subcommand("kernel-check", "Run the relation-kernel invariant suite");
  kernel_cmd->add_option("--seed", kernel_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lp::kExitConfig;
  }

  return lp::run_guarded(
      [&]() -> int {
        if (*plan_cmd) {
          plan.strategy = lp::parse_strategy(plan_strategy);
          return lp::cmd_plan(plan, std::cerr);
        }
        if (*base_cmd) {
          base.strategy = lp::parse_strategy(base_strategy);
          return lp::cmd_baselines(base, std::cerr);
        }
        if (*train_cmd) return lp::cmd_train_sampler(train, std::cerr);
        if (*eval_cmd) return lp::cmd_eval(eval, std::cout);
        if (*testset_cmd) return lp::cmd_build_testset(testset, std::cout);
        if (*kernel_cmd) return lp::cmd_kernel_check(kernel_seed, std::cout);
        return lp::kExitConfig;
      },
      std::cerr);
}
