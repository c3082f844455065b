#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace symrep::cli;

  CLI::App app{"symrep: learn group-structured latent representations of symmetric environments"};
  app.require_subcommand(1);

  CommonOptions common;
  std::uint64_t seed = 0;
  std::string out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment configuration (JSON)")->required();
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "run seed (overrides seed)");
  };

  auto* train = app.add_subcommand("train", "train a model and write weights, report and config snapshot");
  add_common(train);

  AnalyzeOptions analyze_opts;
  auto* analyze = app.add_subcommand("analyze", "run analyses on trained weights");
  add_common(analyze);
  analyze->add_option("--weights", analyze_opts.weights, "weights file")->required();
  analyze->add_flag("--group-report", analyze_opts.flags.group_report, "commutator/inverse/cyclicity residuals");
  analyze->add_flag("--equivariance", analyze_opts.flags.equivariance, "equivariance error");
  analyze->add_flag("--atlas", analyze_opts.flags.atlas, "latent vector of every state");
  analyze->add_flag("--project-2d", analyze_opts.flags.project_2d, "random 2D projections of the atlas");
  auto* proj_seeds = analyze->add_option("--proj-seeds", analyze_opts.flags.proj_seeds,
                                         "number of projection seeds")
                         ->check(CLI::PositiveNumber);
  analyze->add_flag("--angle-sweep", analyze_opts.flags.angle_sweep, "continuous action angle sweep");
  analyze->add_flag("--dimension-usage", analyze_opts.flags.dimension_usage, "latent dimension usage");

  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("predict-bench", "multi-step prediction benchmark over training seeds");
  add_common(bench);
  bench->add_option("--seeds", bench_opts.seeds, "number of training seeds");
  bench->add_option("--horizon", bench_opts.horizon, "rollout horizon");
  bench->add_option("--trials", bench_opts.trials, "evaluation episodes per seed");

  std::size_t count = 0;
  auto* dataset = app.add_subcommand("export-dataset", "write trajectories as CSV plus metadata");
  add_common(dataset);
  dataset->add_option("--count", count, "number of trajectories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  for (auto* sub : {train, analyze, bench, dataset}) {
    if (!sub->parsed()) continue;
    if (sub->count("--out")) common.out = out;
    if (sub->count("--seed")) common.seed = seed;
  }
  analyze_opts.proj_seeds_set = proj_seeds->count() > 0;

  if (train->parsed()) return cmd_train(common, std::cout, std::cerr);
  if (analyze->parsed()) return cmd_analyze(common, analyze_opts, std::cout, std::cerr);
  if (bench->parsed()) return cmd_predict_bench(common, bench_opts, std::cout, std::cerr);
  return cmd_export_dataset(common, count, std::cout, std::cerr);
}
