#include <benchmark/benchmark.h>

#include "symrep/training.hpp"

namespace {

using namespace symrep;

train::TrainConfig config_for(env::EnvironmentKind kind) {
  train::TrainConfig c;
  c.environment.kind = kind;
  c.model_kind = kind == env::EnvironmentKind::Sphere ? model::ModelKind::StructuredContinuous
                                                      : model::ModelKind::StructuredDiscrete;
  return c;
}

// One optimisation step: batch generation, rollout loss, backward, Adam.
void BM_TrainStep(benchmark::State& state) {
  const auto kind = static_cast<env::EnvironmentKind>(state.range(0));
  const train::TrainConfig c = config_for(kind);
  const env::Environment environment(c.environment);
  model::Model m = train::make_model(c);
  auto params = m.parameters();
  ad::AdamState adam = ad::AdamState::for_parameters(params);
  std::int64_t step = 0;
  for (auto _ : state) {
    const auto batch = train::make_batch(environment, c, step++);
    ad::Tape tape;
    const auto loss = train::rollout_loss(tape, m, batch);
    for (Parameter* p : params) p->zero_grad();
    tape.backward(train::total_loss(loss.l_rec, loss.l_ent, 0.1));
    ad::adam_step(params, adam, {});
  }
  state.SetLabel(env::to_string(kind));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(env::EnvironmentKind::Torus))
    ->Arg(static_cast<int>(env::EnvironmentKind::Factor))
    ->Arg(static_cast<int>(env::EnvironmentKind::Sphere))
    ->Unit(benchmark::kMillisecond);

void BM_SampleTrajectory(benchmark::State& state) {
  const env::Environment environment({static_cast<env::EnvironmentKind>(state.range(0))});
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(env::sample_trajectory(environment, std::nullopt, 5, seed++));
}
BENCHMARK(BM_SampleTrajectory)
    ->Arg(static_cast<int>(env::EnvironmentKind::Torus))
    ->Arg(static_cast<int>(env::EnvironmentKind::Sphere));

}  // namespace

// libbenchmark_main.a ships LTO bytecode from another compiler release.
BENCHMARK_MAIN();
