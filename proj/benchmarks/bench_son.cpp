#include <benchmark/benchmark.h>

#include <random>

#include "symrep/autodiff.hpp"
#include "symrep/son.hpp"

namespace {

using namespace symrep;

son::RotationParams random_params(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  son::RotationParams p(n);
  for (double& a : p.angles()) a = dist(rng);
  return p;
}

void BM_ComposeRepresentation(benchmark::State& state) {
  const auto p = random_params(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(son::compose_representation(p));
}
BENCHMARK(BM_ComposeRepresentation)->DenseRange(2, 8, 2);

void BM_RepresentationBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = random_params(n, 2);
  son::RepresentationMatrix upstream(n);
  for (auto _ : state) benchmark::DoNotOptimize(son::representation_backward(p, upstream));
}
BENCHMARK(BM_RepresentationBackward)->DenseRange(2, 8, 2);

// Batched forward + backward through the tape, as used by training.
void BM_TapeComposeApply(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::size_t k = son::num_planes(n);
  constexpr std::size_t kActions = 8, kBatch = 16;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor angles(Shape{kActions, k});
  Tensor z(Shape{kBatch, static_cast<std::size_t>(n)});
  for (double& v : angles.values()) v = dist(rng);
  for (double& v : z.values()) v = dist(rng);
  std::vector<std::size_t> index(kBatch);
  for (std::size_t b = 0; b < kBatch; ++b) index[b] = b % kActions;
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var a = tape.variable(angles);
    const ad::Var out = ad::apply_rotations(ad::compose_rotations(a, n), tape.constant(z), index);
    tape.backward(ad::add(ad::sum(out), ad::entanglement(a, n)));
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_TapeComposeApply)->Arg(4)->Arg(6);

}  // namespace
