#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "symrep/environments.hpp"

namespace symrep::env {
namespace {

using std::numbers::pi;

double orthogonality_drift(const Matrix3& m) {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[k * 3 + r] * m[k * 3 + c];
      worst = std::max(worst, std::abs(dot - (r == c ? 1.0 : 0.0)));
    }
  return worst;
}

double max_abs_diff(const Matrix3& a, const Matrix3& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 9; ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  return worst;
}

std::size_t argmax(const Observation& o) {
  return static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
}

// --- torus -------------------------------------------------------------------

TEST(Torus, UpWrapsAtTheTopRow) {
  EXPECT_EQ(torus_step({0, 0, 5}, TorusAction::Up), (TorusState{4, 0, 5}));
  EXPECT_EQ(torus_step({4, 3, 5}, TorusAction::Down), (TorusState{0, 3, 5}));
  EXPECT_EQ(torus_step({2, 0, 5}, TorusAction::Left), (TorusState{2, 4, 5}));
}

TEST(Torus, InversesAndCyclicOrderHoldForEveryState) {
  for (int p : {5, 10})
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) {
        const TorusState s{r, c, p};
        EXPECT_EQ(torus_step(torus_step(s, TorusAction::Up), TorusAction::Down), s);
        EXPECT_EQ(torus_step(torus_step(s, TorusAction::Left), TorusAction::Right), s);
        TorusState walk = s;
        for (int k = 0; k < p; ++k) walk = torus_step(walk, TorusAction::Right);
        EXPECT_EQ(walk, s);
        walk = s;
        for (int k = 0; k < p; ++k) walk = torus_step(walk, TorusAction::Up);
        EXPECT_EQ(walk, s);
      }
}

TEST(Torus, VerticalAndHorizontalMovesCommute) {
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      for (TorusAction v : {TorusAction::Up, TorusAction::Down})
        for (TorusAction h : {TorusAction::Left, TorusAction::Right}) {
          const TorusState s{r, c, 5};
          EXPECT_EQ(torus_step(torus_step(s, v), h), torus_step(torus_step(s, h), v));
        }
}

TEST(Torus, OneHotObservation) {
  const Observation o0 = torus_observe({0, 0, 5});
  ASSERT_EQ(o0.size(), 25u);
  EXPECT_EQ(o0[0], 1.0);
  for (std::size_t k = 1; k < 25; ++k) EXPECT_EQ(o0[k], 0.0);
  const Observation o7 = torus_observe({1, 2, 5});
  EXPECT_EQ(o7[7], 1.0);
  EXPECT_EQ(std::count(o7.begin(), o7.end(), 1.0), 1);
}

TEST(Torus, ObservationsAreInjective) {
  std::set<Observation> seen;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) seen.insert(torus_observe({r, c, 5}));
  EXPECT_EQ(seen.size(), 25u);
}

// --- sphere --------------------------------------------------------------------

TEST(Sphere, ZeroAngleLeavesStateUnchanged) {
  const SphereState s = sphere_step(SphereState{}, {Axis::Y, 0.8});
  EXPECT_EQ(sphere_step(s, {Axis::X, 0.0}), s);
}

TEST(Sphere, OppositeAnglesCancel) {
  SphereState s = sphere_step(SphereState{}, {Axis::X, 0.4});
  const SphereState back = sphere_step(sphere_step(s, {Axis::Z, 1.3}), {Axis::Z, -1.3});
  EXPECT_LT(max_abs_diff(back.orientation, s.orientation), 1e-12);
}

TEST(Sphere, FourQuarterTurnsAreIdentity) {
  SphereState s;
  for (int k = 0; k < 4; ++k) s = sphere_step(s, {Axis::X, pi / 2});
  EXPECT_LT(max_abs_diff(s.orientation, SphereState{}.orientation), 1e-10);
}

TEST(Sphere, LongWalksStayOrthogonal) {
  Rng rng(3);
  std::uniform_real_distribution<double> angle(-pi, pi);
  std::uniform_int_distribution<int> axis(0, 2);
  SphereState s;
  for (int k = 0; k < 10000; ++k) s = sphere_step(s, {static_cast<Axis>(axis(rng)), angle(rng)});
  EXPECT_LT(orthogonality_drift(s.orientation), 1e-10);
}

TEST(Sphere, IdentityPeaksAtReferenceVoxel) {
  const Observation o = sphere_observe(SphereState{});
  ASSERT_EQ(o.size(), 1000u);
  // (0,0,1) sits on a voxel boundary in x and y, so the peak is shared.
  EXPECT_NEAR(o[voxel_containing(kSphereReferencePoint)], o[argmax(o)], 1e-12);
  EXPECT_EQ(o[argmax(o)], 1.0);
}

TEST(Sphere, DensityIsNormalizedToUnitMaximum) {
  Rng rng(5);
  std::uniform_real_distribution<double> angle(-pi, pi);
  for (int trial = 0; trial < 20; ++trial) {
    const SphereState s = sphere_step(sphere_step(SphereState{}, {Axis::X, angle(rng)}),
                                      {Axis::Z, angle(rng)});
    const Observation o = sphere_observe(s);
    EXPECT_EQ(*std::max_element(o.begin(), o.end()), 1.0);
    EXPECT_GE(*std::min_element(o.begin(), o.end()), 0.0);
  }
}

TEST(Sphere, FullTurnGivesSameGrid) {
  const SphereState s = sphere_step(SphereState{}, {Axis::Y, 0.9});
  const SphereState turned = sphere_step(s, {Axis::X, 2 * pi});
  const Observation a = sphere_observe(s);
  const Observation b = sphere_observe(turned);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(Sphere, BallCenterFollowsRotation) {
  // A quarter turn about x carries +z to -y (right-handed rotation).
  const auto c = ball_center(sphere_step(SphereState{}, {Axis::X, pi / 2}));
  EXPECT_NEAR(c[0], 0.0, 1e-15);
  EXPECT_NEAR(std::abs(c[1]), 1.0, 1e-15);
  EXPECT_NEAR(c[2], 0.0, 1e-15);
}

// --- factor world ------------------------------------------------------------------

TEST(Factor, FiveIncrementsCycle) {
  FactorState s{0, 0};
  for (int k = 0; k < 5; ++k) s = factor_step(s, FactorAction::XPlus);
  EXPECT_EQ(s, (FactorState{0, 0}));
}

TEST(Factor, ColourActionsAreInverse) {
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const FactorState s{a, b};
      EXPECT_EQ(factor_step(factor_step(s, FactorAction::ColorPlus), FactorAction::ColorMinus), s);
    }
}

TEST(Factor, FactorsAreIndependent) {
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const FactorState s{a, b};
      for (int id = 0; id < 6; ++id) EXPECT_EQ(factor_step(s, static_cast<FactorAction>(id)).b, b);
      for (int id = 6; id < 8; ++id) EXPECT_EQ(factor_step(s, static_cast<FactorAction>(id)).a, a);
    }
}

TEST(Factor, PlainObservationIsOneHot) {
  const Observation o = factor_observe({0, 0});
  ASSERT_EQ(o.size(), 25u);
  EXPECT_EQ(o[0], 1.0);
  EXPECT_EQ(std::accumulate(o.begin(), o.end(), 0.0), 1.0);
  EXPECT_EQ(factor_observe({2, 3})[13], 1.0);
}

TEST(Factor, ObservationsAreInjectiveInBothModes) {
  const std::vector<double> mix = mixing_matrix(17);
  std::set<Observation> plain, mixed;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      plain.insert(factor_observe({a, b}));
      mixed.insert(factor_observe({a, b}, &mix));
    }
  EXPECT_EQ(plain.size(), 25u);
  EXPECT_EQ(mixed.size(), 25u);
}

TEST(Factor, MixingIsSeededOrthogonalAndRescaled) {
  const std::vector<double> m = mixing_matrix(42);
  EXPECT_EQ(m, mixing_matrix(42));
  EXPECT_NE(m, mixing_matrix(43));
  for (int r = 0; r < 25; ++r)
    for (int c = 0; c < 25; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 25; ++k) dot += m[k * 25 + r] * m[k * 25 + c];
      EXPECT_NEAR(dot, r == c ? 1.0 : 0.0, 1e-12);
    }
  const Observation o = factor_observe({3, 1}, &m);
  EXPECT_GE(*std::min_element(o.begin(), o.end()), 0.0);
  EXPECT_LE(*std::max_element(o.begin(), o.end()), 1.0);
}

// --- type-erased environment ---------------------------------------------------------

TEST(EnvironmentFacade, DiscreteGroupStructure) {
  for (EnvironmentKind kind : {EnvironmentKind::Torus, EnvironmentKind::Factor}) {
    const Environment env({kind, 5});
    for (int id = 0; id < static_cast<int>(env.action_count()); ++id) {
      const int inv = env.inverse_action(id);
      EXPECT_EQ(env.inverse_action(inv), id);
      EXPECT_EQ(env.action_order(id), 5);
      for (const State& s : env.enumerate_states()) {
        EXPECT_EQ(env.step(env.step(s, ActionRecord::discrete(id)), ActionRecord::discrete(inv)), s);
        State walk = s;
        for (int k = 0; k < env.action_order(id); ++k) walk = env.step(walk, ActionRecord::discrete(id));
        EXPECT_EQ(walk, s);
      }
    }
  }
}

TEST(EnvironmentFacade, EnumerationMatchesStateIndex) {
  const Environment env({EnvironmentKind::Torus, 10});
  const auto states = env.enumerate_states();
  ASSERT_EQ(states.size(), 100u);
  for (std::size_t k = 0; k < states.size(); ++k) EXPECT_EQ(env.state_index(states[k]), k);
}

TEST(EnvironmentFacade, CenterStateOfTorus) {
  const Environment env({EnvironmentKind::Torus, 5, StartPolicy::Center});
  EXPECT_EQ(std::get<TorusState>(env.center_state()), (TorusState{2, 2, 5}));
}

TEST(EnvironmentFacade, KindNamesRoundTrip) {
  for (EnvironmentKind k : {EnvironmentKind::Torus, EnvironmentKind::Sphere, EnvironmentKind::Factor})
    EXPECT_EQ(environment_kind_from_string(to_string(k)), k);
  EXPECT_FALSE(environment_kind_from_string("cube").has_value());
}

TEST(EnvironmentFacade, ContinuousActionsRespectRange) {
  const Environment env({EnvironmentKind::Sphere});
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const ActionRecord a = env.sample_action(rng, AngleRange{0.5});
    EXPECT_FALSE(a.is_discrete());
    EXPECT_GE(a.axis, 0);
    EXPECT_LE(a.axis, 2);
    EXPECT_LE(std::abs(a.angle), 0.5);
  }
}

// --- trajectories -------------------------------------------------------------------

TEST(Trajectories, LengthContract) {
  const Environment env({EnvironmentKind::Torus, 5});
  const Trajectory t = sample_trajectory(env, std::nullopt, 1, 7);
  EXPECT_EQ(t.observations.size(), 2u);
  EXPECT_EQ(t.actions.size(), 1u);
}

TEST(Trajectories, FixedSeedIsReproducible) {
  const Environment env({EnvironmentKind::Sphere});
  const Trajectory a = sample_trajectory(env, std::nullopt, 5, 11);
  const Trajectory b = sample_trajectory(env, std::nullopt, 5, 11);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_NE(a.actions, sample_trajectory(env, std::nullopt, 5, 12).actions);
}

TEST(Trajectories, ReplayReproducesObservationsInEveryEnvironment) {
  const std::vector<EnvironmentSpec> specs{{EnvironmentKind::Torus, 5},
                                           {EnvironmentKind::Torus, 10, StartPolicy::Center},
                                           {EnvironmentKind::Sphere},
                                           {EnvironmentKind::Factor, 5, StartPolicy::Random, true, 3}};
  for (const auto& spec : specs) {
    const Environment env(spec);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Trajectory t = sample_trajectory(env, std::nullopt, 10, seed);
      ASSERT_EQ(t.observations.size(), t.actions.size() + 1);
      EXPECT_EQ(replay(env, t), t.observations);
    }
  }
}

TEST(Trajectories, CenterStartBeginsAtCenter) {
  const Environment env({EnvironmentKind::Torus, 5, StartPolicy::Center});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Trajectory t = sample_trajectory(env, std::nullopt, 10, seed);
    EXPECT_EQ(t.observations.front(), env.observe(env.center_state()));
  }
}

TEST(Trajectories, DiscreteActionsAreRoughlyUniform) {
  const Environment env({EnvironmentKind::Factor});
  std::vector<int> counts(8, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed)
    for (const auto& a : sample_trajectory(env, std::nullopt, 5, seed).actions) ++counts[a.id];
  for (int c : counts) EXPECT_NEAR(c, 10000.0 / 8, 150.0);
}

TEST(DeriveSeed, DistinctCoordinatesGiveDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 30; ++a)
    for (std::uint64_t b = 0; b < 30; ++b) seen.insert(derive_seed(1, a, b));
  EXPECT_EQ(seen.size(), 900u);
  EXPECT_EQ(derive_seed(5, 1, 2), derive_seed(5, 1, 2));
  EXPECT_NE(derive_seed(5, 1, 2), derive_seed(6, 1, 2));
}

}  // namespace
}  // namespace symrep::env
