#pragma once

// Synthetic symmetric environments: a periodic p x p torus world with
// one-hot observations, a ball on a sphere under continuous axis rotations
// observed through a voxel density grid, and a two-factor C5 x C5 world.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace symrep::env {

using Observation = std::vector<double>;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Torus world

enum class TorusAction : int { Up = 0, Down = 1, Left = 2, Right = 3 };

struct TorusState {
  int row = 0;
  int col = 0;
  int p = 5;

  friend bool operator==(const TorusState&, const TorusState&) = default;
};

/// Up decrements the row, down increments it; left/right act on the column.
/// Everything is reduced modulo p.
TorusState torus_step(TorusState s, TorusAction a);
/// One-hot of length p*p, hot at row*p + col.
Observation torus_observe(const TorusState& s);

// ---------------------------------------------------------------------------
// Sphere world

enum class Axis : int { X = 0, Y = 1, Z = 2 };

using Matrix3 = std::array<double, 9>;  // row-major

struct SphereState {
  Matrix3 orientation{1, 0, 0, 0, 1, 0, 0, 0, 1};

  friend bool operator==(const SphereState&, const SphereState&) = default;
};

struct ContinuousAction {
  Axis axis = Axis::X;
  double angle = 0.0;
};

inline constexpr int kVoxelsPerSide = 10;
inline constexpr std::array<double, 3> kSphereReferencePoint{0.0, 0.0, 1.0};

Matrix3 axis_rotation(Axis axis, double angle);
/// Left-multiplies the orientation by the axis rotation; re-orthonormalizes
/// when the orthogonality drift exceeds 1e-12.
SphereState sphere_step(const SphereState& s, const ContinuousAction& a);
std::array<double, 3> ball_center(const SphereState& s);
/// Flattened 10x10x10 Gaussian density (width one voxel) around the ball
/// center, normalized to a maximum of exactly 1. Index (ix*10 + iy)*10 + iz.
Observation sphere_observe(const SphereState& s);
/// Voxel index containing point p in [-1,1]^3.
std::size_t voxel_containing(const std::array<double, 3>& p);

// ---------------------------------------------------------------------------
// Factor world (C5 x C5)

enum class FactorAction : int {
  XPlus = 0,
  XMinus = 1,
  YPlus = 2,
  YMinus = 3,
  ZPlus = 4,
  ZMinus = 5,
  ColorPlus = 6,
  ColorMinus = 7,
};

inline constexpr int kFactorValues = 5;

struct FactorState {
  int a = 0;  // rotation factor
  int b = 0;  // colour factor

  friend bool operator==(const FactorState&, const FactorState&) = default;
};

FactorState factor_step(FactorState s, FactorAction action);

/// Fixed orthogonal 25x25 mixing matrix drawn from `seed`.
std::vector<double> mixing_matrix(std::uint64_t seed);

/// One-hot of a*5 + b; in mixed mode the one-hot is mapped through
/// `mixing` (row-major 25x25 orthogonal) and affinely rescaled to [0,1].
Observation factor_observe(const FactorState& s, const std::vector<double>* mixing = nullptr);

// ---------------------------------------------------------------------------
// Type-erased environment

enum class EnvironmentKind { Torus, Sphere, Factor };

enum class StartPolicy { Random, Center };

std::string to_string(EnvironmentKind kind);
std::optional<EnvironmentKind> environment_kind_from_string(const std::string& name);

struct EnvironmentSpec {
  EnvironmentKind kind = EnvironmentKind::Torus;
  int p = 5;  // torus periodicity
  StartPolicy start = StartPolicy::Random;
  bool mixed_observations = false;  // factor world only
  std::uint64_t mixing_seed = 0;

  friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

using State = std::variant<TorusState, SphereState, FactorState>;

/// Discrete actions carry `id`; continuous actions carry `axis` and `angle`.
struct ActionRecord {
  int id = -1;
  int axis = -1;
  double angle = 0.0;

  bool is_discrete() const { return id >= 0; }
  static ActionRecord discrete(int id) { return {id, -1, 0.0}; }
  static ActionRecord continuous(Axis axis, double angle) {
    return {-1, static_cast<int>(axis), angle};
  }
  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

/// Symmetric angle interval [-half_width, half_width] for continuous actions.
struct AngleRange {
  double half_width = 3.141592653589793;
};

class Environment {
 public:
  explicit Environment(EnvironmentSpec spec);

  const EnvironmentSpec& spec() const noexcept { return spec_; }
  EnvironmentKind kind() const noexcept { return spec_.kind; }
  bool is_discrete() const noexcept { return spec_.kind != EnvironmentKind::Sphere; }
  bool is_finite() const noexcept { return is_discrete(); }

  std::size_t observation_dim() const;
  /// Number of discrete actions (0 for continuous environments).
  std::size_t action_count() const;
  std::vector<std::string> action_names() const;
  /// Inverse action id of a discrete action.
  int inverse_action(int id) const;
  /// Order of a discrete action as a group element.
  int action_order(int id) const;

  State initial_state(Rng& rng) const;
  State center_state() const;
  State step(const State& s, const ActionRecord& a) const;
  Observation observe(const State& s) const;
  ActionRecord sample_action(Rng& rng, AngleRange range = {}) const;

  /// Every state of a finite environment, ordered by state_index.
  std::vector<State> enumerate_states() const;
  std::size_t state_index(const State& s) const;

 private:
  EnvironmentSpec spec_;
  std::vector<double> mixing_;
};

struct Trajectory {
  State start;
  std::vector<Observation> observations;
  std::vector<ActionRecord> actions;

  std::size_t length() const { return actions.size(); }
};

/// Random walk of m actions from `start` (or from the environment's start
/// policy when empty), seeded deterministically by `seed`.
Trajectory sample_trajectory(const Environment& env, std::optional<State> start, int m,
                             std::uint64_t seed, AngleRange range = {});

/// Re-applies the recorded actions from the recorded start state.
std::vector<Observation> replay(const Environment& env, const Trajectory& trajectory);

/// SplitMix64 mixing of a run seed with stream coordinates.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace symrep::env
