#include "symrep/environments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace symrep::env {

namespace {

int mod(int value, int p) {
  const int r = value % p;
  return r < 0 ? r + p : r;
}

Matrix3 multiply(const Matrix3& a, const Matrix3& b) {
  Matrix3 out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * b[k * 3 + c];
      out[r * 3 + c] = acc;
    }
  return out;
}

double orthogonality_drift(const Matrix3& m) {
  double acc = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[k * 3 + r] * m[k * 3 + c];
      const double d = dot - (r == c ? 1.0 : 0.0);
      acc += d * d;
    }
  return std::sqrt(acc);
}

// Gram-Schmidt on the columns; keeps the determinant sign.
Matrix3 reorthonormalize(const Matrix3& m) {
  std::array<std::array<double, 3>, 3> cols{};
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) cols[c][r] = m[r * 3 + c];
  for (int c = 0; c < 3; ++c) {
    for (int prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (int r = 0; r < 3; ++r) dot += cols[c][r] * cols[prev][r];
      for (int r = 0; r < 3; ++r) cols[c][r] -= dot * cols[prev][r];
    }
    double norm = 0.0;
    for (int r = 0; r < 3; ++r) norm += cols[c][r] * cols[c][r];
    norm = std::sqrt(norm);
    for (int r = 0; r < 3; ++r) cols[c][r] /= norm;
  }
  Matrix3 out{};
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) out[r * 3 + c] = cols[c][r];
  return out;
}

double voxel_center(int k) {
  const double width = 2.0 / kVoxelsPerSide;
  return -1.0 + width * (k + 0.5);
}

}  // namespace

// ---------------------------------------------------------------------------

TorusState torus_step(TorusState s, TorusAction a) {
  switch (a) {
    case TorusAction::Up: s.row = mod(s.row - 1, s.p); break;
    case TorusAction::Down: s.row = mod(s.row + 1, s.p); break;
    case TorusAction::Left: s.col = mod(s.col - 1, s.p); break;
    case TorusAction::Right: s.col = mod(s.col + 1, s.p); break;
  }
  return s;
}

Observation torus_observe(const TorusState& s) {
  Observation obs(static_cast<std::size_t>(s.p * s.p), 0.0);
  obs[static_cast<std::size_t>(s.row * s.p + s.col)] = 1.0;
  return obs;
}

// ---------------------------------------------------------------------------

Matrix3 axis_rotation(Axis axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  switch (axis) {
    case Axis::X: return {1, 0, 0, 0, c, -s, 0, s, c};
    case Axis::Y: return {c, 0, s, 0, 1, 0, -s, 0, c};
    case Axis::Z: return {c, -s, 0, s, c, 0, 0, 0, 1};
  }
  throw std::invalid_argument("unknown rotation axis");
}

SphereState sphere_step(const SphereState& s, const ContinuousAction& a) {
  SphereState next{multiply(axis_rotation(a.axis, a.angle), s.orientation)};
  if (orthogonality_drift(next.orientation) > 1e-12) {
    next.orientation = reorthonormalize(next.orientation);
  }
  return next;
}

std::array<double, 3> ball_center(const SphereState& s) {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc += s.orientation[r * 3 + k] * kSphereReferencePoint[k];
    out[r] = acc;
  }
  return out;
}

std::size_t voxel_containing(const std::array<double, 3>& p) {
  std::size_t index = 0;
  for (double coord : p) {
    int k = static_cast<int>(std::floor((coord + 1.0) * kVoxelsPerSide / 2.0));
    k = std::clamp(k, 0, kVoxelsPerSide - 1);
    index = index * kVoxelsPerSide + static_cast<std::size_t>(k);
  }
  return index;
}

Observation sphere_observe(const SphereState& s) {
  const auto center = ball_center(s);
  const double sigma = 2.0 / kVoxelsPerSide;
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  Observation grid(static_cast<std::size_t>(kVoxelsPerSide * kVoxelsPerSide * kVoxelsPerSide));
  double peak = 0.0;
  std::size_t k = 0;
  for (int ix = 0; ix < kVoxelsPerSide; ++ix) {
    const double dx = voxel_center(ix) - center[0];
    for (int iy = 0; iy < kVoxelsPerSide; ++iy) {
      const double dy = voxel_center(iy) - center[1];
      for (int iz = 0; iz < kVoxelsPerSide; ++iz) {
        const double dz = voxel_center(iz) - center[2];
        const double v = std::exp(-(dx * dx + dy * dy + dz * dz) * inv_two_sigma_sq);
        grid[k++] = v;
        peak = std::max(peak, v);
      }
    }
  }
  for (double& v : grid) v /= peak;
  return grid;
}

// ---------------------------------------------------------------------------

FactorState factor_step(FactorState s, FactorAction action) {
  switch (action) {
    case FactorAction::XPlus:
    case FactorAction::YPlus:
    case FactorAction::ZPlus: s.a = mod(s.a + 1, kFactorValues); break;
    case FactorAction::XMinus:
    case FactorAction::YMinus:
    case FactorAction::ZMinus: s.a = mod(s.a - 1, kFactorValues); break;
    case FactorAction::ColorPlus: s.b = mod(s.b + 1, kFactorValues); break;
    case FactorAction::ColorMinus: s.b = mod(s.b - 1, kFactorValues); break;
  }
  return s;
}

std::vector<double> mixing_matrix(std::uint64_t seed) {
  constexpr std::size_t dim = kFactorValues * kFactorValues;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  // Rows of a Gaussian matrix, orthonormalized by modified Gram-Schmidt.
  std::vector<double> q(dim * dim);
  for (double& v : q) v = normal(rng);
  for (std::size_t r = 0; r < dim; ++r) {
    double* row = q.data() + r * dim;
    for (std::size_t prev = 0; prev < r; ++prev) {
      const double* other = q.data() + prev * dim;
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += row[c] * other[c];
      for (std::size_t c = 0; c < dim; ++c) row[c] -= dot * other[c];
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) norm += row[c] * row[c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < dim; ++c) row[c] /= norm;
  }
  return q;
}

Observation factor_observe(const FactorState& s, const std::vector<double>* mixing) {
  constexpr std::size_t dim = kFactorValues * kFactorValues;
  const auto hot = static_cast<std::size_t>(s.a * kFactorValues + s.b);
  Observation obs(dim, 0.0);
  if (mixing == nullptr) {
    obs[hot] = 1.0;
    return obs;
  }
  // Q e_hot is column `hot`; entries of an orthogonal matrix lie in [-1,1].
  for (std::size_t r = 0; r < dim; ++r) obs[r] = 0.5 * ((*mixing)[r * dim + hot] + 1.0);
  return obs;
}

// ---------------------------------------------------------------------------

std::string to_string(EnvironmentKind kind) {
  switch (kind) {
    case EnvironmentKind::Torus: return "torus";
    case EnvironmentKind::Sphere: return "sphere";
    case EnvironmentKind::Factor: return "factor";
  }
  return "unknown";
}

std::optional<EnvironmentKind> environment_kind_from_string(const std::string& name) {
  if (name == "torus") return EnvironmentKind::Torus;
  if (name == "sphere") return EnvironmentKind::Sphere;
  if (name == "factor") return EnvironmentKind::Factor;
  return std::nullopt;
}

Environment::Environment(EnvironmentSpec spec) : spec_(spec) {
  if (spec_.kind == EnvironmentKind::Torus && spec_.p < 2) {
    throw std::invalid_argument("torus periodicity p must be >= 2");
  }
  if (spec_.kind == EnvironmentKind::Factor && spec_.mixed_observations) {
    mixing_ = mixing_matrix(spec_.mixing_seed);
  }
}

std::size_t Environment::observation_dim() const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: return static_cast<std::size_t>(spec_.p * spec_.p);
    case EnvironmentKind::Sphere:
      return static_cast<std::size_t>(kVoxelsPerSide * kVoxelsPerSide * kVoxelsPerSide);
    case EnvironmentKind::Factor: return kFactorValues * kFactorValues;
  }
  return 0;
}

std::size_t Environment::action_count() const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: return 4;
    case EnvironmentKind::Sphere: return 0;
    case EnvironmentKind::Factor: return 8;
  }
  return 0;
}

std::vector<std::string> Environment::action_names() const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: return {"up", "down", "left", "right"};
    case EnvironmentKind::Sphere: return {"x", "y", "z"};
    case EnvironmentKind::Factor:
      return {"x+", "x-", "y+", "y-", "z+", "z-", "color+", "color-"};
  }
  return {};
}

int Environment::inverse_action(int id) const {
  if (!is_discrete() || id < 0 || id >= static_cast<int>(action_count())) {
    throw std::out_of_range("no discrete action " + std::to_string(id));
  }
  // Both discrete action sets pair ids (2k, 2k+1).
  return id ^ 1;
}

int Environment::action_order(int id) const {
  if (!is_discrete() || id < 0 || id >= static_cast<int>(action_count())) {
    throw std::out_of_range("no discrete action " + std::to_string(id));
  }
  return spec_.kind == EnvironmentKind::Torus ? spec_.p : kFactorValues;
}

State Environment::center_state() const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: return TorusState{spec_.p / 2, spec_.p / 2, spec_.p};
    case EnvironmentKind::Sphere: return SphereState{};
    case EnvironmentKind::Factor: return FactorState{kFactorValues / 2, kFactorValues / 2};
  }
  return SphereState{};
}

State Environment::initial_state(Rng& rng) const {
  if (spec_.start == StartPolicy::Center) return center_state();
  switch (spec_.kind) {
    case EnvironmentKind::Torus: {
      std::uniform_int_distribution<int> cell(0, spec_.p - 1);
      const int row = cell(rng);
      const int col = cell(rng);
      return TorusState{row, col, spec_.p};
    }
    case EnvironmentKind::Sphere: {
      // Uniform random rotation from a normalized Gaussian quaternion.
      std::normal_distribution<double> normal;
      double w = normal(rng), x = normal(rng), y = normal(rng), z = normal(rng);
      const double norm = std::sqrt(w * w + x * x + y * y + z * z);
      w /= norm, x /= norm, y /= norm, z /= norm;
      SphereState s;
      s.orientation = {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
                       2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
                       2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
      return s;
    }
    case EnvironmentKind::Factor: {
      std::uniform_int_distribution<int> value(0, kFactorValues - 1);
      const int a = value(rng);
      const int b = value(rng);
      return FactorState{a, b};
    }
  }
  return center_state();
}

State Environment::step(const State& s, const ActionRecord& a) const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus:
      if (!a.is_discrete() || a.id >= 4) throw std::out_of_range("invalid torus action");
      return torus_step(std::get<TorusState>(s), static_cast<TorusAction>(a.id));
    case EnvironmentKind::Factor:
      if (!a.is_discrete() || a.id >= 8) throw std::out_of_range("invalid factor action");
      return factor_step(std::get<FactorState>(s), static_cast<FactorAction>(a.id));
    case EnvironmentKind::Sphere:
      if (a.is_discrete() || a.axis < 0 || a.axis > 2) {
        throw std::out_of_range("invalid sphere action");
      }
      return sphere_step(std::get<SphereState>(s), {static_cast<Axis>(a.axis), a.angle});
  }
  return s;
}

Observation Environment::observe(const State& s) const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: return torus_observe(std::get<TorusState>(s));
    case EnvironmentKind::Sphere: return sphere_observe(std::get<SphereState>(s));
    case EnvironmentKind::Factor:
      return factor_observe(std::get<FactorState>(s), mixing_.empty() ? nullptr : &mixing_);
  }
  return {};
}

ActionRecord Environment::sample_action(Rng& rng, AngleRange range) const {
  if (is_discrete()) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(action_count()) - 1);
    return ActionRecord::discrete(pick(rng));
  }
  std::uniform_int_distribution<int> axis(0, 2);
  const int ax = axis(rng);
  std::uniform_real_distribution<double> angle(-range.half_width, range.half_width);
  return ActionRecord::continuous(static_cast<Axis>(ax), angle(rng));
}

std::vector<State> Environment::enumerate_states() const {
  std::vector<State> states;
  switch (spec_.kind) {
    case EnvironmentKind::Torus:
      for (int r = 0; r < spec_.p; ++r)
        for (int c = 0; c < spec_.p; ++c) states.emplace_back(TorusState{r, c, spec_.p});
      break;
    case EnvironmentKind::Factor:
      for (int a = 0; a < kFactorValues; ++a)
        for (int b = 0; b < kFactorValues; ++b) states.emplace_back(FactorState{a, b});
      break;
    case EnvironmentKind::Sphere:
      throw std::logic_error("sphere environment has infinitely many states");
  }
  return states;
}

std::size_t Environment::state_index(const State& s) const {
  switch (spec_.kind) {
    case EnvironmentKind::Torus: {
      const auto& t = std::get<TorusState>(s);
      return static_cast<std::size_t>(t.row * spec_.p + t.col);
    }
    case EnvironmentKind::Factor: {
      const auto& f = std::get<FactorState>(s);
      return static_cast<std::size_t>(f.a * kFactorValues + f.b);
    }
    case EnvironmentKind::Sphere:
      throw std::logic_error("sphere states are not indexable");
  }
  return 0;
}

// ---------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL + 1));
}

Trajectory sample_trajectory(const Environment& env, std::optional<State> start, int m,
                             std::uint64_t seed, AngleRange range) {
  if (m < 1) throw std::invalid_argument("trajectory length m must be >= 1");
  Rng rng(seed);
  Trajectory traj;
  traj.start = start ? *start : env.initial_state(rng);
  State s = traj.start;
  traj.observations.reserve(static_cast<std::size_t>(m) + 1);
  traj.actions.reserve(static_cast<std::size_t>(m));
  traj.observations.push_back(env.observe(s));
  for (int k = 0; k < m; ++k) {
    const ActionRecord a = env.sample_action(rng, range);
    s = env.step(s, a);
    traj.actions.push_back(a);
    traj.observations.push_back(env.observe(s));
  }
  return traj;
}

std::vector<Observation> replay(const Environment& env, const Trajectory& trajectory) {
  std::vector<Observation> out;
  State s = trajectory.start;
  out.push_back(env.observe(s));
  for (const auto& a : trajectory.actions) {
    s = env.step(s, a);
    out.push_back(env.observe(s));
  }
  return out;
}

}  // namespace symrep::env
