#pragma once

// Post-training checks and figure data: group-axiom residuals, equivariance
// error, multi-step rollout error curves, latent atlases with 2D random
// projections, latent dimension usage and continuous angle sweeps.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "symrep/environments.hpp"
#include "symrep/models.hpp"

namespace symrep::analysis {

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Group structure

struct GroupReport {
  std::vector<std::string> action_names;
  std::vector<int> inverse_of;
  std::vector<int> orders;
  /// ||g_a g_inv(a) - I||_F per action
  std::vector<double> inverse_residuals;
  /// ||g_a^order - I||_F per action
  std::vector<double> cyclicity_residuals;
  /// ||g_a g_b - g_b g_a||_F, row-major action x action
  std::vector<double> commutators;

  double commutator(std::size_t a, std::size_t b) const {
    return commutators[a * action_names.size() + b];
  }
  double max_residual() const;
  /// Human-readable table.
  std::string summary() const;
};

GroupReport group_report(const model::Model& model, const env::Environment& environment);
void write_group_report_csv(const GroupReport& report, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Equivariance

struct EquivarianceResult {
  double mean = 0.0;
  double max = 0.0;
  std::size_t samples = 0;
};

/// ||encode(step(s,a)) - action_matrix(a) encode(s)||_2 over every
/// (state, action) pair of a finite environment, or `samples` random draws
/// for a continuous one.
EquivarianceResult equivariance_error(const model::Model& model,
                                      const env::Environment& environment,
                                      std::size_t samples = 1000, std::uint64_t seed = 0);
void write_equivariance_csv(const EquivarianceResult& result, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Multi-step prediction

/// Mean BCE of predicted probabilities against a target; terms with a zero
/// coefficient are skipped so exact predictions score exactly 0.
double bce_probabilities(std::span<const double> probabilities, std::span<const double> target);

/// Produces next-observation probabilities along an episode.
class RolloutPredictor {
 public:
  virtual ~RolloutPredictor() = default;
  virtual std::string name() const = 0;
  virtual void start(const env::Observation& first) = 0;
  /// `truth` is only consulted by harness oracles.
  virtual std::vector<double> advance(const env::ActionRecord& action,
                                      const env::Observation& truth) = 0;
};

/// Encodes once, then rolls the latent forward with the action matrices.
std::unique_ptr<RolloutPredictor> structured_predictor(const model::Model& model,
                                                       std::string name);
/// Re-encodes its own previous prediction at every step.
std::unique_ptr<RolloutPredictor> direct_predictor(const model::Model& model, std::string name);
/// Returns the true observation; error is identically zero.
std::unique_ptr<RolloutPredictor> oracle_predictor();

struct CurvePoint {
  int step = 0;
  double mean_error = 0.0;
  double error_ci = 0.0;  // 95% half-width
  double mean_accuracy = 0.0;
  double accuracy_ci = 0.0;
};

using RolloutCurve = std::vector<CurvePoint>;

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sample stddev / sqrt(count); 0 for count < 2
};
MeanCi mean_ci(std::span<const double> values);

/// Per-predictor error series over `trials` random episodes of length
/// `horizon`, starting from the environment's start policy.
std::vector<RolloutCurve> rollout_error_curve(std::span<RolloutPredictor* const> predictors,
                                              const env::Environment& environment, int horizon,
                                              int trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Latent geometry

struct AtlasRow {
  std::size_t state = 0;
  model::LatentVector latent;
};

std::vector<AtlasRow> latent_atlas(const model::Model& model, const env::Environment& environment);
void write_atlas_csv(std::span<const AtlasRow> atlas, const std::filesystem::path& path);

struct ProjectionSpec {
  std::vector<double> u;
  std::vector<double> v;
  std::uint64_t seed = 0;

  /// Orthonormalized Gaussian pair drawn from `seed`.
  static ProjectionSpec random(int n, std::uint64_t seed);
  /// Throws std::invalid_argument unless u, v are orthonormal within 1e-12.
  void validate() const;
};

struct ProjectedRow {
  std::size_t state = 0;
  double u = 0.0;
  double v = 0.0;
};

std::vector<ProjectedRow> project_2d(std::span<const AtlasRow> atlas, const ProjectionSpec& spec);
void write_projection_csv(std::span<const ProjectedRow> rows, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Disentanglement reporting

inline constexpr double kUsageThreshold = 0.05;

struct DimensionUsage {
  double threshold = kUsageThreshold;
  std::vector<double> scores;  // per latent dimension
  std::vector<bool> used;

  int used_count() const;
};

/// Score of dimension d: max |canonical angle| over actions and planes
/// containing d.
DimensionUsage dimension_usage(const model::Model& model, double threshold = kUsageThreshold);
void write_dimension_usage_csv(const DimensionUsage& usage, const std::filesystem::path& path);

/// Canonical angles of every discrete action, one row per action.
void write_action_angles_csv(const model::Model& model, const env::Environment& environment,
                             const std::filesystem::path& path);

struct SweepRow {
  int axis = 0;
  double angle = 0.0;
  std::vector<double> thetas;  // raw network outputs
};

struct AxisSweepSummary {
  int axis = 0;
  std::size_t dominant_plane = 0;   // offset with the largest |canonical theta|
  double dominant_peak = 0.0;
  std::size_t planes_above = 0;     // planes whose |canonical theta| exceeds 0.1 anywhere
  double off_plane_mean_abs = 0.0;  // mean |canonical theta| outside the dominant plane
  bool monotone_half_turn = false;  // dominant theta monotone on [-pi/2, pi/2]
};

struct AngleSweep {
  std::vector<SweepRow> rows;
  std::vector<AxisSweepSummary> summaries;
};

/// Evaluates the continuous action network over `axes` x `angles`.
AngleSweep continuous_angle_sweep(const model::Model& model, std::span<const int> axes,
                                  std::span<const double> angles);
std::vector<double> uniform_grid(double lo, double hi, std::size_t points);
void write_angle_sweep_csv(const AngleSweep& sweep, const std::filesystem::path& path);

}  // namespace symrep::analysis
