#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "symrep/autodiff.hpp"
#include "symrep/environments.hpp"
#include "symrep/models.hpp"

namespace symrep::train {

// ---------------------------------------------------------------------------
// Schedules

struct ConstantLambda {
  double value = 0.0;
  friend bool operator==(const ConstantLambda&, const ConstantLambda&) = default;
};

/// 0 before start_step, linear up to lambda_max at end_step, flat after.
struct LinearRampLambda {
  std::int64_t start_step = 0;
  std::int64_t end_step = 10000;
  double lambda_max = 0.1;
  friend bool operator==(const LinearRampLambda&, const LinearRampLambda&) = default;
};

/// lambda_low before switch_fraction * total_steps, lambda_high from then on.
struct StepLambda {
  double switch_fraction = 0.5;
  double lambda_low = 0.0;
  double lambda_high = 0.1;
  friend bool operator==(const StepLambda&, const StepLambda&) = default;
};

using LambdaSchedule = std::variant<ConstantLambda, LinearRampLambda, StepLambda>;

double lambda_at(const LambdaSchedule& schedule, std::int64_t step, std::int64_t total_steps);

/// Symmetric angle range widened linearly from start to end half-width.
struct Curriculum {
  double start_half_width = 2.0 * 3.141592653589793 / 5.0;
  double end_half_width = 3.141592653589793;
  friend bool operator==(const Curriculum&, const Curriculum&) = default;
};

/// Range at `step`; reaches the end width on the last step (total_steps - 1).
env::AngleRange curriculum_range(const Curriculum& curriculum, std::int64_t step,
                                 std::int64_t total_steps);

// ---------------------------------------------------------------------------

struct TrainConfig {
  env::EnvironmentSpec environment;
  model::ModelKind model_kind = model::ModelKind::StructuredDiscrete;
  int latent_dim = 4;
  int rollout_length = 5;
  int batch_size = 16;
  std::int64_t total_steps = 10000;
  double learning_rate = 1e-3;
  LambdaSchedule lambda = LinearRampLambda{0, 6667, 0.1};
  Curriculum curriculum;
  std::uint64_t seed = 0;
  double angle_init_range = 0.1;
  /// Fills the elapsed_ms column. Off by default so reports stay
  /// byte-identical across runs.
  bool record_wall_clock = false;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Throws ConfigurationError naming the offending field.
void validate(const TrainConfig& config);

/// Model of the configured kind for the configured environment.
model::Model make_model(const TrainConfig& config);

struct StepRecord {
  std::int64_t step = 0;
  double l_rec = 0.0;
  double l_ent = 0.0;
  double lambda = 0.0;
  std::optional<double> elapsed_ms;
};

struct TrainReport {
  std::vector<StepRecord> steps;
};

void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RolloutLoss {
  ad::Var l_rec;   // batch mean over trajectories of the per-step BCE sum
  ad::Var l_ent;   // entanglement of the representations used (structured models)
  std::vector<ad::Var> reconstructions;  // per-step logits [B x D]
};

/// Encodes o_0 once, applies each action's matrix in latent space, decodes
/// after every step, and sums BCE against the true observations. For the
/// direct model each step is predicted from the true previous observation.
/// All trajectories must have the same length.
RolloutLoss rollout_loss(ad::Tape& tape, model::Model& model,
                         std::span<const env::Trajectory> batch);

/// L_rec + lambda * L_ent, lambda >= 0.
ad::Var total_loss(ad::Var l_rec, ad::Var l_ent, double lambda);
double total_loss(double l_rec, double l_ent, double lambda);

/// The batch of trajectories used at `step`; each trajectory's seed is
/// derived from (config.seed, step, index).
std::vector<env::Trajectory> make_batch(const env::Environment& env, const TrainConfig& config,
                                        std::int64_t step);

struct TrainResult {
  model::Model model;
  TrainReport report;
};

/// Runs config.total_steps Adam updates over all model parameters jointly.
/// Throws DivergenceError if the reconstruction loss becomes non-finite.
TrainResult train(const TrainConfig& config);

}  // namespace symrep::train
