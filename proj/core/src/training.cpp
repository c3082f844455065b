#include "symrep/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace symrep::train {

double lambda_at(const LambdaSchedule& schedule, std::int64_t step, std::int64_t total_steps) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantLambda>) {
          return s.value;
        } else if constexpr (std::is_same_v<S, LinearRampLambda>) {
          if (step <= s.start_step) return 0.0;
          if (step >= s.end_step) return s.lambda_max;
          const double frac = static_cast<double>(step - s.start_step) /
                              static_cast<double>(s.end_step - s.start_step);
          return s.lambda_max * frac;
        } else {
          const double switch_at = s.switch_fraction * static_cast<double>(total_steps);
          return static_cast<double>(step) < switch_at ? s.lambda_low : s.lambda_high;
        }
      },
      schedule);
}

env::AngleRange curriculum_range(const Curriculum& curriculum, std::int64_t step,
                                 std::int64_t total_steps) {
  const double span = static_cast<double>(std::max<std::int64_t>(total_steps - 1, 1));
  const double frac = std::clamp(static_cast<double>(step) / span, 0.0, 1.0);
  return {curriculum.start_half_width +
          (curriculum.end_half_width - curriculum.start_half_width) * frac};
}

// ---------------------------------------------------------------------------

void validate(const TrainConfig& c) {
  if (c.latent_dim < 2) throw ConfigurationError("latent_dim: must be >= 2");
  if (c.rollout_length < 1) throw ConfigurationError("rollout_length: must be >= 1");
  if (c.batch_size < 1) throw ConfigurationError("batch_size: must be >= 1");
  if (c.total_steps < 0) throw ConfigurationError("total_steps: must be >= 0");
  if (!(c.learning_rate > 0.0)) throw ConfigurationError("learning_rate: must be > 0");
  if (!(c.angle_init_range >= 0.0)) throw ConfigurationError("angle_init_range: must be >= 0");
  if (c.environment.kind == env::EnvironmentKind::Torus && c.environment.p < 2) {
    throw ConfigurationError("environment.p: must be >= 2");
  }
  const bool continuous_env = c.environment.kind == env::EnvironmentKind::Sphere;
  const bool continuous_model = c.model_kind == model::ModelKind::StructuredContinuous;
  if (continuous_env != continuous_model) {
    throw ConfigurationError("model: " + model::to_string(c.model_kind) +
                             " does not fit environment " + env::to_string(c.environment.kind));
  }
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantLambda>) {
          if (!(s.value >= 0.0)) throw ConfigurationError("lambda_schedule.value: must be >= 0");
        } else if constexpr (std::is_same_v<S, LinearRampLambda>) {
          if (s.end_step <= s.start_step) {
            throw ConfigurationError("lambda_schedule.end_step: must exceed start_step");
          }
          if (!(s.lambda_max >= 0.0)) {
            throw ConfigurationError("lambda_schedule.lambda_max: must be >= 0");
          }
        } else {
          if (!(s.lambda_low >= 0.0 && s.lambda_high >= 0.0)) {
            throw ConfigurationError("lambda_schedule: lambda_low/lambda_high must be >= 0");
          }
        }
      },
      c.lambda);
}

model::Model make_model(const TrainConfig& config) {
  const env::Environment environment(config.environment);
  auto mc = model::config_for(environment, config.model_kind, config.latent_dim);
  mc.angle_init_range = config.angle_init_range;
  return model::Model(mc, env::derive_seed(config.seed, 0x5eed));
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,l_rec,l_ent,lambda,elapsed_ms\n";
  out << std::setprecision(17);
  for (const auto& r : report.steps) {
    out << r.step << ',' << r.l_rec << ',' << r.l_ent << ',' << r.lambda << ',';
    if (r.elapsed_ms) out << *r.elapsed_ms;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

Tensor stack_observations(std::span<const env::Trajectory> batch, std::size_t k) {
  const std::size_t dim = batch.front().observations[k].size();
  Tensor out(Shape{batch.size(), dim});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& obs = batch[b].observations[k];
    if (obs.size() != dim) throw DimensionError("batch observations differ in length");
    std::copy(obs.begin(), obs.end(), out.data() + b * dim);
  }
  return out;
}

std::vector<env::ActionRecord> actions_at(std::span<const env::Trajectory> batch, std::size_t k) {
  std::vector<env::ActionRecord> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(t.actions[k]);
  return out;
}

}  // namespace

RolloutLoss rollout_loss(ad::Tape& tape, model::Model& model,
                         std::span<const env::Trajectory> batch) {
  if (batch.empty()) throw ConfigurationError("rollout_loss: empty batch");
  const std::size_t m = batch.front().length();
  if (m < 1) throw ConfigurationError("rollout_loss: trajectory length must be >= 1");
  for (const auto& t : batch) {
    if (t.length() != m || t.observations.size() != m + 1) {
      throw ConfigurationError("rollout_loss: trajectories must share one length");
    }
  }
  const int n = model.latent_dim();
  RolloutLoss result;
  ad::Var l_rec;
  auto accumulate = [](ad::Var& acc, ad::Var term) { acc = acc.valid() ? ad::add(acc, term) : term; };

  switch (model.config().kind) {
    case model::ModelKind::StructuredDiscrete: {
      ad::Var z = model.encode(tape, tape.constant(stack_observations(batch, 0)));
      ad::Var angles = model.table_angles(tape);
      ad::Var mats = ad::compose_rotations(angles, n);
      std::set<std::size_t> seen;
      std::vector<std::size_t> idx(batch.size());
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const auto& a = batch[b].actions[k];
          if (!a.is_discrete() || static_cast<std::size_t>(a.id) >= model.config().action_count) {
            throw model::LookupError("rollout_loss: action unknown to model");
          }
          idx[b] = static_cast<std::size_t>(a.id);
          seen.insert(idx[b]);
        }
        z = ad::apply_rotations(mats, z, idx);
        ad::Var logits = model.decode(tape, z);
        result.reconstructions.push_back(logits);
        accumulate(l_rec, ad::bce_loss(logits, tape.constant(stack_observations(batch, k + 1))));
      }
      const std::vector<std::size_t> rows(seen.begin(), seen.end());
      result.l_ent = ad::entanglement(angles, n, rows);
      break;
    }
    case model::ModelKind::StructuredContinuous: {
      ad::Var z = model.encode(tape, tape.constant(stack_observations(batch, 0)));
      std::vector<std::size_t> idx(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) idx[b] = b;
      ad::Var l_ent;
      for (std::size_t k = 0; k < m; ++k) {
        const auto actions = actions_at(batch, k);
        ad::Var angles = model.continuous_angles(tape, actions);
        z = ad::apply_rotations(ad::compose_rotations(angles, n), z, idx);
        ad::Var logits = model.decode(tape, z);
        result.reconstructions.push_back(logits);
        accumulate(l_rec, ad::bce_loss(logits, tape.constant(stack_observations(batch, k + 1))));
        accumulate(l_ent, ad::entanglement(angles, n));
      }
      result.l_ent = ad::scale(l_ent, 1.0 / static_cast<double>(batch.size()));
      break;
    }
    case model::ModelKind::Direct: {
      for (std::size_t k = 0; k < m; ++k) {
        const auto actions = actions_at(batch, k);
        ad::Var logits =
            model.direct_predict(tape, tape.constant(stack_observations(batch, k)), actions);
        result.reconstructions.push_back(logits);
        accumulate(l_rec, ad::bce_loss(logits, tape.constant(stack_observations(batch, k + 1))));
      }
      result.l_ent = tape.constant(Tensor::scalar(0.0));
      break;
    }
  }
  result.l_rec = l_rec;
  return result;
}

ad::Var total_loss(ad::Var l_rec, ad::Var l_ent, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigurationError("total_loss: lambda must be >= 0");
  if (lambda == 0.0) return l_rec;
  return ad::add(l_rec, ad::scale(l_ent, lambda));
}

double total_loss(double l_rec, double l_ent, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigurationError("total_loss: lambda must be >= 0");
  return l_rec + lambda * l_ent;
}

std::vector<env::Trajectory> make_batch(const env::Environment& environment,
                                        const TrainConfig& config, std::int64_t step) {
  const env::AngleRange range = environment.is_discrete()
                                    ? env::AngleRange{}
                                    : curriculum_range(config.curriculum, step, config.total_steps);
  std::vector<env::Trajectory> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  for (int b = 0; b < config.batch_size; ++b) {
    const auto seed = env::derive_seed(config.seed, static_cast<std::uint64_t>(step),
                                       static_cast<std::uint64_t>(b));
    batch.push_back(
        env::sample_trajectory(environment, std::nullopt, config.rollout_length, seed, range));
  }
  return batch;
}

TrainResult train(const TrainConfig& config) {
  validate(config);
  const env::Environment environment(config.environment);
  TrainResult result{make_model(config), {}};
  model::Model& model = result.model;
  auto params = model.parameters();
  ad::AdamState state = ad::AdamState::for_parameters(params);
  ad::AdamOptions options;
  options.learning_rate = config.learning_rate;

  const auto started = std::chrono::steady_clock::now();
  result.report.steps.reserve(static_cast<std::size_t>(config.total_steps));
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto batch = make_batch(environment, config, step);
    ad::Tape tape;
    RolloutLoss loss;
    try {
      loss = rollout_loss(tape, model, batch);
    } catch (const DomainError& ex) {
      // Non-finite weights surface first as a degenerate encoder output.
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + ex.what());
    }
    const double lambda = lambda_at(config.lambda, step, config.total_steps);
    const double l_rec = loss.l_rec.value().item();
    const double l_ent = loss.l_ent.value().item();
    if (!std::isfinite(l_rec)) {
      std::ostringstream msg;
      msg << "reconstruction loss became non-finite at step " << step << " (l_ent=" << l_ent
          << ", lambda=" << lambda << ")";
      throw DivergenceError(msg.str());
    }
    for (Parameter* p : params) p->zero_grad();
    tape.backward(total_loss(loss.l_rec, loss.l_ent, lambda));
    ad::adam_step(params, state, options);

    StepRecord record{step, l_rec, l_ent, lambda, std::nullopt};
    if (config.record_wall_clock) {
      record.elapsed_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    }
    result.report.steps.push_back(record);
  }
  return result;
}

}  // namespace symrep::train
