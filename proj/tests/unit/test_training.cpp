#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "symrep/training.hpp"

namespace symrep::train {
namespace {

using std::numbers::pi;
using env::ActionRecord;
using env::EnvironmentKind;

TrainConfig small_torus_config(std::int64_t steps = 20) {
  TrainConfig c;
  c.environment = {EnvironmentKind::Torus, 5};
  c.total_steps = steps;
  c.batch_size = 4;
  c.seed = 3;
  c.lambda = LinearRampLambda{0, std::max<std::int64_t>(steps, 1), 0.1};
  return c;
}

// Batch of identical trajectories that never leave one state.
std::vector<env::Trajectory> stationary_batch(const env::Environment& e, int m, int copies) {
  env::Trajectory t;
  t.start = e.center_state();
  for (int k = 0; k <= m; ++k) t.observations.push_back(e.observe(t.start));
  t.actions.assign(static_cast<std::size_t>(m), ActionRecord::discrete(0));
  return std::vector<env::Trajectory>(static_cast<std::size_t>(copies), t);
}

double reconstruction_bce(const model::Model& m, const env::Observation& o) {
  const auto logits = m.decode(m.encode(o));
  double s = 0.0;
  for (std::size_t k = 0; k < o.size(); ++k) s += ad::bce_with_logit(logits[k], o[k]);
  return s / static_cast<double>(o.size());
}

// --- schedules ---------------------------------------------------------------

TEST(LambdaSchedule, Constant) {
  for (std::int64_t step : {0, 7, 9999}) EXPECT_EQ(lambda_at(ConstantLambda{0.01}, step, 10000), 0.01);
}

TEST(LambdaSchedule, LinearRampMidpoint) {
  const LinearRampLambda ramp{0, 10000, 0.1};
  EXPECT_EQ(lambda_at(ramp, 0, 20000), 0.0);
  EXPECT_NEAR(lambda_at(ramp, 5000, 20000), 0.05, 1e-15);
  EXPECT_EQ(lambda_at(ramp, 10000, 20000), 0.1);
  EXPECT_EQ(lambda_at(ramp, 15000, 20000), 0.1);
  EXPECT_EQ(lambda_at(LinearRampLambda{100, 200, 1.0}, 50, 1000), 0.0);
}

TEST(LambdaSchedule, StepSwitchesAtFraction) {
  const StepLambda s{0.5, 0.001, 0.2};
  EXPECT_EQ(lambda_at(s, 490, 1000), 0.001);
  EXPECT_EQ(lambda_at(s, 500, 1000), 0.2);
}

TEST(LambdaSchedule, RampIsMonotone) {
  const LinearRampLambda ramp{10, 90, 0.3};
  double prev = -1.0;
  for (std::int64_t step = 0; step <= 100; ++step) {
    const double l = lambda_at(ramp, step, 100);
    EXPECT_GE(l, prev);
    prev = l;
  }
}

TEST(Curriculum, WidensFromTwoFifthsPiToPi) {
  const Curriculum c;
  EXPECT_NEAR(curriculum_range(c, 0, 1000).half_width, 2 * pi / 5, 1e-15);
  EXPECT_NEAR(curriculum_range(c, 999, 1000).half_width, pi, 1e-15);
  double prev = 0.0;
  for (std::int64_t step = 0; step < 1000; ++step) {
    const double w = curriculum_range(c, step, 1000).half_width;
    EXPECT_GE(w, prev);
    prev = w;
  }
}

// --- losses --------------------------------------------------------------------

TEST(TotalLoss, Arithmetic) {
  EXPECT_EQ(total_loss(1.0, 0.05, 0.0), 1.0);
  EXPECT_NEAR(total_loss(1.0, 0.05, 2.0), 1.1, 1e-15);
  EXPECT_EQ(total_loss(0.7, 0.0, 5.0), 0.7);
  EXPECT_THROW(total_loss(1.0, 0.0, -0.1), ConfigurationError);
}

TEST(TotalLoss, LargerLambdaNeverDecreasesLoss) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double l_rec = u(rng), l_ent = u(rng) + 1e-6;
    const double a = u(rng), b = a + u(rng);
    EXPECT_LE(total_loss(l_rec, l_ent, a), total_loss(l_rec, l_ent, b));
  }
}

TEST(RolloutLoss, IdentityActionsRepeatAutoencoderLoss) {
  const env::Environment e({EnvironmentKind::Torus, 5});
  model::ModelConfig mc = model::config_for(e, model::ModelKind::StructuredDiscrete, 4);
  mc.angle_init_range = 0.0;
  model::Model m(mc, 7);
  for (int m_steps : {1, 3, 5}) {
    const auto batch = stationary_batch(e, m_steps, 2);
    ad::Tape tape;
    const RolloutLoss loss = rollout_loss(tape, m, batch);
    EXPECT_NEAR(loss.l_rec.value().item(),
                m_steps * reconstruction_bce(m, batch[0].observations[0]), 1e-12);
    EXPECT_EQ(loss.reconstructions.size(), static_cast<std::size_t>(m_steps));
    EXPECT_EQ(loss.l_ent.value().item(), 0.0);
  }
}

TEST(RolloutLoss, SingleStepIsOneStepPrediction) {
  const env::Environment e({EnvironmentKind::Torus, 5});
  model::Model m(model::config_for(e, model::ModelKind::StructuredDiscrete, 4), 2);
  const env::Trajectory t = env::sample_trajectory(e, std::nullopt, 1, 9);
  ad::Tape tape;
  const RolloutLoss loss = rollout_loss(tape, m, std::span(&t, 1));
  const auto g = m.action_matrix(t.actions[0]);
  const auto z = g.apply(m.encode(t.observations[0]));
  const auto logits = m.decode(z);
  double expected = 0.0;
  for (std::size_t k = 0; k < 25; ++k) expected += ad::bce_with_logit(logits[k], t.observations[1][k]);
  EXPECT_NEAR(loss.l_rec.value().item(), expected / 25.0, 1e-12);
}

TEST(RolloutLoss, RejectsUnknownActionsAndRaggedBatches) {
  const env::Environment e({EnvironmentKind::Torus, 5});
  model::Model m(model::config_for(e, model::ModelKind::StructuredDiscrete, 4), 2);
  auto batch = stationary_batch(e, 2, 2);
  batch[1].actions[0] = ActionRecord::discrete(9);
  ad::Tape tape;
  EXPECT_THROW(rollout_loss(tape, m, batch), model::LookupError);
  auto ragged = stationary_batch(e, 2, 1);
  ragged.push_back(stationary_batch(e, 3, 1)[0]);
  EXPECT_THROW(rollout_loss(tape, m, ragged), ConfigurationError);
}

struct FdWorst {
  double error = 0.0;
  std::string where;
};

std::ostream& operator<<(std::ostream& os, const FdWorst& w) { return os << w.error << " at " << w.where; }
bool operator<(const FdWorst& w, double tol) { return w.error < tol; }

// Central differences over the parameter elements of a small model; large
// tensors are probed on an evenly strided subset of at most `probes` entries.
// `floor` is the denominator offset of the relative error.
FdWorst max_parameter_fd_error(model::Model& m, const std::vector<env::Trajectory>& batch,
                               double lambda, std::size_t probes = 1u << 20,
                               double floor = 1e-10) {
  auto params = m.parameters();
  auto evaluate = [&] {
    ad::Tape tape;
    const RolloutLoss l = rollout_loss(tape, m, batch);
    return total_loss(l.l_rec.value().item(), l.l_ent.value().item(), lambda);
  };
  for (Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape;
    const RolloutLoss l = rollout_loss(tape, m, batch);
    tape.backward(total_loss(l.l_rec, l.l_ent, lambda));
  }
  constexpr double h = 1e-6;
  FdWorst worst;
  for (Parameter* p : params) {
    const std::size_t stride = std::max<std::size_t>(1, p->value.size() / probes);
    for (std::size_t k = 0; k < p->value.size(); k += stride) {
      const double saved = p->value[k];
      p->value[k] = saved + h;
      const double up = evaluate();
      p->value[k] = saved - h;
      const double down = evaluate();
      p->value[k] = saved;
      const double fd = (up - down) / (2 * h);
      const double a = p->grad[k];
      if (a == 0.0 && fd == 0.0) continue;
      const double err = std::abs(a - fd) / (std::abs(a) + floor);
      if (err > worst.error) {
        std::ostringstream where;
        where << p->name << "[" << k << "] analytic=" << a << " fd=" << fd;
        worst = {err, where.str()};
      }
    }
  }
  return worst;
}

TEST(RolloutLoss, ThetaGradientOnTwoStepTorusTrajectory) {
  const env::Environment e({EnvironmentKind::Torus, 5});
  model::ModelConfig mc = model::config_for(e, model::ModelKind::StructuredDiscrete, 4);
  mc.angle_init_range = 1.0;
  model::Model m(mc, 12);
  const env::Trajectory t = env::sample_trajectory(e, std::nullopt, 2, 5);
  const std::vector<env::Trajectory> batch{t};

  ad::Tape tape;
  const RolloutLoss l = rollout_loss(tape, m, batch);
  for (Parameter* p : m.parameters()) p->zero_grad();
  tape.backward(l.l_rec);

  const int id = t.actions[0].id;
  const std::size_t k = 2;  // plane (1,4)
  const double analytic = m.parameters().back()->grad.at(static_cast<std::size_t>(id), k);
  auto loss_at = [&](double delta) {
    model::Model copy = m;
    copy.table_entry(id)[k] += delta;
    ad::Tape t2;
    return rollout_loss(t2, copy, batch).l_rec.value().item();
  };
  const double fd = (loss_at(1e-6) - loss_at(-1e-6)) / 2e-6;
  EXPECT_LT(std::abs(analytic - fd) / (std::abs(analytic) + 1e-10), 1e-4);
}

TEST(RolloutLoss, FullGradientOnMicroInstance) {
  TrainConfig c;
  c.environment = {EnvironmentKind::Torus, 2};
  c.latent_dim = 2;
  c.rollout_length = 2;
  c.batch_size = 3;
  c.angle_init_range = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    model::Model m = make_model(c);
    const auto batch = make_batch(env::Environment(c.environment), c, 0);
    EXPECT_LT(max_parameter_fd_error(m, batch, 0.5), 1e-4) << "seed " << seed;
  }
}

TEST(RolloutLoss, FullGradientForContinuousAndDirectModels) {
  // These models have thousands of weights, some with gradients near 1e-11
  // where central differences are pure round-off (~1e-10 absolute), so the
  // relative error uses a 1e-5 floor: tiny entries must agree within 1e-9.
  constexpr double kFloor = 1e-5;
  TrainConfig sphere;
  sphere.environment = {EnvironmentKind::Sphere};
  sphere.model_kind = model::ModelKind::StructuredContinuous;
  sphere.latent_dim = 3;
  sphere.rollout_length = 2;
  sphere.batch_size = 2;
  sphere.seed = 4;
  model::Model ms = make_model(sphere);
  EXPECT_LT(max_parameter_fd_error(ms, make_batch(env::Environment(sphere.environment), sphere, 0), 0.3,
                                   200, kFloor),
            1e-4);

  TrainConfig direct = small_torus_config();
  direct.model_kind = model::ModelKind::Direct;
  direct.rollout_length = 2;
  direct.batch_size = 2;
  model::Model md = make_model(direct);
  EXPECT_LT(max_parameter_fd_error(md, make_batch(env::Environment(direct.environment), direct, 0), 0.0,
                                   1u << 20, kFloor),
            1e-4);
}

// --- training loop ------------------------------------------------------------------

TEST(Train, ZeroStepsReturnsInitialModel) {
  const TrainConfig c = small_torus_config(0);
  const TrainResult r = train(c);
  EXPECT_TRUE(r.report.steps.empty());
  const model::Model fresh = make_model(c);
  const auto a = r.model.parameters();
  const auto b = fresh.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k]->value, b[k]->value);
}

TEST(Train, OneStepUpdatesEveryParameterGroup) {
  for (model::ModelKind kind : {model::ModelKind::StructuredDiscrete, model::ModelKind::Direct}) {
    TrainConfig c = small_torus_config(1);
    c.model_kind = kind;
    const TrainResult r = train(c);
    const model::Model fresh = make_model(c);
    const auto a = r.model.parameters();
    const auto b = fresh.parameters();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NE(a[k]->value, b[k]->value) << a[k]->name;
  }
  TrainConfig c = small_torus_config(1);
  c.environment = {EnvironmentKind::Sphere};
  c.model_kind = model::ModelKind::StructuredContinuous;
  const TrainResult r = train(c);
  const model::Model fresh = make_model(c);
  const auto a = r.model.parameters();
  const auto b = fresh.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NE(a[k]->value, b[k]->value) << a[k]->name;
}

TEST(Train, OneRecordPerStepWithScheduledLambda) {
  const TrainConfig c = small_torus_config(10);
  const TrainResult r = train(c);
  ASSERT_EQ(r.report.steps.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(r.report.steps[k].step, static_cast<std::int64_t>(k));
    EXPECT_EQ(r.report.steps[k].lambda, lambda_at(c.lambda, static_cast<std::int64_t>(k), 10));
    EXPECT_FALSE(r.report.steps[k].elapsed_ms.has_value());
  }
}

TEST(Train, IdenticalSeedsGiveIdenticalRuns) {
  const TrainConfig c = small_torus_config(30);
  const TrainResult a = train(c);
  const TrainResult b = train(c);
  ASSERT_EQ(a.report.steps.size(), b.report.steps.size());
  for (std::size_t k = 0; k < a.report.steps.size(); ++k) {
    EXPECT_EQ(a.report.steps[k].l_rec, b.report.steps[k].l_rec);
    EXPECT_EQ(a.report.steps[k].l_ent, b.report.steps[k].l_ent);
  }
  const auto pa = a.model.parameters();
  const auto pb = b.model.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value);

  TrainConfig other = c;
  other.seed = c.seed + 1;
  EXPECT_NE(train(other).report.steps.back().l_rec, a.report.steps.back().l_rec);
}

TEST(Train, BatchesDependOnlyOnSeedAndStep) {
  const TrainConfig c = small_torus_config();
  const env::Environment e(c.environment);
  const auto a = make_batch(e, c, 7);
  const auto b = make_batch(e, c, 7);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].actions, b[k].actions);
  EXPECT_NE(a[0].actions, make_batch(e, c, 8)[0].actions);
}

TEST(Train, SingleStateOptimizerSanity) {
  // With lambda = 0 and identity actions on a fixed state, Adam should only
  // ever reduce the reconstruction loss over the first 100 steps.
  const env::Environment e({EnvironmentKind::Torus, 5});
  const auto batch = stationary_batch(e, 3, 4);
  constexpr int kSeeds = 20;
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    model::ModelConfig mc = model::config_for(e, model::ModelKind::StructuredDiscrete, 4);
    mc.angle_init_range = 0.0;
    model::Model m(mc, seed);
    auto params = m.parameters();
    ad::AdamState state = ad::AdamState::for_parameters(params);
    double prev = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int step = 0; step < 100; ++step) {
      ad::Tape tape;
      const RolloutLoss l = rollout_loss(tape, m, batch);
      const double now = l.l_rec.value().item();
      if (now > prev) ok = false;
      prev = now;
      for (Parameter* p : params) p->zero_grad();
      tape.backward(l.l_rec);
      ad::adam_step(params, state, {});
    }
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 19);  // >= 95% of seeds
}

TEST(Train, DivergenceIsReported) {
  TrainConfig c = small_torus_config(20);
  c.learning_rate = 1e300;
  EXPECT_THROW(train(c), DivergenceError);
}

TEST(Validate, NamesOffendingField) {
  auto expect_field = [](TrainConfig c, const std::string& field) {
    try {
      validate(c);
      FAIL() << "expected rejection of " << field;
    } catch (const ConfigurationError& ex) {
      EXPECT_NE(std::string(ex.what()).find(field), std::string::npos) << ex.what();
    }
  };
  TrainConfig c = small_torus_config();
  c.latent_dim = 1;
  expect_field(c, "latent_dim");
  c = small_torus_config();
  c.rollout_length = 0;
  expect_field(c, "rollout_length");
  c = small_torus_config();
  c.batch_size = 0;
  expect_field(c, "batch_size");
  c = small_torus_config();
  c.learning_rate = 0.0;
  expect_field(c, "learning_rate");
  c = small_torus_config();
  c.lambda = ConstantLambda{-1.0};
  expect_field(c, "lambda_schedule");
  c = small_torus_config();
  c.model_kind = model::ModelKind::StructuredContinuous;
  expect_field(c, "model");
}

TEST(Report, CsvHasFixedHeaderAndOneRowPerStep) {
  const TrainResult r = train(small_torus_config(3));
  const auto path = std::filesystem::temp_directory_path() / "symrep_report_test.csv";
  write_report_csv(r.report, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,l_rec,l_ent,lambda,elapsed_ms");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.back(), ',');  // wall clock off leaves the column empty
  }
  EXPECT_EQ(rows, 3);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace symrep::train
