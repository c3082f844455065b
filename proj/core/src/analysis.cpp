#include "symrep/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "symrep/autodiff.hpp"

namespace symrep::analysis {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

son::RepresentationMatrix power(const son::RepresentationMatrix& g, int k) {
  son::RepresentationMatrix out = son::RepresentationMatrix::identity(g.dimension());
  for (int i = 0; i < k; ++i) out = out * g;
  return out;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(acc);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> sigmoid_all(std::vector<double> logits) {
  for (double& v : logits) v = ad::sigmoid(v);
  return logits;
}

}  // namespace

// ---------------------------------------------------------------------------

double GroupReport::max_residual() const {
  double worst = 0.0;
  for (double v : inverse_residuals) worst = std::max(worst, v);
  for (double v : cyclicity_residuals) worst = std::max(worst, v);
  for (double v : commutators) worst = std::max(worst, v);
  return worst;
}

std::string GroupReport::summary() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  out << "action      inverse   ||g g^-1 - I||   order   ||g^k - I||\n";
  for (std::size_t a = 0; a < action_names.size(); ++a) {
    out << std::left << std::setw(12) << action_names[a] << std::setw(10)
        << action_names[static_cast<std::size_t>(inverse_of[a])] << std::right << std::setw(14)
        << inverse_residuals[a] << std::setw(8) << orders[a] << std::setw(14)
        << cyclicity_residuals[a] << '\n';
  }
  out << "\ncommutator norms ||g_a g_b - g_b g_a||\n";
  out << std::setw(12) << "";
  for (const auto& name : action_names) out << std::setw(12) << name;
  out << '\n';
  for (std::size_t a = 0; a < action_names.size(); ++a) {
    out << std::left << std::setw(12) << action_names[a] << std::right;
    for (std::size_t b = 0; b < action_names.size(); ++b) out << std::setw(12) << commutator(a, b);
    out << '\n';
  }
  out << "\nmax residual: " << max_residual() << '\n';
  return out.str();
}

GroupReport group_report(const model::Model& model, const env::Environment& environment) {
  if (!environment.is_discrete() || model.config().kind != model::ModelKind::StructuredDiscrete) {
    throw UnsupportedError("group_report needs a discrete structured model");
  }
  GroupReport report;
  report.action_names = environment.action_names();
  const std::size_t count = environment.action_count();
  std::vector<son::RepresentationMatrix> mats;
  for (std::size_t a = 0; a < count; ++a) {
    mats.push_back(model.action_matrix(env::ActionRecord::discrete(static_cast<int>(a))));
  }
  const auto identity = son::RepresentationMatrix::identity(model.latent_dim());
  for (std::size_t a = 0; a < count; ++a) {
    const int inv = environment.inverse_action(static_cast<int>(a));
    const int order = environment.action_order(static_cast<int>(a));
    report.inverse_of.push_back(inv);
    report.orders.push_back(order);
    report.inverse_residuals.push_back(
        (mats[a] * mats[static_cast<std::size_t>(inv)]).distance(identity));
    report.cyclicity_residuals.push_back(power(mats[a], order).distance(identity));
  }
  report.commutators.assign(count * count, 0.0);
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = 0; b < count; ++b)
      report.commutators[a * count + b] = (mats[a] * mats[b]).distance(mats[b] * mats[a]);
  return report;
}

void write_group_report_csv(const GroupReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "kind,action_a,action_b,order,residual\n";
  const auto& names = report.action_names;
  for (std::size_t a = 0; a < names.size(); ++a) {
    out << "inverse," << names[a] << ',' << names[static_cast<std::size_t>(report.inverse_of[a])]
        << ",," << report.inverse_residuals[a] << '\n';
  }
  for (std::size_t a = 0; a < names.size(); ++a) {
    out << "cyclicity," << names[a] << ",," << report.orders[a] << ','
        << report.cyclicity_residuals[a] << '\n';
  }
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = a + 1; b < names.size(); ++b)
      out << "commutator," << names[a] << ',' << names[b] << ",," << report.commutator(a, b)
          << '\n';
}

// ---------------------------------------------------------------------------

EquivarianceResult equivariance_error(const model::Model& model,
                                      const env::Environment& environment, std::size_t samples,
                                      std::uint64_t seed) {
  if (!model.is_structured()) throw UnsupportedError("equivariance needs a structured model");
  EquivarianceResult result;
  double total = 0.0;
  auto accumulate = [&](const env::State& s, const env::ActionRecord& a) {
    const auto before = model.encode(environment.observe(s));
    const auto after = model.encode(environment.observe(environment.step(s, a)));
    const auto predicted = model.action_matrix(a).apply(before);
    const double e = distance(after, predicted);
    total += e;
    result.max = std::max(result.max, e);
    ++result.samples;
  };
  if (environment.is_finite()) {
    for (const auto& s : environment.enumerate_states())
      for (std::size_t a = 0; a < environment.action_count(); ++a)
        accumulate(s, env::ActionRecord::discrete(static_cast<int>(a)));
  } else {
    env::Rng rng(seed);
    for (std::size_t k = 0; k < samples; ++k) {
      const auto s = environment.initial_state(rng);
      accumulate(s, environment.sample_action(rng));
    }
  }
  result.mean = result.samples ? total / static_cast<double>(result.samples) : 0.0;
  return result;
}

void write_equivariance_csv(const EquivarianceResult& result, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "samples,mean_error,max_error\n";
  out << result.samples << ',' << result.mean << ',' << result.max << '\n';
}

// ---------------------------------------------------------------------------

double bce_probabilities(std::span<const double> probabilities, std::span<const double> target) {
  if (probabilities.size() != target.size() || target.empty()) {
    throw DimensionError("bce_probabilities: length mismatch");
  }
  constexpr double tiny = 1e-15;
  double total = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double p = std::clamp(probabilities[k], tiny, 1.0 - tiny);
    const double t = target[k];
    if (t > 0.0) total -= t * std::log(probabilities[k] >= 1.0 ? 1.0 : p);
    if (t < 1.0) total -= (1.0 - t) * std::log(probabilities[k] <= 0.0 ? 1.0 : 1.0 - p);
  }
  return total / static_cast<double>(target.size());
}

namespace {

class StructuredRollout final : public RolloutPredictor {
 public:
  StructuredRollout(const model::Model& model, std::string name)
      : model_(model), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  void start(const env::Observation& first) override { latent_ = model_.encode(first); }
  std::vector<double> advance(const env::ActionRecord& action, const env::Observation&) override {
    latent_ = model_.action_matrix(action).apply(latent_);
    return sigmoid_all(model_.decode(latent_));
  }

 private:
  const model::Model& model_;
  std::string name_;
  model::LatentVector latent_;
};

class DirectRollout final : public RolloutPredictor {
 public:
  DirectRollout(const model::Model& model, std::string name)
      : model_(model), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  void start(const env::Observation& first) override { current_ = first; }
  std::vector<double> advance(const env::ActionRecord& action, const env::Observation&) override {
    current_ = sigmoid_all(model_.direct_predict(current_, action));
    return current_;
  }

 private:
  const model::Model& model_;
  std::string name_;
  std::vector<double> current_;
};

class OracleRollout final : public RolloutPredictor {
 public:
  std::string name() const override { return "oracle"; }
  void start(const env::Observation&) override {}
  std::vector<double> advance(const env::ActionRecord&, const env::Observation& truth) override {
    return truth;
  }
};

}  // namespace

std::unique_ptr<RolloutPredictor> structured_predictor(const model::Model& model,
                                                       std::string name) {
  if (!model.is_structured()) throw UnsupportedError("structured predictor needs a structured model");
  return std::make_unique<StructuredRollout>(model, std::move(name));
}

std::unique_ptr<RolloutPredictor> direct_predictor(const model::Model& model, std::string name) {
  if (model.config().kind != model::ModelKind::Direct) {
    throw UnsupportedError("direct predictor needs a direct model");
  }
  return std::make_unique<DirectRollout>(model, std::move(name));
}

std::unique_ptr<RolloutPredictor> oracle_predictor() { return std::make_unique<OracleRollout>(); }

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  if (values.empty()) return out;
  double total = 0.0;
  for (double v : values) total += v;
  out.mean = total / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  return out;
}

std::vector<RolloutCurve> rollout_error_curve(std::span<RolloutPredictor* const> predictors,
                                              const env::Environment& environment, int horizon,
                                              int trials, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("rollout_error_curve: horizon must be >= 1");
  if (trials < 1) throw std::invalid_argument("rollout_error_curve: trials must be >= 1");
  const auto steps = static_cast<std::size_t>(horizon);
  const auto runs = static_cast<std::size_t>(trials);
  // errors[predictor][step][trial]
  std::vector<std::vector<std::vector<double>>> errors(
      predictors.size(), std::vector<std::vector<double>>(steps, std::vector<double>(runs)));
  auto accuracy = errors;
  for (std::size_t t = 0; t < runs; ++t) {
    const auto episode =
        env::sample_trajectory(environment, std::nullopt, horizon, env::derive_seed(seed, t));
    for (std::size_t p = 0; p < predictors.size(); ++p) {
      predictors[p]->start(episode.observations[0]);
      for (std::size_t k = 0; k < steps; ++k) {
        const auto& truth = episode.observations[k + 1];
        const auto predicted = predictors[p]->advance(episode.actions[k], truth);
        errors[p][k][t] = bce_probabilities(predicted, truth);
        accuracy[p][k][t] = argmax(predicted) == argmax(truth) ? 1.0 : 0.0;
      }
    }
  }
  std::vector<RolloutCurve> curves(predictors.size());
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    for (std::size_t k = 0; k < steps; ++k) {
      const auto e = mean_ci(errors[p][k]);
      const auto a = mean_ci(accuracy[p][k]);
      curves[p].push_back({static_cast<int>(k + 1), e.mean, e.half_width, a.mean, a.half_width});
    }
  }
  return curves;
}

// ---------------------------------------------------------------------------

std::vector<AtlasRow> latent_atlas(const model::Model& model, const env::Environment& environment) {
  if (!environment.is_finite()) {
    throw UnsupportedError("latent_atlas needs a finite environment; sample states instead");
  }
  std::vector<AtlasRow> rows;
  for (const auto& s : environment.enumerate_states()) {
    rows.push_back({environment.state_index(s), model.encode(environment.observe(s))});
  }
  return rows;
}

void write_atlas_csv(std::span<const AtlasRow> atlas, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "state";
  const std::size_t n = atlas.empty() ? 0 : atlas.front().latent.size();
  for (std::size_t d = 0; d < n; ++d) out << ",z_" << d;
  out << '\n';
  for (const auto& row : atlas) {
    out << row.state;
    for (double v : row.latent) out << ',' << v;
    out << '\n';
  }
}

ProjectionSpec ProjectionSpec::random(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("projection needs n >= 2");
  env::Rng rng(seed);
  std::normal_distribution<double> normal;
  ProjectionSpec spec;
  spec.seed = seed;
  spec.u.resize(static_cast<std::size_t>(n));
  spec.v.resize(static_cast<std::size_t>(n));
  for (double& x : spec.u) x = normal(rng);
  for (double& x : spec.v) x = normal(rng);
  auto normalize = [](std::vector<double>& w) {
    double sq = 0.0;
    for (double x : w) sq += x * x;
    const double norm = std::sqrt(sq);
    for (double& x : w) x /= norm;
  };
  normalize(spec.u);
  // two Gram-Schmidt passes keep the pair orthonormal to ~1e-16
  for (int pass = 0; pass < 2; ++pass) {
    double dot = 0.0;
    for (std::size_t k = 0; k < spec.u.size(); ++k) dot += spec.u[k] * spec.v[k];
    for (std::size_t k = 0; k < spec.u.size(); ++k) spec.v[k] -= dot * spec.u[k];
  }
  normalize(spec.v);
  return spec;
}

void ProjectionSpec::validate() const {
  if (u.size() != v.size() || u.empty()) throw std::invalid_argument("projection vectors differ in length");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    uu += u[k] * u[k];
    vv += v[k] * v[k];
    uv += u[k] * v[k];
  }
  if (std::abs(uu - 1.0) > 1e-12 || std::abs(vv - 1.0) > 1e-12 || std::abs(uv) > 1e-12) {
    throw std::invalid_argument("projection vectors are not orthonormal");
  }
}

std::vector<ProjectedRow> project_2d(std::span<const AtlasRow> atlas, const ProjectionSpec& spec) {
  spec.validate();
  std::vector<ProjectedRow> rows;
  rows.reserve(atlas.size());
  for (const auto& row : atlas) {
    if (row.latent.size() != spec.u.size()) {
      throw DimensionError("project_2d: latent dimension differs from projection plane");
    }
    double u = 0.0, v = 0.0;
    for (std::size_t k = 0; k < row.latent.size(); ++k) {
      u += row.latent[k] * spec.u[k];
      v += row.latent[k] * spec.v[k];
    }
    rows.push_back({row.state, u, v});
  }
  return rows;
}

void write_projection_csv(std::span<const ProjectedRow> rows, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "state,u,v\n";
  for (const auto& r : rows) out << r.state << ',' << r.u << ',' << r.v << '\n';
}

// ---------------------------------------------------------------------------

int DimensionUsage::used_count() const {
  return static_cast<int>(std::count(used.begin(), used.end(), true));
}

DimensionUsage dimension_usage(const model::Model& model, double threshold) {
  if (model.config().kind != model::ModelKind::StructuredDiscrete) {
    throw UnsupportedError("dimension_usage needs a discrete structured model");
  }
  const int n = model.latent_dim();
  DimensionUsage usage;
  usage.threshold = threshold;
  usage.scores.assign(static_cast<std::size_t>(n), 0.0);
  for (std::size_t a = 0; a < model.config().action_count; ++a) {
    const auto params =
        son::canonical_angles(model.action_params(env::ActionRecord::discrete(static_cast<int>(a))));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto plane = son::plane_at(k, n);
      const double mag = std::abs(params.angles()[k]);
      for (int d : {plane.i - 1, plane.j - 1}) {
        auto& score = usage.scores[static_cast<std::size_t>(d)];
        score = std::max(score, mag);
      }
    }
  }
  for (double s : usage.scores) usage.used.push_back(s >= threshold);
  return usage;
}

void write_dimension_usage_csv(const DimensionUsage& usage, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "dimension,score,used\n";
  for (std::size_t d = 0; d < usage.scores.size(); ++d) {
    out << d + 1 << ',' << usage.scores[d] << ',' << (usage.used[d] ? 1 : 0) << '\n';
  }
}

void write_action_angles_csv(const model::Model& model, const env::Environment& environment,
                             const std::filesystem::path& path) {
  const int n = model.latent_dim();
  auto out = open_csv(path);
  out << "action";
  for (std::size_t k = 0; k < son::num_planes(n); ++k) {
    const auto p = son::plane_at(k, n);
    out << ",theta_" << p.i << '_' << p.j;
  }
  out << '\n';
  const auto names = environment.action_names();
  for (std::size_t a = 0; a < environment.action_count(); ++a) {
    const auto params =
        son::canonical_angles(model.action_params(env::ActionRecord::discrete(static_cast<int>(a))));
    out << names[a];
    for (double v : params.angles()) out << ',' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = lo;
    return grid;
  }
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return grid;
}

AngleSweep continuous_angle_sweep(const model::Model& model, std::span<const int> axes,
                                  std::span<const double> angles) {
  if (model.config().kind != model::ModelKind::StructuredContinuous) {
    throw UnsupportedError("angle sweep needs a continuous structured model");
  }
  AngleSweep sweep;
  const std::size_t planes = son::num_planes(model.latent_dim());
  for (int axis : axes) {
    const std::size_t first = sweep.rows.size();
    for (double angle : angles) {
      const auto params =
          model.action_params(env::ActionRecord::continuous(static_cast<env::Axis>(axis), angle));
      sweep.rows.push_back({axis, angle, {params.angles().begin(), params.angles().end()}});
    }
    const std::span<const SweepRow> rows(sweep.rows.data() + first, angles.size());

    AxisSweepSummary summary;
    summary.axis = axis;
    std::vector<double> peak(planes, 0.0);
    for (const auto& row : rows)
      for (std::size_t k = 0; k < planes; ++k)
        peak[k] = std::max(peak[k], std::abs(son::canonical_angle(row.thetas[k])));
    summary.dominant_plane = argmax(peak);
    summary.dominant_peak = peak[summary.dominant_plane];
    summary.planes_above = static_cast<std::size_t>(
        std::count_if(peak.begin(), peak.end(), [](double v) { return v > 0.1; }));
    double off = 0.0;
    std::size_t off_count = 0;
    for (const auto& row : rows)
      for (std::size_t k = 0; k < planes; ++k)
        if (k != summary.dominant_plane) {
          off += std::abs(son::canonical_angle(row.thetas[k]));
          ++off_count;
        }
    summary.off_plane_mean_abs = off_count ? off / static_cast<double>(off_count) : 0.0;

    std::vector<double> dominant;
    for (const auto& row : rows) {
      if (std::abs(row.angle) <= std::numbers::pi / 2 + 1e-12) {
        dominant.push_back(row.thetas[summary.dominant_plane]);
      }
    }
    const bool increasing = std::is_sorted(dominant.begin(), dominant.end());
    const bool decreasing = std::is_sorted(dominant.rbegin(), dominant.rend());
    summary.monotone_half_turn = dominant.size() >= 2 && (increasing || decreasing);
    sweep.summaries.push_back(summary);
  }
  return sweep;
}

void write_angle_sweep_csv(const AngleSweep& sweep, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "axis,angle";
  const std::size_t planes = sweep.rows.empty() ? 0 : sweep.rows.front().thetas.size();
  int n = 2;
  while (son::num_planes(n) < planes) ++n;
  for (std::size_t k = 0; k < planes; ++k) {
    const auto p = son::plane_at(k, n);
    out << ",theta_" << p.i << '_' << p.j;
  }
  out << '\n';
  for (const auto& row : sweep.rows) {
    out << row.axis << ',' << row.angle;
    for (double v : row.thetas) out << ',' << v;
    out << '\n';
  }
}

}  // namespace symrep::analysis
