#include "experiment_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace symrep::cli {

namespace {

using nlohmann::json;

/// Field access over one JSON object that remembers its dotted path and
/// rejects keys it was never asked about.
class Fields {
 public:
  Fields(const json& object, std::string path, std::initializer_list<const char*> allowed)
      : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, value] : object_.items()) {
      if (!known.count(key)) fail(qualify(key), "unknown key");
    }
  }

  bool has(const char* key) const { return object_.contains(key); }

  const json& require(const char* key) const {
    if (!has(key)) fail(qualify(key), "required field missing");
    return object_.at(key);
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = object_.at(key);
    if (!v.is_number()) fail(qualify(key), "must be a number");
    return v.get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = object_.at(key);
    if (!v.is_number_integer()) fail(qualify(key), "must be an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return as_unsigned(object_.at(key), qualify(key));
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = object_.at(key);
    if (!v.is_boolean()) fail(qualify(key), "must be true or false");
    return v.get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = object_.at(key);
    if (!v.is_string()) fail(qualify(key), "must be a string");
    return v.get<std::string>();
  }

  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& why) {
    throw ConfigurationError(field + ": " + why);
  }

  static std::uint64_t as_unsigned(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    fail(field, "must be a non-negative integer");
  }

 private:
  const json& object_;
  std::string path_;
};

int narrow_int(std::int64_t v, const std::string& field) {
  if (v < INT32_MIN || v > INT32_MAX) Fields::fail(field, "out of range");
  return static_cast<int>(v);
}

env::EnvironmentSpec parse_environment(const json& doc) {
  const Fields f(doc, "environment", {"type", "p", "start", "observation", "mixing_seed"});
  env::EnvironmentSpec spec;
  const auto& type = f.require("type");
  if (!type.is_string()) Fields::fail("environment.type", "must be a string");
  const auto kind = env::environment_kind_from_string(type.get<std::string>());
  if (!kind) Fields::fail("environment.type", "expected torus, sphere or factor");
  spec.kind = *kind;
  spec.p = narrow_int(f.integer("p", spec.p), "environment.p");
  if (f.has("p") && spec.kind != env::EnvironmentKind::Torus) {
    Fields::fail("environment.p", "only meaningful for the torus");
  }
  const auto start = f.text("start", "random");
  if (start == "random") {
    spec.start = env::StartPolicy::Random;
  } else if (start == "center") {
    spec.start = env::StartPolicy::Center;
  } else {
    Fields::fail("environment.start", "expected random or center");
  }
  const auto observation = f.text("observation", "plain");
  if (observation != "plain" && observation != "mixed") {
    Fields::fail("environment.observation", "expected plain or mixed");
  }
  spec.mixed_observations = observation == "mixed";
  if (spec.mixed_observations && spec.kind != env::EnvironmentKind::Factor) {
    Fields::fail("environment.observation", "mixed observations exist only for the factor world");
  }
  spec.mixing_seed = f.unsigned_integer("mixing_seed", spec.mixing_seed);
  return spec;
}

train::LambdaSchedule parse_lambda(const json& doc) {
  const Fields head(doc, "lambda_schedule",
                    {"type", "value", "start_step", "end_step", "lambda_max", "switch_fraction",
                     "lambda_low", "lambda_high"});
  const auto type = head.text("type", "");
  if (type == "constant") {
    const Fields f(doc, "lambda_schedule", {"type", "value"});
    return train::ConstantLambda{f.number("value", 0.0)};
  }
  if (type == "linear_ramp") {
    const Fields f(doc, "lambda_schedule", {"type", "start_step", "end_step", "lambda_max"});
    train::LinearRampLambda s;
    s.start_step = f.integer("start_step", s.start_step);
    s.end_step = f.integer("end_step", s.end_step);
    s.lambda_max = f.number("lambda_max", s.lambda_max);
    return s;
  }
  if (type == "step") {
    const Fields f(doc, "lambda_schedule", {"type", "switch_fraction", "lambda_low", "lambda_high"});
    train::StepLambda s;
    s.switch_fraction = f.number("switch_fraction", s.switch_fraction);
    s.lambda_low = f.number("lambda_low", s.lambda_low);
    s.lambda_high = f.number("lambda_high", s.lambda_high);
    return s;
  }
  Fields::fail("lambda_schedule.type", "expected constant, linear_ramp or step");
}

model::ModelKind parse_model(const std::string& name) {
  for (auto kind : {model::ModelKind::StructuredDiscrete, model::ModelKind::StructuredContinuous,
                    model::ModelKind::Direct}) {
    if (model::to_string(kind) == name) return kind;
  }
  Fields::fail("model", "expected structured_discrete, structured_continuous or direct");
}

AnalysisToggles parse_analyses(const json& doc) {
  const Fields f(doc, "analyses",
                 {"group_report", "equivariance", "atlas", "project_2d", "proj_seeds",
                  "angle_sweep", "dimension_usage"});
  AnalysisToggles t;
  t.group_report = f.boolean("group_report", t.group_report);
  t.equivariance = f.boolean("equivariance", t.equivariance);
  t.atlas = f.boolean("atlas", t.atlas);
  t.project_2d = f.boolean("project_2d", t.project_2d);
  t.proj_seeds = narrow_int(f.integer("proj_seeds", t.proj_seeds), "analyses.proj_seeds");
  if (t.proj_seeds < 1) Fields::fail("analyses.proj_seeds", "must be >= 1");
  t.angle_sweep = f.boolean("angle_sweep", t.angle_sweep);
  t.dimension_usage = f.boolean("dimension_usage", t.dimension_usage);
  return t;
}

BenchSettings parse_bench(const json& doc) {
  const Fields f(doc, "bench", {"horizon", "trials"});
  BenchSettings b;
  b.horizon = narrow_int(f.integer("horizon", b.horizon), "bench.horizon");
  b.trials = narrow_int(f.integer("trials", b.trials), "bench.trials");
  if (b.horizon < 1) Fields::fail("bench.horizon", "must be >= 1");
  if (b.trials < 1) Fields::fail("bench.trials", "must be >= 1");
  return b;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  const Fields f(doc, "",
                 {"environment", "model", "latent_dim", "rollout_length", "batch_size",
                  "total_steps", "learning_rate", "lambda_schedule", "curriculum", "seed",
                  "angle_init_range", "record_wall_clock", "output_dir", "analyses", "seeds",
                  "bench", "initialization"});
  // "initialization" is informational (written by snapshots) and ignored
  ExperimentConfig c;
  auto& t = c.train;
  t.environment = parse_environment(f.require("environment"));
  const std::string default_model =
      t.environment.kind == env::EnvironmentKind::Sphere ? "structured_continuous" : "structured_discrete";
  t.model_kind = parse_model(f.text("model", default_model));
  t.latent_dim = narrow_int(f.integer("latent_dim", t.latent_dim), "latent_dim");
  t.rollout_length = narrow_int(f.integer("rollout_length", t.rollout_length), "rollout_length");
  t.batch_size = narrow_int(f.integer("batch_size", t.batch_size), "batch_size");
  t.total_steps = f.integer("total_steps", t.total_steps);
  t.learning_rate = f.number("learning_rate", t.learning_rate);
  if (f.has("lambda_schedule")) {
    t.lambda = parse_lambda(f.require("lambda_schedule"));
  } else {
    // ramp to 0.1 over the first two thirds of training
    t.lambda = train::LinearRampLambda{0, t.total_steps * 2 / 3, 0.1};
  }
  if (f.has("curriculum")) {
    const Fields cf(f.require("curriculum"), "curriculum", {"start_half_width", "end_half_width"});
    t.curriculum.start_half_width = cf.number("start_half_width", t.curriculum.start_half_width);
    t.curriculum.end_half_width = cf.number("end_half_width", t.curriculum.end_half_width);
    if (!(t.curriculum.start_half_width > 0.0) ||
        t.curriculum.end_half_width < t.curriculum.start_half_width) {
      Fields::fail("curriculum", "needs 0 < start_half_width <= end_half_width");
    }
  }
  t.seed = f.unsigned_integer("seed", t.seed);
  t.angle_init_range = f.number("angle_init_range", t.angle_init_range);
  t.record_wall_clock = f.boolean("record_wall_clock", t.record_wall_clock);
  c.output_dir = f.text("output_dir", c.output_dir.string());
  if (f.has("analyses")) c.analyses = parse_analyses(f.require("analyses"));
  if (f.has("seeds")) {
    const auto& list = f.require("seeds");
    if (!list.is_array()) Fields::fail("seeds", "must be an array of non-negative integers");
    for (std::size_t k = 0; k < list.size(); ++k) {
      c.seeds.push_back(Fields::as_unsigned(list[k], "seeds[" + std::to_string(k) + "]"));
    }
  }
  if (f.has("bench")) c.bench = parse_bench(f.require("bench"));
  train::validate(t);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config: cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigurationError("config: " + path.string() + " is not valid JSON (" + ex.what() + ")");
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  json environment = {
      {"type", env::to_string(t.environment.kind)},
      {"start", t.environment.start == env::StartPolicy::Center ? "center" : "random"},
      {"observation", t.environment.mixed_observations ? "mixed" : "plain"},
      {"mixing_seed", t.environment.mixing_seed},
  };
  if (t.environment.kind == env::EnvironmentKind::Torus) environment["p"] = t.environment.p;

  json lambda = std::visit(
      [](const auto& s) -> json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, train::ConstantLambda>) {
          return {{"type", "constant"}, {"value", s.value}};
        } else if constexpr (std::is_same_v<S, train::LinearRampLambda>) {
          return {{"type", "linear_ramp"},
                  {"start_step", s.start_step},
                  {"end_step", s.end_step},
                  {"lambda_max", s.lambda_max}};
        } else {
          return {{"type", "step"},
                  {"switch_fraction", s.switch_fraction},
                  {"lambda_low", s.lambda_low},
                  {"lambda_high", s.lambda_high}};
        }
      },
      t.lambda);

  json doc;
  doc["environment"] = environment;
  doc["model"] = model::to_string(t.model_kind);
  doc["latent_dim"] = t.latent_dim;
  doc["rollout_length"] = t.rollout_length;
  doc["batch_size"] = t.batch_size;
  doc["total_steps"] = t.total_steps;
  doc["learning_rate"] = t.learning_rate;
  doc["lambda_schedule"] = lambda;
  doc["curriculum"] = {{"start_half_width", t.curriculum.start_half_width},
                       {"end_half_width", t.curriculum.end_half_width}};
  doc["seed"] = t.seed;
  doc["angle_init_range"] = t.angle_init_range;
  doc["record_wall_clock"] = t.record_wall_clock;
  doc["output_dir"] = c.output_dir.string();
  doc["analyses"] = {{"group_report", c.analyses.group_report},
                     {"equivariance", c.analyses.equivariance},
                     {"atlas", c.analyses.atlas},
                     {"project_2d", c.analyses.project_2d},
                     {"proj_seeds", c.analyses.proj_seeds},
                     {"angle_sweep", c.analyses.angle_sweep},
                     {"dimension_usage", c.analyses.dimension_usage}};
  doc["seeds"] = c.seeds;
  doc["bench"] = {{"horizon", c.bench.horizon}, {"trials", c.bench.trials}};
  return doc;
}

void write_config_snapshot(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigurationError("output_dir: cannot write " + path.string());
  // weight initialization is not stored in the weights file; record it here
  json doc = to_json(config);
  doc["initialization"] = {
      {"layers", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases"},
      {"angles", "uniform(-angle_init_range, angle_init_range)"},
      {"model_seed", "derive_seed(seed, 0x5eed)"},
  };
  out << doc.dump(2) << '\n';
}

}  // namespace symrep::cli
