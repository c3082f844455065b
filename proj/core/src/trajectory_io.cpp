#include "symrep/trajectory_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace symrep::env {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, const std::filesystem::path& path) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw DatasetError("malformed number '" + text + "' in " + path.string());
  }
  return v;
}

json state_to_json(const State& s) {
  return std::visit(
      [](const auto& st) -> json {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, TorusState>) {
          return {{"row", st.row}, {"col", st.col}};
        } else if constexpr (std::is_same_v<S, FactorState>) {
          return {{"a", st.a}, {"b", st.b}};
        } else {
          json o = json::array();
          for (double v : st.orientation) o.push_back(v);
          return {{"orientation", o}};
        }
      },
      s);
}

State state_from_json(const json& j, const EnvironmentSpec& spec) {
  switch (spec.kind) {
    case EnvironmentKind::Torus:
      return TorusState{j.at("row").get<int>(), j.at("col").get<int>(), spec.p};
    case EnvironmentKind::Factor: return FactorState{j.at("a").get<int>(), j.at("b").get<int>()};
    case EnvironmentKind::Sphere: {
      SphereState s;
      const auto& o = j.at("orientation");
      if (o.size() != 9) throw DatasetError("sphere start state needs 9 orientation entries");
      for (std::size_t k = 0; k < 9; ++k) s.orientation[k] = o.at(k).get<double>();
      return s;
    }
  }
  throw DatasetError("unknown environment kind");
}

std::string trajectory_file(std::size_t k) {
  char name[32];
  std::snprintf(name, sizeof(name), "trajectory_%05zu.csv", k);
  return name;
}

}  // namespace

void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  const std::size_t dim = trajectory.observations.empty() ? 0 : trajectory.observations[0].size();
  out << "step,action_id,axis,angle";
  for (std::size_t d = 0; d < dim; ++d) out << ",obs_" << d;
  out << '\n';
  for (std::size_t k = 0; k < trajectory.observations.size(); ++k) {
    out << k << ',';
    if (k < trajectory.actions.size()) {
      const auto& a = trajectory.actions[k];
      if (a.is_discrete()) {
        out << a.id << ",,";
      } else {
        out << ',' << a.axis << ',' << format_double(a.angle);
      }
    } else {
      out << ",,";
    }
    for (double v : trajectory.observations[k]) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw DatasetError("failed writing " + path.string());
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,action_id,axis,angle", 0) != 0) {
    throw DatasetError("missing trajectory header in " + path.string());
  }
  const std::size_t columns = split_csv(line).size();
  Trajectory traj;
  bool finished = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (finished) throw DatasetError("rows after the final observation in " + path.string());
    const auto fields = split_csv(line);
    if (fields.size() != columns) throw DatasetError("ragged row in " + path.string());
    Observation obs;
    obs.reserve(columns - 4);
    for (std::size_t c = 4; c < columns; ++c) obs.push_back(parse_double(fields[c], path));
    traj.observations.push_back(std::move(obs));
    if (!fields[1].empty()) {
      traj.actions.push_back(ActionRecord::discrete(std::stoi(fields[1])));
    } else if (!fields[2].empty()) {
      traj.actions.push_back(ActionRecord::continuous(static_cast<Axis>(std::stoi(fields[2])),
                                                      parse_double(fields[3], path)));
    } else {
      finished = true;
    }
  }
  if (traj.observations.size() != traj.actions.size() + 1) {
    throw DatasetError("trajectory in " + path.string() + " is not terminated by an observation");
  }
  return traj;
}

Dataset generate_dataset(const EnvironmentSpec& spec, std::uint64_t seed, int m,
                         std::size_t count) {
  const Environment environment(spec);
  Dataset data{spec, seed, m, {}};
  data.trajectories.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    data.trajectories.push_back(sample_trajectory(environment, std::nullopt, m, derive_seed(seed, k)));
  }
  return data;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());

  json meta;
  meta["format"] = "symrep-trajectories";
  meta["version"] = 1;
  const auto& spec = dataset.environment;
  meta["environment"] = {
      {"type", to_string(spec.kind)},
      {"p", spec.kind == EnvironmentKind::Torus ? json(spec.p) : json(nullptr)},
      {"start", spec.start == StartPolicy::Center ? "center" : "random"},
      {"observation", spec.mixed_observations ? "mixed" : "plain"},
      {"mixing_seed", spec.kind == EnvironmentKind::Factor ? json(spec.mixing_seed) : json(nullptr)},
  };
  meta["seed"] = dataset.seed;
  meta["rollout_length"] = dataset.rollout_length;
  meta["count"] = dataset.trajectories.size();
  json files = json::array();
  json starts = json::array();
  for (std::size_t k = 0; k < dataset.trajectories.size(); ++k) {
    const std::string name = trajectory_file(k);
    write_trajectory_csv(dataset.trajectories[k], dir / name);
    files.push_back(name);
    starts.push_back(state_to_json(dataset.trajectories[k].start));
  }
  meta["files"] = files;
  meta["starts"] = starts;

  std::ofstream out(dir / kMetadataFile, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + (dir / kMetadataFile).string());
  out << meta.dump(2) << '\n';
  if (!out) throw DatasetError("failed writing " + (dir / kMetadataFile).string());
}

Dataset import_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / kMetadataFile);
  if (!in) throw DatasetError("missing " + (dir / kMetadataFile).string());
  json meta;
  try {
    in >> meta;
    Dataset data;
    const auto& e = meta.at("environment");
    const auto kind = environment_kind_from_string(e.at("type").get<std::string>());
    if (!kind) throw DatasetError("unknown environment type in metadata");
    data.environment.kind = *kind;
    if (*kind == EnvironmentKind::Torus) data.environment.p = e.at("p").get<int>();
    data.environment.start =
        e.at("start").get<std::string>() == "center" ? StartPolicy::Center : StartPolicy::Random;
    data.environment.mixed_observations = e.at("observation").get<std::string>() == "mixed";
    if (*kind == EnvironmentKind::Factor) {
      data.environment.mixing_seed = e.at("mixing_seed").get<std::uint64_t>();
    }
    data.seed = meta.at("seed").get<std::uint64_t>();
    data.rollout_length = meta.at("rollout_length").get<int>();
    const auto& files = meta.at("files");
    const auto& starts = meta.at("starts");
    if (files.size() != meta.at("count").get<std::size_t>() || starts.size() != files.size()) {
      throw DatasetError("metadata count does not match listed files");
    }
    for (std::size_t k = 0; k < files.size(); ++k) {
      Trajectory t = read_trajectory_csv(dir / files[k].get<std::string>());
      t.start = state_from_json(starts[k], data.environment);
      data.trajectories.push_back(std::move(t));
    }
    return data;
  } catch (const json::exception& ex) {
    throw DatasetError("malformed metadata: " + std::string(ex.what()));
  }
}

}  // namespace symrep::env
