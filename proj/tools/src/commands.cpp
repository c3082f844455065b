#include "commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "symrep/analysis.hpp"
#include "symrep/trajectory_io.hpp"

namespace symrep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Maps library exceptions onto the documented exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const train::DivergenceError& ex) {
    err << "error: training diverged: " << ex.what() << '\n';
    return kExitDivergence;
  } catch (const model::FormatError& ex) {
    err << "error: weights: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const env::DatasetError& ex) {
    err << "error: dataset: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const analysis::UnsupportedError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const model::UnsupportedModeError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& ex) {
    // ConfigurationError and DimensionError derive from invalid_argument
    err << "error: " << ex.what() << '\n';
    return kExitConfig;
  }
}

ExperimentConfig resolve(const CommonOptions& common) {
  ExperimentConfig config = load_config(common.config);
  if (common.seed) config.train.seed = *common.seed;
  if (common.out) config.output_dir = *common.out;
  return config;
}

fs::path prepare_output(const ExperimentConfig& config) {
  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigurationError("output_dir: cannot create " + dir.string() +
                             (ec ? " (" + ec.message() + ")" : ""));
  }
  const fs::path probe = dir / ".symrep_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigurationError("output_dir: " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
  return dir;
}

/// Writes via a temporary file and rename so readers never see partial files.
void write_atomically(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigurationError("output_dir: cannot write " + tmp.string());
    out << contents;
    if (!out) throw ConfigurationError("output_dir: failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

int worker_threads_from_env() {
  const char* raw = std::getenv("SYMR_THREADS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) return 1;
  return static_cast<int>(std::min<long>(v, 256));
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonOptions& common, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig config = resolve(common);
    const fs::path dir = prepare_output(config);
    write_config_snapshot(config, dir / kSnapshotFile);
    log << "training " << model::to_string(config.train.model_kind) << " on "
        << env::to_string(config.train.environment.kind) << " for " << config.train.total_steps
        << " steps (seed " << config.train.seed << ")\n";
    const auto result = train::train(config.train);
    model::save_weights(result.model, dir / kWeightsFile);
    train::write_report_csv(result.report, dir / kReportFile);
    if (!result.report.steps.empty()) {
      const auto& last = result.report.steps.back();
      log << "final l_rec=" << last.l_rec << " l_ent=" << last.l_ent << " lambda=" << last.lambda
          << '\n';
    }
    log << "wrote " << (dir / kWeightsFile).string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int cmd_analyze(const CommonOptions& common, const AnalyzeOptions& options, std::ostream& log,
                std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig config = resolve(common);
    AnalysisToggles want = options.flags;
    if (!want.any()) {
      want = config.analyses;
    } else if (!options.proj_seeds_set) {
      want.proj_seeds = config.analyses.proj_seeds;
    }
    if (!want.any()) {
      throw ConfigurationError("analyses: nothing requested; pass a flag such as --group-report");
    }
    model::Model trained = train::make_model(config.train);
    model::load_weights(trained, options.weights);
    const env::Environment environment(config.train.environment);
    const fs::path dir = prepare_output(config);

    if (want.group_report) {
      const auto report = analysis::group_report(trained, environment);
      analysis::write_group_report_csv(report, dir / "group_report.csv");
      log << report.summary();
    }
    if (want.equivariance) {
      const auto result = analysis::equivariance_error(trained, environment, 1000,
                                                       env::derive_seed(config.train.seed, 0xe9));
      analysis::write_equivariance_csv(result, dir / "equivariance.csv");
      log << "equivariance error: mean " << result.mean << ", max " << result.max << " over "
          << result.samples << " pairs\n";
    }
    if (want.atlas || want.project_2d) {
      const auto atlas = analysis::latent_atlas(trained, environment);
      if (want.atlas) analysis::write_atlas_csv(atlas, dir / "atlas.csv");
      if (want.project_2d) {
        const std::uint64_t base = common.seed.value_or(0);
        for (int k = 0; k < want.proj_seeds; ++k) {
          const std::uint64_t seed = base + static_cast<std::uint64_t>(k);
          const auto spec = analysis::ProjectionSpec::random(trained.latent_dim(), seed);
          analysis::write_projection_csv(analysis::project_2d(atlas, spec),
                                         dir / ("projection_seed_" + std::to_string(seed) + ".csv"));
        }
      }
    }
    if (want.angle_sweep) {
      const std::vector<int> axes{0, 1, 2};
      const auto grid = analysis::uniform_grid(-std::numbers::pi, std::numbers::pi, 73);
      const auto sweep = analysis::continuous_angle_sweep(trained, axes, grid);
      analysis::write_angle_sweep_csv(sweep, dir / "angle_sweep.csv");
      for (const auto& s : sweep.summaries) {
        const auto plane = son::plane_at(s.dominant_plane, trained.latent_dim());
        log << "axis " << s.axis << ": dominant plane (" << plane.i << "," << plane.j
            << "), peak " << s.dominant_peak << ", off-plane mean " << s.off_plane_mean_abs
            << (s.monotone_half_turn ? ", monotone" : ", not monotone") << '\n';
      }
    }
    if (want.dimension_usage) {
      const auto usage = analysis::dimension_usage(trained);
      analysis::write_dimension_usage_csv(usage, dir / "dimension_usage.csv");
      analysis::write_action_angles_csv(trained, environment, dir / "action_angles.csv");
      log << "dimensions used: " << usage.used_count() << " of " << usage.scores.size() << '\n';
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

namespace {

const std::array<const char*, 3> kVariants = {"regularised", "unregularised", "direct"};

struct SeedCurve {
  // [variant][step] per-seed means over trials
  std::array<std::vector<double>, 3> error;
  std::array<std::vector<double>, 3> accuracy;
};

train::TrainConfig variant_config(const train::TrainConfig& base, std::size_t variant,
                                  std::uint64_t seed) {
  train::TrainConfig c = base;
  c.seed = seed;
  c.record_wall_clock = false;
  if (variant == 1) c.lambda = train::ConstantLambda{0.0};
  if (variant == 2) {
    c.model_kind = model::ModelKind::Direct;
    c.lambda = train::ConstantLambda{0.0};
  }
  return c;
}

SeedCurve run_seed(const ExperimentConfig& config, std::uint64_t seed, int horizon, int trials) {
  std::vector<model::Model> models;
  for (std::size_t v = 0; v < kVariants.size(); ++v) {
    models.push_back(train::train(variant_config(config.train, v, seed)).model);
  }
  auto reg = analysis::structured_predictor(models[0], kVariants[0]);
  auto unreg = analysis::structured_predictor(models[1], kVariants[1]);
  auto direct = analysis::direct_predictor(models[2], kVariants[2]);
  const std::array<analysis::RolloutPredictor*, 3> predictors{reg.get(), unreg.get(), direct.get()};
  const env::Environment environment(config.train.environment);
  const auto curves = analysis::rollout_error_curve(predictors, environment, horizon, trials,
                                                    env::derive_seed(seed, 0xbe7c));
  SeedCurve out;
  for (std::size_t v = 0; v < kVariants.size(); ++v) {
    for (const auto& point : curves[v]) {
      out.error[v].push_back(point.mean_error);
      out.accuracy[v].push_back(point.mean_accuracy);
    }
  }
  return out;
}

std::string seed_file(std::uint64_t seed) { return "seed_" + std::to_string(seed) + ".csv"; }

std::string format_seed_curve(const SeedCurve& curve, std::uint64_t seed) {
  std::ostringstream out;
  out << std::setprecision(17) << "model,seed,step,mean_error,mean_accuracy\n";
  for (std::size_t v = 0; v < kVariants.size(); ++v) {
    for (std::size_t k = 0; k < curve.error[v].size(); ++k) {
      out << kVariants[v] << ',' << seed << ',' << k + 1 << ',' << curve.error[v][k] << ','
          << curve.accuracy[v][k] << '\n';
    }
  }
  return out.str();
}

std::optional<SeedCurve> read_seed_curve(const fs::path& path, int horizon) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != "model,seed,step,mean_error,mean_accuracy") {
    return std::nullopt;
  }
  SeedCurve curve;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string name, seed, step, error, accuracy;
    if (!std::getline(row, name, ',') || !std::getline(row, seed, ',') ||
        !std::getline(row, step, ',') || !std::getline(row, error, ',') ||
        !std::getline(row, accuracy)) {
      return std::nullopt;
    }
    const auto it = std::find_if(kVariants.begin(), kVariants.end(),
                                 [&](const char* v) { return name == v; });
    if (it == kVariants.end()) return std::nullopt;
    const auto v = static_cast<std::size_t>(it - kVariants.begin());
    curve.error[v].push_back(std::strtod(error.c_str(), nullptr));
    curve.accuracy[v].push_back(std::strtod(accuracy.c_str(), nullptr));
  }
  for (std::size_t v = 0; v < kVariants.size(); ++v) {
    if (curve.error[v].size() != static_cast<std::size_t>(horizon)) return std::nullopt;
  }
  return curve;
}

}  // namespace

int cmd_predict_bench(const CommonOptions& common, const BenchOptions& options,
                      std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = resolve(common);
    if (config.train.model_kind != model::ModelKind::StructuredDiscrete) {
      throw ConfigurationError("model: predict-bench compares discrete structured models");
    }
    if (options.horizon) config.bench.horizon = *options.horizon;
    if (options.trials) config.bench.trials = *options.trials;
    if (config.bench.horizon < 1) throw ConfigurationError("horizon: must be >= 1");
    if (config.bench.trials < 1) throw ConfigurationError("trials: must be >= 1");
    if (options.seeds) {
      if (*options.seeds < 1) throw ConfigurationError("seeds: must be >= 1");
      config.seeds.clear();
      for (int k = 0; k < *options.seeds; ++k) {
        config.seeds.push_back(config.train.seed + static_cast<std::uint64_t>(k));
      }
    } else if (config.seeds.empty()) {
      for (std::uint64_t k = 0; k < 20; ++k) config.seeds.push_back(config.train.seed + k);
    }
    const fs::path dir = prepare_output(config);
    write_config_snapshot(config, dir / kSnapshotFile);

    // A manifest from an earlier run of the same configuration lets finished
    // seeds be reused; one from a different configuration is refused.
    const json identity = to_json(config);
    std::set<std::uint64_t> completed;
    const fs::path manifest_path = dir / kBenchManifest;
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      json manifest;
      try {
        manifest = json::parse(in);
      } catch (const json::exception&) {
        throw ConfigurationError("manifest: " + manifest_path.string() + " is corrupt");
      }
      if (!manifest.contains("config") || manifest["config"] != identity) {
        throw ConfigurationError("manifest: " + manifest_path.string() +
                                 " belongs to a different configuration; use a fresh --out");
      }
      for (const auto& s : manifest.value("completed", json::array())) {
        completed.insert(s.get<std::uint64_t>());
      }
    }

    std::mutex mutex;
    std::map<std::uint64_t, SeedCurve> results;
    auto save_manifest = [&] {
      json manifest;
      manifest["config"] = identity;
      manifest["completed"] = completed;
      write_atomically(manifest_path, manifest.dump(2) + "\n");
    };
    for (auto s : config.seeds) {
      if (!completed.count(s)) continue;
      auto curve = read_seed_curve(dir / seed_file(s), config.bench.horizon);
      if (curve) {
        results.emplace(s, std::move(*curve));
        log << "seed " << s << ": reusing " << seed_file(s) << '\n';
      } else {
        completed.erase(s);
      }
    }
    save_manifest();

    std::vector<std::uint64_t> pending;
    for (auto s : config.seeds) {
      if (!results.count(s)) pending.push_back(s);
    }
    std::atomic<std::size_t> next{0};
    std::optional<std::string> divergence;
    auto worker = [&] {
      for (std::size_t k = next++; k < pending.size(); k = next++) {
        const std::uint64_t s = pending[k];
        try {
          auto curve = run_seed(config, s, config.bench.horizon, config.bench.trials);
          const std::string text = format_seed_curve(curve, s);
          std::lock_guard lock(mutex);
          write_atomically(dir / seed_file(s), text);
          completed.insert(s);
          save_manifest();
          log << "seed " << s << ": done (horizon error reg " << curve.error[0].back()
              << ", unreg " << curve.error[1].back() << ", direct " << curve.error[2].back()
              << ")\n";
          results.emplace(s, std::move(curve));
        } catch (const train::DivergenceError& ex) {
          std::lock_guard lock(mutex);
          divergence = "seed " + std::to_string(s) + ": " + ex.what();
        }
      }
    };
    const int threads =
        std::min<int>(worker_threads_from_env(), static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (divergence) throw train::DivergenceError(*divergence);

    // merge in seed order so the output is independent of scheduling
    std::ostringstream out;
    out << std::setprecision(17)
        << "model,step,mean_error,error_ci,mean_accuracy,accuracy_ci,seeds\n";
    for (std::size_t v = 0; v < kVariants.size(); ++v) {
      for (int k = 0; k < config.bench.horizon; ++k) {
        std::vector<double> errors, accuracies;
        for (auto s : config.seeds) {
          errors.push_back(results.at(s).error[v][static_cast<std::size_t>(k)]);
          accuracies.push_back(results.at(s).accuracy[v][static_cast<std::size_t>(k)]);
        }
        const auto e = analysis::mean_ci(errors);
        const auto a = analysis::mean_ci(accuracies);
        out << kVariants[v] << ',' << k + 1 << ',' << e.mean << ',' << e.half_width << ','
            << a.mean << ',' << a.half_width << ',' << config.seeds.size() << '\n';
      }
    }
    write_atomically(dir / kBenchFile, out.str());
    log << "wrote " << (dir / kBenchFile).string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int cmd_export_dataset(const CommonOptions& common, std::size_t count, std::ostream& log,
                       std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig config = resolve(common);
    const fs::path dir = prepare_output(config);
    write_config_snapshot(config, dir / kSnapshotFile);
    const auto dataset = env::generate_dataset(config.train.environment, config.train.seed,
                                               config.train.rollout_length, count);
    env::export_dataset(dataset, dir);
    log << "wrote " << count << " trajectories to " << dir.string() << '\n';
    return kExitOk;
  });
}

}  // namespace symrep::cli
