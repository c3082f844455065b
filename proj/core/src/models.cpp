#include "symrep/models.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace symrep::model {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::StructuredDiscrete: return "structured_discrete";
    case ModelKind::StructuredContinuous: return "structured_continuous";
    case ModelKind::Direct: return "direct";
  }
  return "unknown";
}

ModelConfig config_for(const env::Environment& env, ModelKind kind, int latent_dim) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.observation_dim = env.observation_dim();
  cfg.latent_dim = latent_dim;
  cfg.action_count = env.action_count();
  if (kind == ModelKind::StructuredContinuous && env.is_discrete()) {
    throw UnsupportedModeError("continuous action network needs a continuous environment");
  }
  if (kind != ModelKind::StructuredContinuous && !env.is_discrete()) {
    throw UnsupportedModeError(to_string(kind) + " model needs a discrete environment");
  }
  return cfg;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, env::Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Mlp::Mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
         env::Rng& rng) {
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_ = Parameter(prefix + ".w1", uniform_tensor({in, hidden}, bound1, rng));
  b1_ = Parameter(prefix + ".b1", uniform_tensor({hidden}, bound1, rng));
  w2_ = Parameter(prefix + ".w2", uniform_tensor({hidden, out}, bound2, rng));
  b2_ = Parameter(prefix + ".b2", uniform_tensor({out}, bound2, rng));
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) {
  ad::Var h = ad::relu(ad::add_bias(ad::matmul(x, tape.parameter(w1_)), tape.parameter(b1_)));
  return ad::add_bias(ad::matmul(h, tape.parameter(w2_)), tape.parameter(b2_));
}

std::vector<double> Mlp::evaluate(std::span<const double> x) const {
  const std::size_t in = w1_.value.dim(0), hidden = w1_.value.dim(1), out = w2_.value.dim(1);
  if (x.size() != in) {
    throw ConfigurationError("network input has " + std::to_string(x.size()) +
                             " entries, expected " + std::to_string(in));
  }
  std::vector<double> h(b1_.value.values().begin(), b1_.value.values().end());
  for (std::size_t i = 0; i < in; ++i) {
    if (x[i] == 0.0) continue;
    const double* row = w1_.value.data() + i * hidden;
    for (std::size_t j = 0; j < hidden; ++j) h[j] += x[i] * row[j];
  }
  std::vector<double> y(b2_.value.values().begin(), b2_.value.values().end());
  for (std::size_t i = 0; i < hidden; ++i) {
    const double hi = h[i] > 0.0 ? h[i] : 0.0;
    if (hi == 0.0) continue;
    const double* row = w2_.value.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += hi * row[j];
  }
  return y;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t decoder_input(const ModelConfig& c) {
  const auto n = static_cast<std::size_t>(c.latent_dim);
  return c.kind == ModelKind::Direct ? n + c.action_count : n;
}

Mlp seeded_mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
               std::uint64_t seed) {
  env::Rng rng(seed);
  return Mlp(prefix, in, hidden, out, rng);
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed)
    : config_(config),
      encoder_(seeded_mlp("encoder", config.observation_dim, config.hidden_units,
                          static_cast<std::size_t>(config.latent_dim),
                          env::derive_seed(init_seed, 1))),
      decoder_(seeded_mlp("decoder", decoder_input(config), config.hidden_units,
                          config.observation_dim, env::derive_seed(init_seed, 2))) {
  if (config_.latent_dim < 2) throw ConfigurationError("latent dimension n must be >= 2");
  const std::size_t planes = son::num_planes(config_.latent_dim);
  env::Rng rng(env::derive_seed(init_seed, 3));
  switch (config_.kind) {
    case ModelKind::StructuredDiscrete:
      if (config_.action_count == 0) throw ConfigurationError("action table needs actions");
      table_ = Parameter("actions.angles", uniform_tensor({config_.action_count, planes},
                                                          config_.angle_init_range, rng));
      break;
    case ModelKind::StructuredContinuous:
      action_net_.emplace_back("action_net", 2, config_.action_hidden_units, planes, rng);
      break;
    case ModelKind::Direct:
      if (config_.action_count == 0) throw ConfigurationError("direct model needs actions");
      break;
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = encoder_.parameters();
  for (Parameter* p : decoder_.parameters()) out.push_back(p);
  if (config_.kind == ModelKind::StructuredDiscrete) out.push_back(&table_);
  for (Mlp& net : action_net_)
    for (Parameter* p : net.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

void Model::check_observation(std::size_t dim) const {
  if (dim != config_.observation_dim) {
    throw ConfigurationError("observation has " + std::to_string(dim) +
                             " entries, model expects " + std::to_string(config_.observation_dim));
  }
}

void Model::check_action(const env::ActionRecord& action) const {
  if (config_.kind == ModelKind::StructuredContinuous) {
    if (action.is_discrete() || action.axis < 0 || action.axis > 2) {
      throw LookupError("continuous model given a non-continuous action");
    }
    return;
  }
  if (!action.is_discrete()) {
    throw UnsupportedModeError("discrete model given a continuous action");
  }
  if (static_cast<std::size_t>(action.id) >= config_.action_count) {
    throw LookupError("unknown action id " + std::to_string(action.id));
  }
}

ad::Var Model::encode(ad::Tape& tape, ad::Var observations) {
  check_observation(observations.value().dim(observations.value().rank() - 1));
  return ad::normalize_to_sphere(encoder_.forward(tape, observations));
}

ad::Var Model::decode(ad::Tape& tape, ad::Var latents) {
  const std::size_t expected = decoder_input(config_);
  if (latents.value().rank() != 2 || latents.value().dim(1) != expected) {
    throw ConfigurationError("decoder input " + shape_to_string(latents.shape()) +
                             ", expected width " + std::to_string(expected));
  }
  return decoder_.forward(tape, latents);
}

ad::Var Model::table_angles(ad::Tape& tape) {
  if (config_.kind != ModelKind::StructuredDiscrete) {
    throw UnsupportedModeError("model has no action table");
  }
  return tape.parameter(table_);
}

ad::Var Model::continuous_angles(ad::Tape& tape, std::span<const env::ActionRecord> actions) {
  if (config_.kind != ModelKind::StructuredContinuous) {
    throw UnsupportedModeError("model has no continuous action network");
  }
  Tensor input(Shape{actions.size(), 2});
  for (std::size_t b = 0; b < actions.size(); ++b) {
    check_action(actions[b]);
    input[b * 2] = static_cast<double>(actions[b].axis);
    input[b * 2 + 1] = actions[b].angle;
  }
  return action_net_.front().forward(tape, tape.constant(std::move(input)));
}

ad::Var Model::direct_predict(ad::Tape& tape, ad::Var observations,
                              std::span<const env::ActionRecord> actions) {
  if (config_.kind != ModelKind::Direct) {
    throw UnsupportedModeError("direct prediction needs a direct model");
  }
  ad::Var z = encode(tape, observations);
  if (actions.size() != z.value().dim(0)) {
    throw DimensionError("direct_predict: action count differs from batch size");
  }
  Tensor onehot(Shape{actions.size(), config_.action_count});
  for (std::size_t b = 0; b < actions.size(); ++b) {
    check_action(actions[b]);
    onehot[b * config_.action_count + static_cast<std::size_t>(actions[b].id)] = 1.0;
  }
  return decode(tape, ad::concat_cols(z, tape.constant(std::move(onehot))));
}

LatentVector Model::encode(std::span<const double> observation) const {
  check_observation(observation.size());
  LatentVector z = encoder_.evaluate(observation);
  double sq = 0.0;
  for (double v : z) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > ad::kSphereEpsilon)) throw DomainError("encoder produced a degenerate latent");
  for (double& v : z) v /= norm;
  return z;
}

std::vector<double> Model::decode(std::span<const double> latent) const {
  if (latent.size() != decoder_input(config_)) {
    throw ConfigurationError("decoder input has " + std::to_string(latent.size()) +
                             " entries, expected " + std::to_string(decoder_input(config_)));
  }
  return decoder_.evaluate(latent);
}

son::RotationParams Model::action_params(const env::ActionRecord& action) const {
  if (config_.kind == ModelKind::Direct) {
    throw UnsupportedModeError("direct model has no action representation");
  }
  check_action(action);
  const std::size_t planes = son::num_planes(config_.latent_dim);
  if (config_.kind == ModelKind::StructuredDiscrete) {
    const double* row = table_.value.data() + static_cast<std::size_t>(action.id) * planes;
    return son::RotationParams(config_.latent_dim, std::vector<double>(row, row + planes));
  }
  const std::vector<double> input{static_cast<double>(action.axis), action.angle};
  return son::RotationParams(config_.latent_dim, action_net_.front().evaluate(input));
}

son::RepresentationMatrix Model::action_matrix(const env::ActionRecord& action) const {
  return son::compose_representation(action_params(action));
}

std::vector<double> Model::direct_predict(std::span<const double> observation,
                                          const env::ActionRecord& action) const {
  if (config_.kind != ModelKind::Direct) {
    throw UnsupportedModeError("direct prediction needs a direct model");
  }
  check_action(action);
  LatentVector z = encode(observation);
  z.resize(decoder_input(config_), 0.0);
  z[static_cast<std::size_t>(config_.latent_dim) + static_cast<std::size_t>(action.id)] = 1.0;
  return decoder_.evaluate(z);
}

std::span<double> Model::table_entry(int action_id) {
  if (config_.kind != ModelKind::StructuredDiscrete) {
    throw UnsupportedModeError("model has no action table");
  }
  if (action_id < 0 || static_cast<std::size_t>(action_id) >= config_.action_count) {
    throw LookupError("unknown action id " + std::to_string(action_id));
  }
  const std::size_t planes = son::num_planes(config_.latent_dim);
  return table_.value.values().subspan(static_cast<std::size_t>(action_id) * planes, planes);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'M', 'R'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T get(std::istream& in, const char* what) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), sizeof(T))) {
    throw FormatError(std::string("weights file truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void write_weights(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kWeightsFormatVersion);
  for (const auto& [name, tensor] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : tensor.values()) put<double>(out, v);
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<NamedTensor> read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weights file " + path.string());
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError("bad magic bytes in " + path.string() + " (expected SYMR)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kWeightsFormatVersion) {
    throw FormatError("unsupported weights format version " + std::to_string(version));
  }
  std::vector<NamedTensor> tensors;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get<std::uint32_t>(in, "name length");
    if (name_len > 4096) throw FormatError("implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("weights file truncated in name");
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, "dims"));
    const std::size_t count = shape_size(shape);
    if (count > (std::size_t{1} << 32)) throw FormatError("implausible tensor size");
    std::vector<double> values(count);
    for (double& v : values) v = get<double>(in, "values");
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return tensors;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  for (const Parameter* p : model.parameters()) tensors.push_back({p->name, p->value});
  write_weights(path, tensors);
}

void load_weights(Model& model, const std::filesystem::path& path) {
  const auto tensors = read_weights(path);
  auto params = model.parameters();
  if (tensors.size() != params.size()) {
    throw FormatError("weights file has " + std::to_string(tensors.size()) +
                      " tensors, model architecture expects " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (tensors[k].name != params[k]->name ||
        tensors[k].tensor.shape() != params[k]->value.shape()) {
      throw FormatError("architecture mismatch at tensor " + std::to_string(k) + ": file has " +
                        tensors[k].name + " " + shape_to_string(tensors[k].tensor.shape()) +
                        ", model expects " + params[k]->name + " " +
                        shape_to_string(params[k]->value.shape()));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k]->value = tensors[k].tensor;
    params[k]->zero_grad();
  }
}

}  // namespace symrep::model
