#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "symrep/autodiff.hpp"
#include "symrep/environments.hpp"
#include "symrep/son.hpp"
#include "symrep/tensor.hpp"

namespace symrep::model {

using LatentVector = std::vector<double>;

enum class ModelKind {
  StructuredDiscrete,    // encoder/decoder + action lookup table
  StructuredContinuous,  // encoder/decoder + (axis, angle) -> angles network
  Direct,                // encoder + decoder over [latent || one-hot action]
};

std::string to_string(ModelKind kind);

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class UnsupportedModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ModelConfig {
  ModelKind kind = ModelKind::StructuredDiscrete;
  std::size_t observation_dim = 25;
  int latent_dim = 4;
  std::size_t action_count = 4;  // discrete kinds only
  std::size_t hidden_units = 64;
  std::size_t action_hidden_units = 32;
  double angle_init_range = 0.1;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Model configuration matching an environment.
ModelConfig config_for(const env::Environment& env, ModelKind kind, int latent_dim);

/// Fully connected in -> hidden (ReLU) -> out.
class Mlp {
 public:
  Mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
      env::Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  std::vector<double> evaluate(std::span<const double> x) const;

  std::size_t input_dim() const { return w1_.value.dim(0); }
  std::size_t output_dim() const { return w2_.value.dim(1); }
  std::vector<Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

 private:
  Parameter w1_, b1_, w2_, b2_;
};

class Model {
 public:
  /// Fan-in uniform initialization for layers; angles uniform in
  /// [-angle_init_range, angle_init_range].
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const noexcept { return config_; }
  int latent_dim() const noexcept { return config_.latent_dim; }
  bool is_structured() const noexcept { return config_.kind != ModelKind::Direct; }

  /// Every trainable tensor, in a stable order used by persistence.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  // Differentiable paths ----------------------------------------------------

  /// [B x D] observations -> [B x n] unit latents.
  ad::Var encode(ad::Tape& tape, ad::Var observations);
  /// [B x n] latents (or [B x n+A] for the direct model) -> [B x D] logits.
  ad::Var decode(ad::Tape& tape, ad::Var latents);
  /// Table angles [A x K]; discrete structured models only.
  ad::Var table_angles(ad::Tape& tape);
  /// Angles [B x K] for a batch of continuous actions.
  ad::Var continuous_angles(ad::Tape& tape, std::span<const env::ActionRecord> actions);
  /// Next-observation logits from [encode(obs) || one-hot(action)].
  ad::Var direct_predict(ad::Tape& tape, ad::Var observations,
                         std::span<const env::ActionRecord> actions);

  // Plain evaluation ----------------------------------------------------------

  LatentVector encode(std::span<const double> observation) const;
  std::vector<double> decode(std::span<const double> latent) const;
  son::RotationParams action_params(const env::ActionRecord& action) const;
  son::RepresentationMatrix action_matrix(const env::ActionRecord& action) const;
  std::vector<double> direct_predict(std::span<const double> observation,
                                     const env::ActionRecord& action) const;

  /// Mutable table entry for a discrete action.
  std::span<double> table_entry(int action_id);

 private:
  void check_observation(std::size_t dim) const;
  void check_action(const env::ActionRecord& action) const;

  ModelConfig config_;
  Mlp encoder_;
  Mlp decoder_;
  Parameter table_;                 // StructuredDiscrete
  std::vector<Mlp> action_net_;     // StructuredContinuous: zero or one entry
};

// ---------------------------------------------------------------------------
// Weights persistence
//
// Layout: "SYMR" | u32 version | records until EOF, each record being
// u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 values.
// All integers and floats little-endian.

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

void write_weights(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_weights(const std::filesystem::path& path);

void save_weights(const Model& model, const std::filesystem::path& path);
/// Loads into a model of matching architecture; FormatError on any
/// name/shape mismatch or malformed file.
void load_weights(Model& model, const std::filesystem::path& path);

}  // namespace symrep::model
