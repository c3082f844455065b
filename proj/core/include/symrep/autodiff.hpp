#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive as it is evaluated; backward() walks the
// record in reverse, so operands always precede their results and each node
// is visited exactly once. Tapes are rebuilt for every forward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "symrep/tensor.hpp"

namespace symrep::ad {

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  /// Computes gradients of this node's parents from its own gradient.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Input whose gradient is reported through grad() after backward().
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; backward() accumulates into param.grad.
  Var parameter(Parameter& param);

  /// Appends a primitive. `parents` decide whether the node needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value(std::size_t index) const { return nodes_[index].value; }
  const Tensor& grad(std::size_t index) const { return nodes_[index].grad; }
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }
  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(std::size_t index);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* parameter = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives

/// [r x k] * [k x c] -> [r x c]
Var matmul(Var a, Var b);
/// Adds a length-c bias to every row of an [r x c] input.
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var scale(Var x, double factor);
Var relu(Var x);
/// Sum of all elements -> scalar.
Var sum(Var x);
/// Column concatenation of [r x p] and [r x q].
Var concat_cols(Var a, Var b);

/// Projects a vector [n], or each row of [r x n], onto the unit sphere.
/// Throws DomainError when a norm is <= 1e-12.
Var normalize_to_sphere(Var x);

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0,1],
/// evaluated in log-sum-exp form. Returns a scalar.
Var bce_loss(Var logits, Var target);

/// Builds SO(n) matrices from angles [r x n(n-1)/2] -> [r x n x n].
Var compose_rotations(Var angles, int n);

/// out[b] = mats[index[b]] * z[b] for z [B x n] and mats [R x n x n].
Var apply_rotations(Var mats, Var z, std::span<const std::size_t> index);

/// Entanglement metric summed over the selected rows of angles [r x K].
/// An empty `rows` selects every row.
Var entanglement(Var angles, int n, std::span<const std::size_t> rows = {});

constexpr double kSphereEpsilon = 1e-12;

/// Numerically stable softplus-based BCE helper shared with reporting code.
double bce_with_logit(double logit, double target);
double sigmoid(double x);

// ---------------------------------------------------------------------------
// Optimiser

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments per parameter tensor plus the shared step count.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static AdamState for_parameters(std::span<Parameter* const> params);
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Throws ConfigurationError if the state does not match the parameters.
void adam_step(std::span<Parameter* const> params, AdamState& state,
               const AdamOptions& options);

/// Overload taking separate value/gradient tensors.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamOptions& options);

// ---------------------------------------------------------------------------
// Gradient checking

/// Scalar-valued graph of one input variable.
using ScalarGraph = std::function<Var(Tape&, Var)>;

/// max_k |analytic_k - central_k| / (|analytic_k| + 1e-10)
double finite_diff_check(const ScalarGraph& f, const Tensor& x, double step = 1e-5);

/// Same comparison for a plain function with a caller-provided gradient.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         std::span<const double> analytic, double step = 1e-5);

}  // namespace symrep::ad
