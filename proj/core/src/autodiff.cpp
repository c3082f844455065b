#include "symrep/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "symrep/son.hpp"

namespace symrep::ad {

const Tensor& Var::value() const { return tape_->value(index_); }
const Tensor& Var::grad() const { return tape_->grad(index_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = true;
  return push(std::move(node));
}

Var Tape::parameter(Parameter& param) {
  Node node;
  node.value = param.value;
  node.needs_grad = true;
  node.parameter = &param;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ConfigurationError("operand recorded on a different tape");
    node.needs_grad = node.needs_grad || nodes_[p.index_].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Tape::grad_buffer(std::size_t index) {
  Node& node = nodes_[index];
  if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
    node.grad = Tensor::zeros_like(node.value);
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ConfigurationError("loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " +
                         shape_to_string(loss.value().shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_buffer(loss.index_)[0] = 1.0;
  for (std::size_t k = loss.index_ + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (!node.needs_grad || node.grad.size() != node.value.size()) continue;
    if (node.backward) node.backward(*this, k);
    if (node.parameter != nullptr) {
      auto& acc = node.parameter->grad;
      if (acc.shape() != node.value.shape()) acc = Tensor::zeros_like(node.value);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += nodes_[k].grad[i];
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(t.shape()));
  }
}

// c[r x cc] += a[r x k] * b[k x cc]
void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t cc) {
  for (std::size_t i = 0; i < r; ++i) {
    double* ci = c + i * cc;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * cc;
      for (std::size_t j = 0; j < cc; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[r x k] += g[r x cc] * b[k x cc]^T, via an explicit transpose so the
// inner loop is a contiguous axpy rather than a reduction
void gemm_nt(const double* g, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t cc) {
  std::vector<double> bt(k * cc);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < cc; ++j) bt[j * k + p] = b[p * cc + j];
  gemm_nn(g, bt.data(), c, r, cc, k);
}

// c[k x cc] += a[r x k]^T * g[r x cc]
void gemm_tn(const double* a, const double* g, double* c, std::size_t r, std::size_t k,
             std::size_t cc) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * cc;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * cc;
      for (std::size_t j = 0; j < cc; ++j) cp[j] += av * gi[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  const std::size_t r = av.dim(0), k = av.dim(1), c = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_to_string(av.shape()) +
                         " and " + shape_to_string(bv.shape()));
  }
  Tensor out(Shape{r, c});
  gemm_nn(av.data(), bv.data(), out.data(), r, k, c);
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, r, k, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) gemm_nt(g.data(), t.value(ib).data(), t.grad_buffer(ia).data(), r, k, c);
    if (t.needs_grad(ib)) gemm_tn(t.value(ia).data(), g.data(), t.grad_buffer(ib).data(), r, k, c);
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_bias");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (bv.size() != c) {
    throw DimensionError("add_bias: bias " + shape_to_string(bv.shape()) + " for input " +
                         shape_to_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const std::size_t ix = x.index(), ib = bias.index();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ix)) {
      Tensor& gx = t.grad_buffer(ix);
      for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
  });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t idx : {ia, ib}) {
      if (!t.needs_grad(idx)) continue;
      Tensor& gi = t.grad_buffer(idx);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ix = x.index();
  return x.tape().record(std::move(out), {x}, [ix, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += factor * g[k];
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.index();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] > 0.0) gx[k] += g[k];
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  const std::size_t ix = x.index();
  return x.tape().record(Tensor::scalar(total), {x}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad_buffer(ix);
    for (double& v : gx.values()) v += g;
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "concat_cols");
  require_rank(bv, 2, "concat_cols");
  if (av.dim(0) != bv.dim(0)) {
    throw DimensionError("concat_cols: row counts differ for " + shape_to_string(av.shape()) +
                         " and " + shape_to_string(bv.shape()));
  }
  const std::size_t r = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out(Shape{r, p + q});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, r, p, q](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
    }
  });
}

Var normalize_to_sphere(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) {
    throw DimensionError("normalize_to_sphere: expected vector or matrix, got " +
                         shape_to_string(xv.shape()));
  }
  const std::size_t rows = xv.rank() == 1 ? 1 : xv.dim(0);
  const std::size_t n = xv.rank() == 1 ? xv.dim(0) : xv.dim(1);
  Tensor out = xv;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += xv[r * n + j] * xv[r * n + j];
    const double norm = std::sqrt(sq);
    if (!(norm > kSphereEpsilon)) {
      throw DomainError("normalize_to_sphere: degenerate input with norm " + std::to_string(norm));
    }
    norms[r] = norm;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] / norm;
  }
  const std::size_t ix = x.index();
  return x.tape().record(
      std::move(out), {x}, [ix, rows, n, norms = std::move(norms)](Tape& t, std::size_t self) {
        // d(x/|x|) = (g - y (y.g)) / |x|
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
          for (std::size_t j = 0; j < n; ++j)
            gx[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norms[r];
        }
      });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, double target) {
  // -[t log s(x) + (1-t) log(1 - s(x))] = max(x,0) - x t + log(1 + exp(-|x|))
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Var bce_loss(Var logits, Var target) {
  const Tensor& lv = logits.value();
  const Tensor& tv = target.value();
  if (lv.shape() != tv.shape()) {
    throw DimensionError("bce_loss: logits " + shape_to_string(lv.shape()) + " vs target " +
                         shape_to_string(tv.shape()));
  }
  if (lv.size() == 0) throw DimensionError("bce_loss: empty input");
  double total = 0.0;
  for (std::size_t k = 0; k < lv.size(); ++k) {
    const double t = tv[k];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw DomainError("bce_loss: target " + std::to_string(t) + " outside [0,1]");
    }
    total += bce_with_logit(lv[k], t);
  }
  const double inv = 1.0 / static_cast<double>(lv.size());
  const std::size_t il = logits.index(), it = target.index();
  return logits.tape().record(
      Tensor::scalar(total * inv), {logits, target}, [il, it, inv](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] * inv;
        const Tensor& lv = t.value(il);
        const Tensor& tv = t.value(it);
        if (t.needs_grad(il)) {
          Tensor& gl = t.grad_buffer(il);
          for (std::size_t k = 0; k < lv.size(); ++k) gl[k] += g * (sigmoid(lv[k]) - tv[k]);
        }
        if (t.needs_grad(it)) {
          Tensor& gt = t.grad_buffer(it);
          for (std::size_t k = 0; k < lv.size(); ++k) gt[k] -= g * lv[k];
        }
      });
}

Var compose_rotations(Var angles, int n) {
  const Tensor& av = angles.value();
  require_rank(av, 2, "compose_rotations");
  const std::size_t k = son::num_planes(n);
  if (av.dim(1) != k) {
    throw DimensionError("compose_rotations: " + shape_to_string(av.shape()) + " angles for n=" +
                         std::to_string(n));
  }
  const std::size_t rows = av.dim(0);
  const auto nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  Tensor out(Shape{rows, static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  for (std::size_t r = 0; r < rows; ++r) {
    son::RotationParams params(n, std::vector<double>(av.data() + r * k, av.data() + (r + 1) * k));
    const auto g = son::compose_representation(params);
    std::copy(g.values().begin(), g.values().end(), out.data() + r * nn);
  }
  const std::size_t ia = angles.index();
  return angles.tape().record(std::move(out), {angles}, [ia, n, k, rows, nn](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      son::RotationParams params(n, std::vector<double>(av.data() + r * k, av.data() + (r + 1) * k));
      son::RepresentationMatrix upstream(n, std::vector<double>(g.data() + r * nn, g.data() + (r + 1) * nn));
      const auto grad = son::representation_backward(params, upstream);
      for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += grad.angles()[j];
    }
  });
}

Var apply_rotations(Var mats, Var z, std::span<const std::size_t> index) {
  const Tensor& mv = mats.value();
  const Tensor& zv = z.value();
  require_rank(mv, 3, "apply_rotations");
  require_rank(zv, 2, "apply_rotations");
  const std::size_t batch = zv.dim(0), n = zv.dim(1), count = mv.dim(0);
  if (mv.dim(1) != n || mv.dim(2) != n) {
    throw DimensionError("apply_rotations: matrices " + shape_to_string(mv.shape()) +
                         " for latents " + shape_to_string(zv.shape()));
  }
  if (index.size() != batch) {
    throw DimensionError("apply_rotations: " + std::to_string(index.size()) +
                         " indices for batch of " + std::to_string(batch));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t v : idx) {
    if (v >= count) throw DimensionError("apply_rotations: matrix index out of range");
  }
  Tensor out(Shape{batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* m = mv.data() + idx[b] * n * n;
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += m[r * n + c] * zv[b * n + c];
      out[b * n + r] = acc;
    }
  }
  const std::size_t im = mats.index(), iz = z.index();
  return mats.tape().record(
      std::move(out), {mats, z}, [im, iz, batch, n, idx = std::move(idx)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& mv = t.value(im);
        const Tensor& zv = t.value(iz);
        if (t.needs_grad(iz)) {
          Tensor& gz = t.grad_buffer(iz);
          for (std::size_t b = 0; b < batch; ++b) {
            const double* m = mv.data() + idx[b] * n * n;
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t c = 0; c < n; ++c) gz[b * n + c] += m[r * n + c] * g[b * n + r];
          }
        }
        if (t.needs_grad(im)) {
          Tensor& gm = t.grad_buffer(im);
          for (std::size_t b = 0; b < batch; ++b) {
            double* m = gm.data() + idx[b] * n * n;
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t c = 0; c < n; ++c) m[r * n + c] += g[b * n + r] * zv[b * n + c];
          }
        }
      });
}

Var entanglement(Var angles, int n, std::span<const std::size_t> rows) {
  const Tensor& av = angles.value();
  require_rank(av, 2, "entanglement");
  const std::size_t k = son::num_planes(n);
  if (av.dim(1) != k) {
    throw DimensionError("entanglement: " + shape_to_string(av.shape()) + " angles for n=" +
                         std::to_string(n));
  }
  std::vector<std::size_t> selected(rows.begin(), rows.end());
  if (selected.empty()) {
    selected.resize(av.dim(0));
    for (std::size_t r = 0; r < selected.size(); ++r) selected[r] = r;
  }
  std::vector<son::RotationParams> params;
  params.reserve(selected.size());
  for (std::size_t r : selected) {
    if (r >= av.dim(0)) throw DimensionError("entanglement: row index out of range");
    params.emplace_back(n, std::vector<double>(av.data() + r * k, av.data() + (r + 1) * k));
  }
  const double value = son::entanglement_metric(params);
  const std::size_t ia = angles.index();
  return angles.tape().record(
      Tensor::scalar(value), {angles},
      [ia, k, selected = std::move(selected), params = std::move(params)](Tape& t, std::size_t self) {
        const auto grads = son::entanglement_backward(params, t.grad(self)[0]);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t s = 0; s < selected.size(); ++s)
          for (std::size_t j = 0; j < k; ++j) ga[selected[s] * k + j] += grads[s].angles()[j];
      });
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_parameters(std::span<Parameter* const> params) {
  AdamState state;
  for (const Parameter* p : params) {
    state.first_moment.push_back(Tensor::zeros_like(p->value));
    state.second_moment.push_back(Tensor::zeros_like(p->value));
  }
  return state;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamOptions& options) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ConfigurationError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                             std::to_string(grads.size()) + " gradients, " +
                             std::to_string(state.first_moment.size()) + " moment pairs");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = *params[p];
    const Tensor& grad = *grads[p];
    Tensor& m = state.first_moment[p];
    Tensor& v = state.second_moment[p];
    if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size()) {
      throw ConfigurationError("adam_step: tensor " + std::to_string(p) + " has mismatched sizes");
    }
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * g;
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      value[k] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& options) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Parameter* p : params) {
    if (p->grad.size() != p->value.size()) p->grad = Tensor::zeros_like(p->value);
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(values, grads, state, options);
}

// ---------------------------------------------------------------------------

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         std::span<const double> analytic, double step) {
  if (analytic.size() != x.size()) {
    throw DimensionError("finite_diff_check: gradient length does not match input");
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + step;
    const double up = f(probe);
    probe[k] = x[k] - step;
    const double down = f(probe);
    probe[k] = x[k];
    const double central = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[k] - central) / (std::abs(analytic[k]) + 1e-10));
  }
  return worst;
}

double finite_diff_check(const ScalarGraph& f, const Tensor& x, double step) {
  Tape tape;
  Var input = tape.variable(x);
  Var out = f(tape, input);
  tape.backward(out);
  const Tensor grad = input.grad().size() == x.size() ? input.grad() : Tensor::zeros_like(x);
  auto evaluate = [&f](const Tensor& at) {
    Tape t;
    return f(t, t.constant(at)).value().item();
  };
  return finite_diff_check(evaluate, x, grad.values(), step);
}

}  // namespace symrep::ad
