#include "symrep/son.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace symrep::son {

std::size_t num_planes(int n) {
  if (n < 2) return 0;
  return static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
}

void validate_plane(PlaneIndex idx, int n) {
  if (idx.i < 1 || idx.i >= idx.j || idx.j > n) {
    throw IndexError("invalid rotation plane (" + std::to_string(idx.i) + "," +
                     std::to_string(idx.j) + ") for n=" + std::to_string(n));
  }
}

std::size_t plane_offset(PlaneIndex idx, int n) {
  validate_plane(idx, n);
  // planes with first index < i: sum_{r=1}^{i-1} (n - r)
  const std::size_t i = static_cast<std::size_t>(idx.i);
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t before = (i - 1) * nn - (i - 1) * i / 2;
  return before + static_cast<std::size_t>(idx.j - idx.i - 1);
}

PlaneIndex plane_at(std::size_t offset, int n) {
  std::size_t remaining = offset;
  for (int i = 1; i < n; ++i) {
    const auto row = static_cast<std::size_t>(n - i);
    if (remaining < row) return {i, i + 1 + static_cast<int>(remaining)};
    remaining -= row;
  }
  throw IndexError("plane offset " + std::to_string(offset) + " out of range for n=" +
                   std::to_string(n));
}

RotationParams::RotationParams(int n) : n_(n), angles_(num_planes(n), 0.0) {
  if (n < 2) throw std::invalid_argument("rotation dimension must be >= 2");
}

RotationParams::RotationParams(int n, std::vector<double> angles)
    : n_(n), angles_(std::move(angles)) {
  if (n < 2) throw std::invalid_argument("rotation dimension must be >= 2");
  if (angles_.size() != num_planes(n)) {
    throw std::invalid_argument("expected " + std::to_string(num_planes(n)) +
                                " angles for n=" + std::to_string(n) + ", got " +
                                std::to_string(angles_.size()));
  }
}

RepresentationMatrix::RepresentationMatrix(int n)
    : n_(n), values_(static_cast<std::size_t>(n * n), 0.0) {
  for (int k = 0; k < n; ++k) (*this)(k, k) = 1.0;
}

RepresentationMatrix::RepresentationMatrix(int n, std::vector<double> values)
    : n_(n), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(n * n)) {
    throw std::invalid_argument("representation matrix needs n*n values");
  }
}

RepresentationMatrix RepresentationMatrix::zeros(int n) {
  return RepresentationMatrix(n, std::vector<double>(static_cast<std::size_t>(n * n), 0.0));
}

RepresentationMatrix RepresentationMatrix::transpose() const {
  RepresentationMatrix out = zeros(n_);
  for (int r = 0; r < n_; ++r)
    for (int c = 0; c < n_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

RepresentationMatrix RepresentationMatrix::operator*(const RepresentationMatrix& rhs) const {
  if (rhs.n_ != n_) throw std::invalid_argument("representation dimension mismatch");
  RepresentationMatrix out = zeros(n_);
  for (int r = 0; r < n_; ++r)
    for (int k = 0; k < n_; ++k) {
      const double a = (*this)(r, k);
      for (int c = 0; c < n_; ++c) out(r, c) += a * rhs(k, c);
    }
  return out;
}

std::vector<double> RepresentationMatrix::apply(std::span<const double> v) const {
  if (v.size() != static_cast<std::size_t>(n_)) {
    throw std::invalid_argument("vector length does not match representation dimension");
  }
  std::vector<double> out(v.size(), 0.0);
  for (int r = 0; r < n_; ++r) {
    double acc = 0.0;
    for (int c = 0; c < n_; ++c) acc += (*this)(r, c) * v[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

double RepresentationMatrix::distance(const RepresentationMatrix& other) const {
  if (other.n_ != n_) throw std::invalid_argument("representation dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const double d = values_[k] - other.values_[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double RepresentationMatrix::orthogonality_defect() const {
  return (transpose() * (*this)).distance(identity(n_));
}

double RepresentationMatrix::determinant() const {
  std::vector<double> lu = values_;
  const auto n = static_cast<std::size_t>(n_);
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu[r * n + col]) > std::abs(lu[pivot * n + col])) pivot = r;
    if (lu[pivot * n + col] == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu[pivot * n + c], lu[col * n + c]);
      det = -det;
    }
    const double d = lu[col * n + col];
    det *= d;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu[r * n + col] / d;
      for (std::size_t c = col; c < n; ++c) lu[r * n + c] -= f * lu[col * n + c];
    }
  }
  return det;
}

void RepresentationMatrix::rotate_columns(PlaneIndex idx, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const int i = idx.i - 1;
  const int j = idx.j - 1;
  for (int r = 0; r < n_; ++r) {
    const double gi = (*this)(r, i);
    const double gj = (*this)(r, j);
    (*this)(r, i) = c * gi - s * gj;
    (*this)(r, j) = s * gi + c * gj;
  }
}

namespace {

// this <- R_idx(theta) * m, touching only rows i and j.
void rotate_rows(RepresentationMatrix& m, PlaneIndex idx, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const int i = idx.i - 1;
  const int j = idx.j - 1;
  for (int col = 0; col < m.dimension(); ++col) {
    const double mi = m(i, col);
    const double mj = m(j, col);
    m(i, col) = c * mi + s * mj;
    m(j, col) = -s * mi + c * mj;
  }
}

}  // namespace

RepresentationMatrix plane_rotation(PlaneIndex idx, double theta, int n) {
  validate_plane(idx, n);
  RepresentationMatrix out(n);
  out.rotate_columns(idx, theta);
  return out;
}

RepresentationMatrix compose_representation(const RotationParams& params) {
  const int n = params.dimension();
  RepresentationMatrix out(n);
  const auto angles = params.angles();
  for (std::size_t k = 0; k < angles.size(); ++k) {
    if (angles[k] == 0.0) continue;
    out.rotate_columns(plane_at(k, n), angles[k]);
  }
  return out;
}

RotationParams representation_backward(const RotationParams& params,
                                       const RepresentationMatrix& upstream) {
  const int n = params.dimension();
  if (upstream.dimension() != n) {
    throw std::invalid_argument("upstream gradient dimension mismatch");
  }
  const auto angles = params.angles();
  const std::size_t count = angles.size();

  // suffix[k] = R_{k+1} ... R_{K-1}
  std::vector<RepresentationMatrix> suffix(count, RepresentationMatrix(n));
  for (std::size_t k = count; k-- > 1;) {
    suffix[k - 1] = suffix[k];
    rotate_rows(suffix[k - 1], plane_at(k, n), angles[k]);
  }

  RotationParams grad(n);
  RepresentationMatrix prefix(n);  // R_0 ... R_{k-1}
  for (std::size_t k = 0; k < count; ++k) {
    const PlaneIndex idx = plane_at(k, n);
    // A = prefix^T * upstream * suffix^T; dL/dtheta = <A, R'>
    const RepresentationMatrix a = prefix.transpose() * upstream * suffix[k].transpose();
    const double c = std::cos(angles[k]);
    const double s = std::sin(angles[k]);
    const int i = idx.i - 1;
    const int j = idx.j - 1;
    grad.angles()[k] = -s * a(i, i) + c * a(i, j) - c * a(j, i) - s * a(j, j);
    prefix.rotate_columns(idx, angles[k]);
  }
  return grad;
}

std::size_t dominant_plane(const RotationParams& params) {
  const auto angles = params.angles();
  std::size_t best = 0;
  for (std::size_t k = 1; k < angles.size(); ++k) {
    if (std::abs(angles[k]) > std::abs(angles[best])) best = k;
  }
  return best;
}

double entanglement_metric(std::span<const RotationParams> all_params) {
  double total = 0.0;
  for (const auto& params : all_params) {
    const std::size_t skip = dominant_plane(params);
    const auto angles = params.angles();
    for (std::size_t k = 0; k < angles.size(); ++k) {
      if (k != skip) total += angles[k] * angles[k];
    }
  }
  return total;
}

std::vector<RotationParams> entanglement_backward(std::span<const RotationParams> all_params,
                                                  double upstream) {
  std::vector<RotationParams> grads;
  grads.reserve(all_params.size());
  for (const auto& params : all_params) {
    RotationParams g(params.dimension());
    const std::size_t skip = dominant_plane(params);
    const auto angles = params.angles();
    for (std::size_t k = 0; k < angles.size(); ++k) {
      g.angles()[k] = k == skip ? 0.0 : 2.0 * angles[k] * upstream;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double canonical_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // In-range angles are returned untouched so wrapping never perturbs them.
  if (theta > -std::numbers::pi && theta <= std::numbers::pi) return theta;
  double r = std::fmod(theta + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

RotationParams canonical_angles(const RotationParams& params) {
  RotationParams out = params;
  for (double& a : out.angles()) a = canonical_angle(a);
  return out;
}

}  // namespace symrep::son
