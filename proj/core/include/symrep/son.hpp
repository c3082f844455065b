#pragma once

// SO(n) action representations built from ordered products of planar
// rotations, their angle gradients, and the entanglement metric.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace symrep::son {

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Rotation plane (i, j), 1-based, with 1 <= i < j <= n.
struct PlaneIndex {
  int i = 1;
  int j = 2;

  friend bool operator==(const PlaneIndex&, const PlaneIndex&) = default;
};

/// n(n-1)/2
std::size_t num_planes(int n);

/// Position of `idx` in the lexicographic (i, j) ordering; throws IndexError
/// when the plane is invalid for dimension n.
std::size_t plane_offset(PlaneIndex idx, int n);

/// Inverse of plane_offset.
PlaneIndex plane_at(std::size_t offset, int n);

void validate_plane(PlaneIndex idx, int n);

/// One angle per rotation plane, stored in lexicographic (i, j) order.
class RotationParams {
 public:
  explicit RotationParams(int n);
  RotationParams(int n, std::vector<double> angles);

  int dimension() const noexcept { return n_; }
  std::size_t size() const noexcept { return angles_.size(); }

  double& operator[](PlaneIndex idx) { return angles_[plane_offset(idx, n_)]; }
  double operator[](PlaneIndex idx) const { return angles_[plane_offset(idx, n_)]; }

  std::span<double> angles() noexcept { return angles_; }
  std::span<const double> angles() const noexcept { return angles_; }

  friend bool operator==(const RotationParams&, const RotationParams&) = default;

 private:
  int n_;
  std::vector<double> angles_;
};

/// Dense n x n matrix, row-major, 0-based element access.
class RepresentationMatrix {
 public:
  explicit RepresentationMatrix(int n);  // identity
  RepresentationMatrix(int n, std::vector<double> values);

  static RepresentationMatrix identity(int n) { return RepresentationMatrix(n); }
  static RepresentationMatrix zeros(int n);

  int dimension() const noexcept { return n_; }
  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r * n_ + c)]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r * n_ + c)]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  RepresentationMatrix transpose() const;
  RepresentationMatrix operator*(const RepresentationMatrix& rhs) const;
  std::vector<double> apply(std::span<const double> v) const;

  /// Frobenius norm of (this - other).
  double distance(const RepresentationMatrix& other) const;
  /// ||G^T G - I||_F
  double orthogonality_defect() const;
  double determinant() const;

  /// this <- this * R_idx(theta), touching only columns i and j.
  void rotate_columns(PlaneIndex idx, double theta);

 private:
  int n_;
  std::vector<double> values_;
};

/// Planar rotation embedded in n dimensions: cos at (i,i),(j,j), +sin at
/// (i,j), -sin at (j,i).
RepresentationMatrix plane_rotation(PlaneIndex idx, double theta, int n);

/// Ordered product R_{1,2} R_{1,3} ... R_{n-1,n}.
RepresentationMatrix compose_representation(const RotationParams& params);

/// Gradient of a scalar loss with respect to every angle, given
/// dL/dG (`upstream`) for G = compose_representation(params).
RotationParams representation_backward(const RotationParams& params,
                                       const RepresentationMatrix& upstream);

/// Offset of the largest-magnitude angle; ties go to the smallest offset.
std::size_t dominant_plane(const RotationParams& params);

/// Sum over actions of squared angles, excluding each action's
/// largest-magnitude angle.
double entanglement_metric(std::span<const RotationParams> all_params);

/// Subgradient of entanglement_metric scaled by `upstream`; each action's
/// dominant angle receives exactly zero.
std::vector<RotationParams> entanglement_backward(std::span<const RotationParams> all_params,
                                                  double upstream);

/// Wraps a single angle into (-pi, pi].
double canonical_angle(double theta);

/// Wraps every angle into (-pi, pi]. Reporting only.
RotationParams canonical_angles(const RotationParams& params);

}  // namespace symrep::son
