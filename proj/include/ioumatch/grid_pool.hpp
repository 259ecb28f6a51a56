#pragma once

#include <vector>

#include <Eigen/Core>

#include "ioumatch/geometry.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

/// Features interpolated onto a D^3 lattice spanning a box.
struct GridPoolResult {
  std::vector<Vec3> grid_points;   // world frame
  std::vector<Vec3> local_coords;  // box frame, relative to the center
  FeatureMatrix features;          // D^3 x F
  Eigen::MatrixXi neighbor_ids;    // D^3 x k, nearest first
  Eigen::MatrixXd weights;         // D^3 x k, 1/d^2 (unnormalized)

  std::size_t size() const { return grid_points.size(); }
  /// Per grid point row [local_coords; features], the IoU head input.
  FeatureMatrix head_input() const;
};

/// Derivatives of the head input rows with respect to the box parameters,
/// holding the k-NN selection fixed. Row layout matches head_input().
struct GridPoolJacobian {
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> d_input_d_center;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> d_input_d_size;
  std::vector<Eigen::VectorXd> d_input_d_yaw;

  /// The feature block (rows 3..3+F) of d_input_d_center for grid point m.
  Eigen::Matrix<double, Eigen::Dynamic, 3> feature_d_center(std::size_t m) const;
  Eigen::Matrix<double, Eigen::Dynamic, 3> feature_d_size(std::size_t m) const;
};

/// Cell-center offsets ((i + 0.5) / D - 0.5) along one axis, as box-size
/// fractions. Index order of the lattice is row-major with x fastest.
std::vector<Vec3> grid_fractions(int D);

/// D^3 cell-center grid points of the box in world coordinates.
/// Throws std::invalid_argument if D < 1.
std::vector<Vec3> make_grid(const OrientedBox3D& box, int D);

/// Inverse-squared-distance interpolation from the k nearest seeds (ties go to
/// the lower seed index). A grid point within 1e-9 of a seed takes that
/// seed's feature verbatim. The returned local_coords are left empty.
/// Throws std::invalid_argument if k < 1 or the seed set has fewer than k points.
GridPoolResult interpolate(const std::vector<Vec3>& grid, const SceneSample& seeds, int k);

/// make_grid + interpolate, with local coordinates filled in.
GridPoolResult grid_pool(const OrientedBox3D& box, const SceneSample& seeds, int D, int k);

/// grid_pool plus analytic Jacobians of each head input row.
GridPoolResult pool_with_jacobian(const OrientedBox3D& box, const SceneSample& seeds,
                                  int D, int k, GridPoolJacobian& jacobian);

/// Hard-cropping baseline: seeds strictly inside the box. Its output changes
/// discontinuously when the box surface crosses a seed.
struct BoxQueryResult {
  std::vector<int> indices;
  FeatureMatrix features;
};
BoxQueryResult box_query_pool(const OrientedBox3D& box, const SceneSample& seeds);

}  // namespace ioumatch
