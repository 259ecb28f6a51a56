#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace ioumatch {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into [-pi, pi).
double normalize_yaw(double yaw);

/// Upright 3D box: center, per-axis extent (width along local x, length along
/// local y, height along z) and a yaw rotation about the z axis.
///
/// Size components are strictly positive and yaw is kept in [-pi, pi); the
/// constructor throws std::invalid_argument otherwise.
class OrientedBox3D {
 public:
  OrientedBox3D() : OrientedBox3D(Vec3::Zero(), Vec3::Ones(), 0.0) {}
  OrientedBox3D(const Vec3& center, const Vec3& size, double yaw);

  const Vec3& center() const { return center_; }
  const Vec3& size() const { return size_; }
  double yaw() const { return yaw_; }

  /// Rotation taking box-frame vectors to world-frame vectors.
  Mat3 rotation() const;

  /// Expresses a world point in the box frame (origin at the center).
  Vec3 to_local(const Vec3& world) const;
  Vec3 to_world(const Vec3& local) const;

  bool operator==(const OrientedBox3D& other) const = default;

 private:
  Vec3 center_;
  Vec3 size_;
  double yaw_;
};

/// Augmentation applied in a fixed order: flips, then the yaw rotation about
/// the origin, then uniform scaling.
struct Transform3D {
  bool flip_x = false;  // mirror x -> -x
  bool flip_y = false;  // mirror y -> -y
  double rot_yaw = 0.0;
  double scale = 1.0;

  bool is_identity() const;
  /// Transform undoing this one. Representable in the same flip/rotate/scale
  /// order because a single mirror conjugates a rotation into its inverse.
  Transform3D inverse() const;

  bool operator==(const Transform3D&) const = default;
};

double volume(const OrientedBox3D& box);

/// Eight corners. Signs (sx, sy, sz) follow the 3-bit Gray code
/// 000 001 011 010 110 111 101 100 with bit0 -> x, bit1 -> y, bit2 -> z
/// (bit set = +half extent), rotated and translated afterwards. Corners 0..3
/// are therefore the bottom face in counter-clockwise order.
std::array<Vec3, 8> corners(const OrientedBox3D& box);

/// Intersection volume of two upright boxes (BEV convex clipping times the
/// z overlap).
double intersection_volume(const OrientedBox3D& a, const OrientedBox3D& b);

/// Exact 3D IoU; 0 for disjoint or measure-zero contact.
double iou3d(const OrientedBox3D& a, const OrientedBox3D& b);

/// Hit-counting estimate of the IoU over the axis-aligned hull of both boxes.
/// Throws std::invalid_argument if n_samples == 0.
double iou3d_monte_carlo(const OrientedBox3D& a, const OrientedBox3D& b,
                         std::uint64_t n_samples, std::uint64_t seed);

Vec3 apply_transform(const Vec3& point, const Transform3D& t);
OrientedBox3D apply_transform(const OrientedBox3D& box, const Transform3D& t);
/// Yaw of a heading after the transform (flip, then rotation).
double transform_yaw(double yaw, const Transform3D& t);

/// Euclidean distance from p to the box; 0 inside or on the surface.
double point_box_distance(const Vec3& p, const OrientedBox3D& box);

/// Inside or on the surface, with an absolute tolerance on each axis.
bool point_in_box(const Vec3& p, const OrientedBox3D& box, double tol = 1e-9);
/// Strictly inside (no tolerance); used by the hard-cropping pool.
bool point_strictly_in_box(const Vec3& p, const OrientedBox3D& box);

}  // namespace ioumatch
