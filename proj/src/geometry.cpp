#include "ioumatch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace ioumatch {

namespace {

constexpr double kEdgeTol = 1e-9;
constexpr double kMinArea = 1e-12;

struct Point2 {
  double x;
  double y;
};

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Point2> bev_rectangle(const OrientedBox3D& box) {
  const auto c = corners(box);
  return {{c[0].x(), c[0].y()}, {c[1].x(), c[1].y()},
          {c[2].x(), c[2].y()}, {c[3].x(), c[3].y()}};
}

// Intersection of segment p->q with the infinite line through a->b.
Point2 line_intersection(const Point2& p, const Point2& q, const Point2& a,
                         const Point2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

// Sutherland-Hodgman: clip a convex subject polygon by a convex CCW clipper.
std::vector<Point2> clip_convex(std::vector<Point2> subject,
                                const std::vector<Point2>& clipper) {
  for (std::size_t e = 0; e < clipper.size() && !subject.empty(); ++e) {
    const Point2& a = clipper[e];
    const Point2& b = clipper[(e + 1) % clipper.size()];
    const double edge_len = std::hypot(b.x - a.x, b.y - a.y);
    auto inside = [&](const Point2& p) {
      return cross(a, b, p) >= -kEdgeTol * edge_len;
    };
    std::vector<Point2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point2& cur = subject[i];
      const Point2& prev = subject[(i + subject.size() - 1) % subject.size()];
      const bool cur_in = inside(cur);
      const bool prev_in = inside(prev);
      if (cur_in) {
        if (!prev_in) out.push_back(line_intersection(prev, cur, a, b));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(line_intersection(prev, cur, a, b));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

double polygon_area(const std::vector<Point2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

}  // namespace

double normalize_yaw(double yaw) {
  if (!std::isfinite(yaw)) throw std::invalid_argument("yaw must be finite");
  double r = std::remainder(yaw, 2.0 * kPi);  // [-pi, pi]
  if (r >= kPi) r -= 2.0 * kPi;
  if (r < -kPi) r += 2.0 * kPi;
  return r;
}

OrientedBox3D::OrientedBox3D(const Vec3& center, const Vec3& size, double yaw)
    : center_(center), size_(size), yaw_(normalize_yaw(yaw)) {
  if (!center.allFinite() || !size.allFinite())
    throw std::invalid_argument("box parameters must be finite");
  if ((size.array() <= 0.0).any())
    throw std::invalid_argument("box size components must be positive");
}

Mat3 OrientedBox3D::rotation() const {
  const double c = std::cos(yaw_);
  const double s = std::sin(yaw_);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

Vec3 OrientedBox3D::to_local(const Vec3& world) const {
  return rotation().transpose() * (world - center_);
}

Vec3 OrientedBox3D::to_world(const Vec3& local) const {
  return center_ + rotation() * local;
}

bool Transform3D::is_identity() const {
  return !flip_x && !flip_y && rot_yaw == 0.0 && scale == 1.0;
}

Transform3D Transform3D::inverse() const {
  if (!(scale > 0.0)) throw std::invalid_argument("transform scale must be positive");
  Transform3D inv;
  inv.flip_x = flip_x;
  inv.flip_y = flip_y;
  // F R(-t) = R(t) F for a single mirror; two mirrors commute with rotation.
  inv.rot_yaw = (flip_x != flip_y) ? rot_yaw : -rot_yaw;
  inv.scale = 1.0 / scale;
  return inv;
}

double volume(const OrientedBox3D& box) { return box.size().prod(); }

std::array<Vec3, 8> corners(const OrientedBox3D& box) {
  std::array<Vec3, 8> out;
  const Vec3 half = 0.5 * box.size();
  const Mat3 rot = box.rotation();
  for (int i = 0; i < 8; ++i) {
    const int gray = i ^ (i >> 1);
    const Vec3 local((gray & 1) ? half.x() : -half.x(),
                     (gray & 2) ? half.y() : -half.y(),
                     (gray & 4) ? half.z() : -half.z());
    out[i] = box.center() + rot * local;
  }
  return out;
}

double intersection_volume(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double a_lo = a.center().z() - 0.5 * a.size().z();
  const double a_hi = a.center().z() + 0.5 * a.size().z();
  const double b_lo = b.center().z() - 0.5 * b.size().z();
  const double b_hi = b.center().z() + 0.5 * b.size().z();
  const double dz = std::min(a_hi, b_hi) - std::max(a_lo, b_lo);
  if (dz <= 0.0) return 0.0;

  const auto poly = clip_convex(bev_rectangle(a), bev_rectangle(b));
  const double area = polygon_area(poly);
  if (area <= kMinArea) return 0.0;
  return area * dz;
}

double iou3d(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = volume(a) + volume(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou3d_monte_carlo(const OrientedBox3D& a, const OrientedBox3D& b,
                         std::uint64_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be >= 1");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& box : {a, b}) {
    for (const Vec3& c : corners(box)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  std::mt19937_64 rng(seed);
  const Vec3 span = hi - lo;
  // 53 random bits -> uniform double in [0, 1).
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  // Same test as point_in_box with tol 0, with the box frames hoisted.
  struct Frame {
    Vec3 center, half;
    double c, s;
    bool contains(const Vec3& p) const {
      const Vec3 d = p - center;
      return std::abs(d.z()) <= half.z() && std::abs(c * d.x() + s * d.y()) <= half.x() &&
             std::abs(-s * d.x() + c * d.y()) <= half.y();
    }
  };
  const Frame fa{a.center(), 0.5 * a.size(), std::cos(a.yaw()), std::sin(a.yaw())};
  const Frame fb{b.center(), 0.5 * b.size(), std::cos(b.yaw()), std::sin(b.yaw())};

  std::uint64_t in_a = 0, in_b = 0, in_both = 0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double x = unit(), y = unit(), z = unit();
    const Vec3 p = lo + Vec3(x, y, z).cwiseProduct(span);
    const bool ia = fa.contains(p);
    const bool ib = fb.contains(p);
    in_a += ia;
    in_b += ib;
    in_both += (ia && ib);
  }
  if (in_both == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_a + in_b - in_both);
}

double transform_yaw(double yaw, const Transform3D& t) {
  if (t.flip_x) yaw = kPi - yaw;
  if (t.flip_y) yaw = -yaw;
  return normalize_yaw(yaw + t.rot_yaw);
}

Vec3 apply_transform(const Vec3& point, const Transform3D& t) {
  Vec3 p = point;
  if (t.flip_x) p.x() = -p.x();
  if (t.flip_y) p.y() = -p.y();
  const double c = std::cos(t.rot_yaw);
  const double s = std::sin(t.rot_yaw);
  const double x = c * p.x() - s * p.y();
  const double y = s * p.x() + c * p.y();
  return Vec3(x, y, p.z()) * t.scale;
}

OrientedBox3D apply_transform(const OrientedBox3D& box, const Transform3D& t) {
  if (!(t.scale > 0.0)) throw std::invalid_argument("transform scale must be positive");
  return OrientedBox3D(apply_transform(box.center(), t), box.size() * t.scale,
                       transform_yaw(box.yaw(), t));
}

double point_box_distance(const Vec3& p, const OrientedBox3D& box) {
  const Vec3 local = box.to_local(p);
  const Vec3 excess =
      (local.cwiseAbs() - 0.5 * box.size()).cwiseMax(Vec3::Zero());
  return excess.norm();
}

bool point_in_box(const Vec3& p, const OrientedBox3D& box, double tol) {
  const Vec3 local = box.to_local(p);
  return ((local.cwiseAbs() - 0.5 * box.size()).array() <= tol).all();
}

bool point_strictly_in_box(const Vec3& p, const OrientedBox3D& box) {
  const Vec3 local = box.to_local(p);
  return ((local.cwiseAbs() - 0.5 * box.size()).array() < 0.0).all();
}

}  // namespace ioumatch
