#include "ioumatch/grid_pool.hpp"

#include <stdexcept>

namespace ioumatch {

namespace {

constexpr double kCoincident = 1e-9;

struct Neighbor {
  double dist2;
  int index;
  bool operator<(const Neighbor& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
  }
};

// k smallest (dist2, index) pairs in ascending order.
void nearest_seeds(const Vec3& g, const std::vector<Vec3>& seeds, int k,
                   std::vector<Neighbor>& out) {
  out.clear();
  for (int i = 0; i < static_cast<int>(seeds.size()); ++i) {
    const Neighbor cand{(seeds[i] - g).squaredNorm(), i};
    if (static_cast<int>(out.size()) == k && !(cand < out.back())) continue;
    if (static_cast<int>(out.size()) < k) out.push_back(cand);
    else out.back() = cand;
    for (std::size_t j = out.size() - 1; j > 0 && out[j] < out[j - 1]; --j)
      std::swap(out[j], out[j - 1]);
  }
}

}  // namespace

FeatureMatrix GridPoolResult::head_input() const {
  const auto n = static_cast<Eigen::Index>(size());
  FeatureMatrix in(n, 3 + features.cols());
  for (Eigen::Index m = 0; m < n; ++m) {
    in.block<1, 3>(m, 0) = local_coords[m].transpose();
    in.block(m, 3, 1, features.cols()) = features.row(m);
  }
  return in;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> GridPoolJacobian::feature_d_center(std::size_t m) const {
  const auto& j = d_input_d_center.at(m);
  return j.bottomRows(j.rows() - 3);
}

Eigen::Matrix<double, Eigen::Dynamic, 3> GridPoolJacobian::feature_d_size(std::size_t m) const {
  const auto& j = d_input_d_size.at(m);
  return j.bottomRows(j.rows() - 3);
}

std::vector<Vec3> grid_fractions(int D) {
  if (D < 1) throw std::invalid_argument("grid resolution D must be >= 1");
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(D) * D * D);
  auto frac = [D](int i) { return (i + 0.5) / D - 0.5; };
  for (int iz = 0; iz < D; ++iz)
    for (int iy = 0; iy < D; ++iy)
      for (int ix = 0; ix < D; ++ix) out.emplace_back(frac(ix), frac(iy), frac(iz));
  return out;
}

std::vector<Vec3> make_grid(const OrientedBox3D& box, int D) {
  const Mat3 rot = box.rotation();
  std::vector<Vec3> out;
  for (const Vec3& u : grid_fractions(D))
    out.push_back(box.center() + rot * u.cwiseProduct(box.size()));
  return out;
}

GridPoolResult interpolate(const std::vector<Vec3>& grid, const SceneSample& seeds, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (seeds.points.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("interpolation needs at least k = " + std::to_string(k) +
                                " seeds, got " + std::to_string(seeds.points.size()));
  const auto n = static_cast<Eigen::Index>(grid.size());
  GridPoolResult r;
  r.grid_points = grid;
  r.features = FeatureMatrix::Zero(n, seeds.features.cols());
  r.neighbor_ids.resize(n, k);
  r.weights = Eigen::MatrixXd::Zero(n, k);

  std::vector<Neighbor> nn;
  nn.reserve(k);
  for (Eigen::Index m = 0; m < n; ++m) {
    nearest_seeds(grid[m], seeds.points, k, nn);
    for (int j = 0; j < k; ++j) r.neighbor_ids(m, j) = nn[j].index;
    if (std::sqrt(nn[0].dist2) < kCoincident) {
      r.weights(m, 0) = 1.0;
      r.features.row(m) = seeds.features.row(nn[0].index);
      continue;
    }
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = 1.0 / nn[j].dist2;
      r.weights(m, j) = w;
      total += w;
      r.features.row(m) += w * seeds.features.row(nn[j].index);
    }
    r.features.row(m) /= total;
  }
  return r;
}

GridPoolResult grid_pool(const OrientedBox3D& box, const SceneSample& seeds, int D, int k) {
  GridPoolResult r = interpolate(make_grid(box, D), seeds, k);
  for (const Vec3& u : grid_fractions(D)) r.local_coords.push_back(u.cwiseProduct(box.size()));
  return r;
}

GridPoolResult pool_with_jacobian(const OrientedBox3D& box, const SceneSample& seeds, int D,
                                  int k, GridPoolJacobian& jac) {
  GridPoolResult r = grid_pool(box, seeds, D, k);
  const auto fractions = grid_fractions(D);
  const Mat3 rot = box.rotation();
  Mat3 drot;  // d rotation / d yaw
  drot << -rot(1, 0), -rot(0, 0), 0.0, rot(0, 0), -rot(1, 0), 0.0, 0.0, 0.0, 0.0;
  const Eigen::Index F = r.features.cols();

  jac.d_input_d_center.assign(r.size(), Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(3 + F, 3));
  jac.d_input_d_size.assign(r.size(), Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(3 + F, 3));
  jac.d_input_d_yaw.assign(r.size(), Eigen::VectorXd::Zero(3 + F));

  for (std::size_t m = 0; m < r.size(); ++m) {
    const Vec3& u = fractions[m];
    // local = u * size: no dependence on center or yaw.
    jac.d_input_d_size[m].topRows<3>() = u.asDiagonal();

    if ((seeds.points[r.neighbor_ids(m, 0)] - r.grid_points[m]).norm() < kCoincident) continue;

    // df/dg = sum_i (f_i - f) dw_i/dg^T / W with dw_i/dg = -2 (g - g_i) / d^4.
    const double total = r.weights.row(m).sum();
    Eigen::Matrix<double, Eigen::Dynamic, 3> df_dg = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(F, 3);
    for (int j = 0; j < k; ++j) {
      const int idx = r.neighbor_ids(m, j);
      const Vec3 diff = r.grid_points[m] - seeds.points[idx];
      const double w = r.weights(m, j);
      const Vec3 dw_dg = -2.0 * w * w * diff;
      df_dg += (seeds.features.row(idx) - r.features.row(m)).transpose() * dw_dg.transpose();
    }
    df_dg /= total;

    // g = center + R (u * size)
    jac.d_input_d_center[m].bottomRows(F) = df_dg;
    jac.d_input_d_size[m].bottomRows(F) = df_dg * rot * u.asDiagonal();
    jac.d_input_d_yaw[m].tail(F) = df_dg * (drot * u.cwiseProduct(box.size()));
  }
  return r;
}

BoxQueryResult box_query_pool(const OrientedBox3D& box, const SceneSample& seeds) {
  BoxQueryResult r;
  for (int i = 0; i < static_cast<int>(seeds.points.size()); ++i)
    if (point_strictly_in_box(seeds.points[i], box)) r.indices.push_back(i);
  r.features.resize(static_cast<Eigen::Index>(r.indices.size()), seeds.features.cols());
  for (std::size_t j = 0; j < r.indices.size(); ++j)
    r.features.row(static_cast<Eigen::Index>(j)) = seeds.features.row(r.indices[j]);
  return r;
}

}  // namespace ioumatch
