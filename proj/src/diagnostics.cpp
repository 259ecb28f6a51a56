#include "ioumatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ioumatch/grid_pool.hpp"
#include "ioumatch/iou_head.hpp"
#include "ioumatch/pseudo_label.hpp"
#include "ioumatch/rng.hpp"

namespace ioumatch {

namespace {

OrientedBox3D random_box(Rng& rng, const Vec3& around, double spread) {
  const Vec3 center = around + Vec3(normal(rng, 0.0, spread), normal(rng, 0.0, spread),
                                    normal(rng, 0.0, 0.5 * spread));
  const Vec3 size(uniform(rng, 0.3, 2.0), uniform(rng, 0.3, 2.0), uniform(rng, 0.3, 1.5));
  return OrientedBox3D(center, size, uniform(rng, -kPi, kPi));
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = a.norm() + b.norm();
  return denom > 0.0 ? (a - b).norm() / denom : 0.0;
}

// head_input() of the pooled box, flattened row by row.
Eigen::VectorXd pooled_input(const OrientedBox3D& box, const SceneSample& scene, int D, int k) {
  const FeatureMatrix in = grid_pool(box, scene, D, k).head_input();
  return Eigen::Map<const Eigen::VectorXd>(in.data(), in.size());
}

OrientedBox3D perturbed(const OrientedBox3D& box, int param, double delta) {
  Vec3 c = box.center(), s = box.size();
  double yaw = box.yaw();
  if (param < 3) c(param) += delta;
  else if (param < 6) s(param - 3) += delta;
  else yaw += delta;
  return OrientedBox3D(c, s, yaw);
}

}  // namespace

DiagReport diag_iou_oracle(std::size_t n, std::uint64_t seed, std::uint64_t samples) {
  DiagReport r;
  r.kind = "iou-oracle";
  r.tolerance = 5e-3;
  Rng rng(derive_seed(seed, "diag-iou"));
  for (std::size_t i = 0; i < n; ++i) {
    const OrientedBox3D a = random_box(rng, Vec3::Zero(), 0.0);
    const OrientedBox3D b = random_box(rng, a.center(), 0.5);
    const double err =
        std::abs(iou3d(a, b) - iou3d_monte_carlo(a, b, samples, derive_seed(seed, "mc", i)));
    r.max_error = std::max(r.max_error, err);
  }
  r.cases = n;

  // Unit cubes offset by half a side: 1/3. Coaxial unit squares rotated by
  // pi/4 against each other: 1/sqrt(2).
  const double offset = iou3d(OrientedBox3D(Vec3::Zero(), Vec3::Ones(), 0.0),
                              OrientedBox3D(Vec3(0.5, 0.0, 0.0), Vec3::Ones(), 0.0));
  const double rotated = iou3d(OrientedBox3D(Vec3::Zero(), Vec3::Ones(), 0.0),
                               OrientedBox3D(Vec3::Zero(), Vec3::Ones(), kPi / 4.0));
  const double closed_err =
      std::max(std::abs(offset - 1.0 / 3.0), std::abs(rotated - 1.0 / std::sqrt(2.0)));
  r.details = {{"samples", samples}, {"closed_form_max_error", closed_err}};
  r.passed = r.max_error < r.tolerance && closed_err < 1e-9;
  return r;
}

DiagReport diag_grad_check(std::size_t n, std::uint64_t seed) {
  DiagReport r;
  r.kind = "grad-check";
  r.tolerance = 1e-4;
  constexpr double kHeadTolerance = 1e-3;
  constexpr double kEps = 1e-6;
  const IoUHeadConfig hc;
  const IoUHead head(hc);
  ParamVector params;
  head.register_params(params);
  Rng init(derive_seed(seed, "diag-grad-init"));
  // Full-gain init keeps the head response large enough to be measurable.
  head.network().init_params(params, init, 1.0);

  GeneratorParams gp;
  Rng rng(derive_seed(seed, "diag-grad"));
  double head_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const SceneSample scene = generate_scene(derive_seed(seed, "diag-scene", i), gp);
    const auto& gts = *scene.labels;
    const LabeledBox& gt = gts[std::uniform_int_distribution<std::size_t>(0, gts.size() - 1)(rng)];
    const OrientedBox3D box = jitter_box(gt.box, JitterConfig{0.2, 1}, rng);

    GridPoolJacobian jac;
    const GridPoolResult pool =
        pool_with_jacobian(box, scene, hc.grid_resolution, hc.num_neighbors, jac);
    const Eigen::Index rows = static_cast<Eigen::Index>(pool.size()) * (3 + hc.feature_dim);
    Eigen::MatrixXd analytic(rows, 7), numeric(rows, 7);
    const Eigen::Index width = 3 + hc.feature_dim;
    for (std::size_t m = 0; m < pool.size(); ++m) {
      const Eigen::Index off = static_cast<Eigen::Index>(m) * width;
      analytic.block(off, 0, width, 3) = jac.d_input_d_center[m];
      analytic.block(off, 3, width, 3) = jac.d_input_d_size[m];
      analytic.block(off, 6, width, 1) = jac.d_input_d_yaw[m];
    }
    for (int p = 0; p < 7; ++p)
      numeric.col(p) = (pooled_input(perturbed(box, p, kEps), scene, hc.grid_resolution,
                                     hc.num_neighbors) -
                        pooled_input(perturbed(box, p, -kEps), scene, hc.grid_resolution,
                                     hc.num_neighbors)) /
                       (2.0 * kEps);
    r.max_error = std::max(r.max_error, relative_error(analytic, numeric));

    const auto g = head.estimate_with_box_gradient(box, scene, params, gt.class_id);
    Eigen::VectorXd ga(7), gn(7);
    ga << g.d_center, g.d_size, g.d_yaw;
    for (int p = 0; p < 7; ++p)
      gn(p) = (head.estimate(perturbed(box, p, kEps), scene, params, gt.class_id) -
               head.estimate(perturbed(box, p, -kEps), scene, params, gt.class_id)) /
              (2.0 * kEps);
    head_max = std::max(head_max, relative_error(ga, gn));
  }
  r.cases = n;
  r.details = {{"pool_max_relative_error", r.max_error},
               {"head_max_relative_error", head_max},
               {"head_tolerance", kHeadTolerance}};
  r.passed = r.max_error < r.tolerance && head_max < kHeadTolerance;
  return r;
}

DiagReport diag_lhs_check(std::size_t n, std::uint64_t seed) {
  DiagReport r;
  r.kind = "lhs-check";
  r.tolerance = 0.0;
  Rng rng(derive_seed(seed, "diag-lhs"));
  std::size_t violations = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int count = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<Detection> dets;
    for (int j = 0; j < count; ++j) {
      Detection d;
      d.box = random_box(rng, Vec3::Zero(), 0.6);
      d.objectness = uniform(rng, 0.0, 1.0);
      d.pred_iou = uniform(rng, 0.0, 1.0);
      d.class_probs = Eigen::VectorXd::Zero(2);
      d.class_probs(std::uniform_int_distribution<int>(0, 1)(rng)) = 1.0;
      dets.push_back(d);
    }
    const double thr = kDefaultSuppressionIoU;
    std::size_t expected = 0;
    for (const auto& c : cluster_detections(dets, SuppressionMode::IouLhs, thr))
      expected += (c.size() + 1) / 2;
    const auto lhs = suppress_indices(dets, SuppressionMode::IouLhs, thr);
    const auto nms = suppress_indices(dets, SuppressionMode::IouNms, thr);
    bool ok = lhs.size() == expected && std::includes(lhs.begin(), lhs.end(), nms.begin(), nms.end());
    for (SuppressionMode mode : {SuppressionMode::ObjNms, SuppressionMode::IouNms}) {
      const auto kept = suppress_indices(dets, mode, thr);
      for (std::size_t a = 0; a < kept.size(); ++a)
        for (std::size_t b = a + 1; b < kept.size(); ++b)
          if (dets[kept[a]].predicted_class() == dets[kept[b]].predicted_class() &&
              iou3d(dets[kept[a]].box, dets[kept[b]].box) >= thr)
            ok = false;
    }
    violations += !ok;
  }
  r.cases = n;
  r.max_error = static_cast<double>(violations);
  r.details = {{"violations", violations}};
  r.passed = violations == 0;
  return r;
}

Json diag_report_to_json(const DiagReport& r) {
  return Json{{"kind", r.kind},           {"cases", r.cases},   {"max_error", r.max_error},
              {"tolerance", r.tolerance}, {"passed", r.passed}, {"details", r.details}};
}

}  // namespace ioumatch
