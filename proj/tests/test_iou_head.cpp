#include <cmath>
#include <random>

#include "doctest.h"
#include "ioumatch/iou_head.hpp"

using namespace ioumatch;

namespace {

GeneratorParams small_params() {
  GeneratorParams p;
  p.points_per_object = 48;
  p.background_points = 64;
  return p;
}

std::vector<SceneSample> scenes(std::uint64_t seed, int n) {
  std::vector<SceneSample> out;
  for (int i = 0; i < n; ++i)
    out.push_back(generate_scene(derive_seed(seed, "t", i), small_params(), "s" + std::to_string(i)));
  return out;
}

IoUHeadParams random_head(std::uint64_t seed) {
  IoUHeadParams h{IoUHeadConfig{}, {}};
  IoUHead head(h.config);
  head.register_params(h.params);
  Rng rng(seed);
  head.init_params(h.params, rng);
  return h;
}

}  // namespace

TEST_CASE("zero parameters give one half everywhere") {
  IoUHeadParams h{IoUHeadConfig{}, {}};
  IoUHead(h.config).register_params(h.params);
  const SceneSample s = generate_scene(1, small_params());
  const GridPoolResult pool = grid_pool((*s.labels)[0].box, s, 4, 3);
  const Eigen::VectorXd v = head_forward(pool, h);
  REQUIRE(v.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(v(c) == 0.5);
}

TEST_CASE("head output is a set function in (0, 1)") {
  const IoUHeadParams h = random_head(3);
  const SceneSample s = generate_scene(2, small_params());
  const GridPoolResult pool = grid_pool((*s.labels)[0].box, s, 4, 3);
  const Eigen::VectorXd v = head_forward(pool, h);
  for (int c = 0; c < 3; ++c) {
    CHECK(v(c) > 0.0);
    CHECK(v(c) < 1.0);
  }

  GridPoolResult perm = pool;
  const std::size_t n = pool.size();
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t src = (m * 7 + 3) % n;
    perm.grid_points[m] = pool.grid_points[src];
    perm.local_coords[m] = pool.local_coords[src];
    perm.features.row(m) = pool.features.row(src);
  }
  CHECK((head_forward(perm, h) - v).norm() == 0.0);

  GridPoolResult dup = pool;
  dup.grid_points.insert(dup.grid_points.end(), pool.grid_points.begin(), pool.grid_points.end());
  dup.local_coords.insert(dup.local_coords.end(), pool.local_coords.begin(), pool.local_coords.end());
  dup.features.resize(2 * n, pool.features.cols());
  dup.features << pool.features, pool.features;
  CHECK((head_forward(dup, h) - v).norm() == 0.0);

  GridPoolResult wrong = pool;
  wrong.features = pool.features.leftCols(5);
  CHECK_THROWS_AS(head_forward(wrong, h), std::invalid_argument);
}

TEST_CASE("select_class_iou") {
  const Eigen::Vector3d out(0.2, 0.7, 0.4);
  CHECK(select_class_iou(out, 1) == 0.7);
  CHECK(select_class_iou(Eigen::Vector3d::Constant(0.3), 0) == 0.3);
  CHECK_THROWS_AS(select_class_iou(out, 5), std::out_of_range);
  CHECK_THROWS_AS(select_class_iou(out, -1), std::out_of_range);
}

TEST_CASE("jitter_box statistics") {
  const OrientedBox3D cube(Vec3::Zero(), Vec3::Ones(), 0.4);
  Rng a(9), b(9);
  CHECK(jitter_box(cube, JitterConfig{}, a) == jitter_box(cube, JitterConfig{}, b));

  Rng z(1);
  const OrientedBox3D still = jitter_box(cube, JitterConfig{1e-300, 1}, z);
  CHECK((still.center() - cube.center()).norm() < 1e-250);
  CHECK((still.size() - cube.size()).norm() < 1e-250);

  Rng rng(2024);
  const int n = 10000;
  Vec3 sum = Vec3::Zero(), sum2 = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const OrientedBox3D j = jitter_box(cube, JitterConfig{}, rng);
    CHECK(j.yaw() == cube.yaw());
    for (int a2 = 0; a2 < 3; ++a2) CHECK(j.size()(a2) >= 0.1 - 1e-12);
    sum += j.center();
    sum2 += j.center().cwiseProduct(j.center());
  }
  const Vec3 mean = sum / n;
  for (int a2 = 0; a2 < 3; ++a2) {
    const double sd = std::sqrt(sum2(a2) / n - mean(a2) * mean(a2));
    CHECK(std::abs(sd - 0.3) < 0.01);
  }
}

TEST_CASE("best_iou") {
  const OrientedBox3D u(Vec3::Zero(), Vec3::Ones(), 0);
  CHECK(best_iou(u, {}) == 0.0);
  CHECK(best_iou(u, {{u, 0}}) == 1.0);
  CHECK(best_iou(u, {{OrientedBox3D(Vec3(0.5, 0, 0), Vec3::Ones(), 0), 1},
                     {OrientedBox3D(Vec3(9, 0, 0), Vec3::Ones(), 0), 2}}) ==
        doctest::Approx(1.0 / 3.0));
}

TEST_CASE("box gradient matches finite differences") {
  const IoUHeadParams h = random_head(17);
  const IoUHead head(h.config);
  const SceneSample s = generate_scene(5, small_params());
  std::mt19937_64 rng(4);
  const double eps = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const LabeledBox& gt = (*s.labels)[trial % s.labels->size()];
    Rng jr(trial);
    const OrientedBox3D box = jitter_box(gt.box, JitterConfig{0.1, 1}, jr);
    const int cls = trial % 3;
    const auto g = head.estimate_with_box_gradient(box, s, h.params, cls);
    CHECK(g.value == doctest::Approx(head.estimate(box, s, h.params, cls)).epsilon(1e-12));
    const auto base_ids = grid_pool(box, s, 4, 3).neighbor_ids;
    Eigen::Matrix<double, 6, 1> an, fd;
    bool stable = true;
    for (int k = 0; k < 6; ++k) {
      Vec3 cp = box.center(), cm = box.center(), sp = box.size(), sm = box.size();
      if (k < 3) {
        cp(k) += eps;
        cm(k) -= eps;
      } else {
        sp(k - 3) += eps;
        sm(k - 3) -= eps;
      }
      const OrientedBox3D bp(cp, sp, box.yaw()), bm(cm, sm, box.yaw());
      stable &= grid_pool(bp, s, 4, 3).neighbor_ids == base_ids &&
                grid_pool(bm, s, 4, 3).neighbor_ids == base_ids;
      fd(k) = (head.estimate(bp, s, h.params, cls) - head.estimate(bm, s, h.params, cls)) / (2 * eps);
      an(k) = k < 3 ? g.d_center(k) : g.d_size(k - 3);
    }
    if (!stable) continue;
    ++checked;
    CHECK((an - fd).norm() / std::max({an.norm(), fd.norm(), 1e-8}) < 1e-3);
  }
  CHECK(checked >= 20);
}

TEST_CASE("parameter gradient matches finite differences") {
  IoUHeadConfig cfg;
  cfg.hidden = 8;
  IoUHeadParams h{cfg, {}};
  const IoUHead head(cfg);
  head.register_params(h.params);
  Rng rng(5);
  head.init_params(h.params, rng);
  const SceneSample s = generate_scene(8, small_params());
  const GridPoolResult pool = grid_pool((*s.labels)[0].box, s, 4, 3);
  ParamVector grad = h.params.zeros_like();
  head.accumulate_param_gradient(pool, h.params, 1, 1.0, grad);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < h.params.size(); ++i) {
    ParamVector a = h.params, b = h.params;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    const double fd = (head.forward(pool, a)(1) - head.forward(pool, b)(1)) / 2e-6;
    num += (fd - grad.data()[i]) * (fd - grad.data()[i]);
    den += fd * fd + grad.data()[i] * grad.data()[i];
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("training lowers the L1 loss") {
  IoUTrainConfig train;
  train.epochs = 12;
  train.jitter.n_jitters_per_box = 3;
  train.seed = 3;
  const auto data = scenes(1, 6);
  const IoUTrainResult r = train_iou_head(data, IoUHeadConfig{}, train);
  REQUIRE(r.loss_history.size() == 12);
  for (std::size_t e = 1; e < r.loss_history.size(); ++e)
    CHECK(r.loss_history[e] <= 1.05 * r.loss_history[e - 1] + 1e-12);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(r.head.params.all_finite());

  const IoUTrainResult again = train_iou_head(data, IoUHeadConfig{}, train);
  CHECK(again.head.params == r.head.params);

  std::vector<SceneSample> unlabeled = data;
  for (auto& s : unlabeled) s.labels.reset();
  CHECK_THROWS_AS(train_iou_head(unlabeled, IoUHeadConfig{}, train), std::invalid_argument);

  const IoUHeadParams back = iou_head_params_from_json(Json::parse(iou_head_params_to_json(r.head).dump()));
  CHECK(back.params == r.head.params);
  CHECK(back.config == r.head.config);
}

TEST_CASE("iou_optimize edge cases") {
  const IoUHeadParams h = random_head(21);
  const IoUHead head(h.config);
  const SceneSample s = generate_scene(12, small_params());
  const OrientedBox3D box = (*s.labels)[0].box;

  IoUOptimizeConfig still;
  still.step = 0.0;
  const IoUOptimizeResult a = iou_optimize(box, s, head, h.params, 0, still);
  CHECK(a.box == box);
  REQUIRE(a.trace.size() == 11);
  for (double v : a.trace) CHECK(v == a.trace.front());

  IoUOptimizeConfig none;
  none.steps = 0;
  const IoUOptimizeResult b = iou_optimize(box, s, head, h.params, 0, none);
  CHECK(b.box == box);
  CHECK(b.trace.size() == 1);

  IoUOptimizeConfig big;
  big.step = 10.0;
  const IoUOptimizeResult c = iou_optimize(box, s, head, h.params, 2, big);
  CHECK(c.box.yaw() == box.yaw());
  for (int a2 = 0; a2 < 3; ++a2) CHECK(c.box.size()(a2) >= 1e-3);
}

TEST_CASE("default constants") {
  const IoUHeadConfig c;
  CHECK(c.grid_resolution == 4);
  CHECK(c.num_neighbors == 3);
  CHECK(JitterConfig{}.sigma_factor == 0.3);
  const IoUOptimizeConfig o;
  CHECK(o.steps == 10);
  CHECK(o.step >= 1e-4);
  CHECK(o.step <= 5e-4);
}
