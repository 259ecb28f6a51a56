#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ioumatch/pseudo_label.hpp"

using namespace ioumatch;

namespace {

Detection make_det(const OrientedBox3D& box, double s, Eigen::VectorXd p, double v,
                   Vec3 anchor = Vec3::Zero()) {
  Detection d;
  d.box = box;
  d.objectness = s;
  d.class_probs = std::move(p);
  d.pred_iou = v;
  d.anchor = anchor;
  return d;
}

Eigen::VectorXd onehot(int c, int L = 3, double mass = 0.95) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(L, (1.0 - mass) / (L - 1));
  p(c) = mass;
  return p;
}

OrientedBox3D unit_at(double x, double y = 0.0) {
  return OrientedBox3D(Vec3(x, y, 0.5), Vec3::Ones(), 0.0);
}

std::vector<Detection> random_dets(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> pos(-1.0, 1.0), u(0.0, 1.0), ang(-kPi, kPi);
  std::uniform_int_distribution<int> cls(0, 1);
  std::vector<Detection> dets;
  for (int i = 0; i < n; ++i) {
    const OrientedBox3D box(Vec3(pos(rng), pos(rng), 0.5), Vec3(1.0 + 0.5 * u(rng), 1.0, 1.0),
                            ang(rng));
    dets.push_back(make_det(box, 0.05 + 0.9 * u(rng), onehot(cls(rng), 2), 0.05 + 0.9 * u(rng)));
  }
  return dets;
}

// Reference clustering written straight from the rule: scan for the best
// remaining detection, sweep every remaining same-class detection into its
// cluster, repeat.
struct RefClusters {
  std::vector<std::vector<int>> clusters;
};

RefClusters brute_clusters(const std::vector<Detection>& d, bool use_obj, double thr) {
  const int n = static_cast<int>(d.size());
  auto score = [&](int i) { return use_obj ? d[i].objectness : d[i].objectness * d[i].pred_iou; };
  auto better = [&](int a, int b) { return score(a) > score(b) || (score(a) == score(b) && a < b); };
  std::vector<bool> used(n, false);
  RefClusters out;
  for (;;) {
    int seed = -1;
    for (int i = 0; i < n; ++i)
      if (!used[i] && (seed < 0 || better(i, seed))) seed = i;
    if (seed < 0) break;
    std::vector<int> c{seed};
    used[seed] = true;
    for (int i = 0; i < n; ++i)
      if (!used[i] && d[i].predicted_class() == d[seed].predicted_class() &&
          iou3d(d[i].box, d[seed].box) >= thr) {
        c.push_back(i);
        used[i] = true;
      }
    std::sort(c.begin() + 1, c.end(), better);
    out.clusters.push_back(c);
  }
  return out;
}

std::vector<int> brute_keep(const std::vector<Detection>& d, SuppressionMode mode, double thr) {
  const RefClusters rc = brute_clusters(d, mode == SuppressionMode::ObjNms, thr);
  std::vector<int> keep;
  for (const auto& c : rc.clusters) {
    const std::size_t k = mode == SuppressionMode::IouLhs ? (c.size() + 1) / 2 : 1;
    keep.insert(keep.end(), c.begin(), c.begin() + k);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace

TEST_CASE("filter examples") {
  const ThresholdConfig t;
  const Detection keep = make_det(unit_at(0), 0.95, onehot(0), 0.30);
  CHECK(filter_detections({keep}, t).size() == 1);
  Detection low_iou = keep;
  low_iou.pred_iou = 0.20;
  CHECK(filter_detections({low_iou}, t).empty());
  Detection low_obj = keep;
  low_obj.objectness = 0.9;  // strict
  CHECK(filter_detections({low_obj}, t).empty());
  CHECK(filter_detections({make_det(unit_at(0), 0.95, onehot(0, 3, 0.9), 0.3)}, t).empty());

  const ThresholdConfig k = ThresholdConfig::kitti_per_class();
  CHECK(filter_detections({make_det(unit_at(0), 0.95, onehot(0), 0.4)}, k).empty());
  CHECK(filter_detections({make_det(unit_at(0), 0.95, onehot(1), 0.4)}, k).size() == 1);
  CHECK(filter_detections({make_det(unit_at(0), 0.95, onehot(2), 0.4)}, k).size() == 1);
  CHECK(k.iou_threshold_for(0) == 0.5);
  CHECK(k.iou_threshold_for(1) == 0.25);
  CHECK(k.iou_threshold_for(2) == 0.25);
}

TEST_CASE("filter is monotone in the thresholds") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 10; ++i) {
      Eigen::VectorXd p(3);
      p << u(rng), u(rng), u(rng);
      p /= p.sum();
      dets.push_back(make_det(unit_at(i), u(rng), p, u(rng)));
    }
    ThresholdConfig lo{u(rng) * 0.5, u(rng) * 0.5, u(rng) * 0.5, {}};
    ThresholdConfig hi = lo;
    hi.tau_obj += 0.3 * u(rng);
    hi.tau_cls += 0.3 * u(rng);
    hi.tau_iou += 0.3 * u(rng);
    const auto a = filter_detections(dets, lo);
    const auto b = filter_detections(dets, hi);
    CHECK(b.size() <= a.size());
    for (const auto& x : b) {
      bool found = false;
      for (const auto& y : a) found |= x.box == y.box;
      CHECK(found);
    }
  }
}

TEST_CASE("suppression examples") {
  for (SuppressionMode m : {SuppressionMode::ObjNms, SuppressionMode::IouNms, SuppressionMode::IouLhs}) {
    const std::vector<Detection> apart = {make_det(unit_at(0), 0.9, onehot(0), 0.5),
                                          make_det(unit_at(3), 0.8, onehot(0), 0.5),
                                          make_det(unit_at(6), 0.7, onehot(1), 0.5)};
    CHECK(suppress_indices(apart, m) == std::vector<int>{0, 1, 2});
    CHECK(suppress_indices({apart[0]}, m) == std::vector<int>{0});
  }

  // Four overlapping same-class boxes; s * v ranks 2 > 0 > 3 > 1.
  const std::vector<Detection> four = {
      make_det(unit_at(0.00), 0.9, onehot(0), 0.6), make_det(unit_at(0.05), 0.95, onehot(0), 0.3),
      make_det(unit_at(0.10), 0.8, onehot(0), 0.9), make_det(unit_at(0.15), 0.7, onehot(0), 0.6)};
  CHECK(suppress_indices(four, SuppressionMode::IouNms) == std::vector<int>{2});
  CHECK(suppress_indices(four, SuppressionMode::ObjNms) == std::vector<int>{1});
  CHECK(suppress_indices(four, SuppressionMode::IouLhs) == std::vector<int>{0, 2});
  const auto cl = cluster_detections(four, SuppressionMode::IouLhs, 0.25);
  REQUIRE(cl.size() == 1);
  CHECK(cl[0] == std::vector<int>{2, 0, 3, 1});

  const std::vector<Detection> three(four.begin(), four.begin() + 3);
  CHECK(suppress_indices(three, SuppressionMode::IouLhs).size() == 2);
  CHECK(suppress_indices(three, SuppressionMode::IouLhs) ==
        brute_keep(three, SuppressionMode::IouLhs, 0.25));

  // Same boxes with different classes never cluster.
  std::vector<Detection> mixed = four;
  mixed[1].class_probs = onehot(1);
  mixed[3].class_probs = onehot(2);
  CHECK(suppress_indices(mixed, SuppressionMode::IouNms) == std::vector<int>{1, 2, 3});

  // Exact ties go to the lower index.
  const std::vector<Detection> tied = {make_det(unit_at(0), 0.8, onehot(0), 0.5),
                                       make_det(unit_at(0.1), 0.8, onehot(0), 0.5)};
  CHECK(suppress_indices(tied, SuppressionMode::IouNms) == std::vector<int>{0});
  CHECK(suppress(tied, SuppressionMode::IouNms).size() == 1);

  CHECK(suppression_mode_from_string("iou-lhs") == SuppressionMode::IouLhs);
  CHECK(to_string(SuppressionMode::ObjNms) == "obj-nms");
  CHECK_THROWS(suppression_mode_from_string("soft-nms"));
}

TEST_CASE("suppression agrees with a brute-force enumerator") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_real_distribution<double> thr(0.1, 0.6);
  for (int trial = 0; trial < 400; ++trial) {
    const auto dets = random_dets(rng, size(rng));
    const double t = thr(rng);
    for (SuppressionMode m : {SuppressionMode::ObjNms, SuppressionMode::IouNms, SuppressionMode::IouLhs})
      CHECK(suppress_indices(dets, m, t) == brute_keep(dets, m, t));

    const auto nms = suppress_indices(dets, SuppressionMode::IouNms, t);
    const auto lhs = suppress_indices(dets, SuppressionMode::IouLhs, t);
    CHECK(std::includes(lhs.begin(), lhs.end(), nms.begin(), nms.end()));
    std::size_t quota = 0;
    for (const auto& c : cluster_detections(dets, SuppressionMode::IouLhs, t)) quota += (c.size() + 1) / 2;
    CHECK(lhs.size() == quota);
    for (SuppressionMode m : {SuppressionMode::ObjNms, SuppressionMode::IouNms}) {
      const auto kept = suppress_indices(dets, m, t);
      for (std::size_t i = 0; i < kept.size(); ++i)
        for (std::size_t j = i + 1; j < kept.size(); ++j)
          if (dets[kept[i]].predicted_class() == dets[kept[j]].predicted_class())
            CHECK(iou3d(dets[kept[i]].box, dets[kept[j]].box) < t);
    }
  }
}

TEST_CASE("suppression is permutation invariant") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dets = random_dets(rng, 12);
    std::vector<int> perm(dets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Detection> shuffled;
    for (int i : perm) shuffled.push_back(dets[i]);
    for (SuppressionMode m : {SuppressionMode::ObjNms, SuppressionMode::IouNms, SuppressionMode::IouLhs}) {
      std::vector<int> a = suppress_indices(dets, m), b;
      for (int i : suppress_indices(shuffled, m)) b.push_back(perm[i]);
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
    std::vector<Detection> fa = filter_detections(dets, ThresholdConfig{0.3, 0.5, 0.3, {}});
    std::vector<Detection> fb = filter_detections(shuffled, ThresholdConfig{0.3, 0.5, 0.3, {}});
    CHECK(fa.size() == fb.size());
  }
}

TEST_CASE("finalize_pseudo_labels") {
  Eigen::VectorXd p(3);
  p << 0.1, 0.8, 0.1;
  const Detection d = make_det(OrientedBox3D(Vec3(1, 2, 0.5), Vec3(1, 2, 1), 0.3), 0.9, p, 0.5);
  const auto same = finalize_pseudo_labels({d}, Transform3D{});
  REQUIRE(same.size() == 1);
  CHECK(same[0].box == d.box);
  CHECK(same[0].class_id == 1);
  CHECK(same[0].score == doctest::Approx(0.45));

  const auto big = finalize_pseudo_labels({d}, Transform3D{false, false, 0.0, 2.0});
  CHECK(big[0].box.size().isApprox(Vec3(2, 4, 2)));
  CHECK(big[0].box.center().isApprox(Vec3(2, 4, 1)));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-kPi, kPi), sc(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 500; ++i) {
    const Transform3D t{coin(rng), coin(rng), ang(rng), sc(rng)};
    const auto pl = finalize_pseudo_labels({d}, t);
    const OrientedBox3D back = apply_transform(pl[0].box, t.inverse());
    CHECK((back.center() - d.box.center()).norm() < 1e-9);
    CHECK((back.size() - d.box.size()).norm() < 1e-9);
    CHECK(std::abs(std::remainder(back.yaw() - d.box.yaw(), 2 * kPi)) < 1e-9);
  }
}

TEST_CASE("associate_for_supervision") {
  const std::vector<PseudoLabel> pseudo = {{unit_at(0), 0, 0.5}, {unit_at(3), 1, 0.5}};
  std::vector<Detection> dets = {
      make_det(unit_at(9), 0.5, onehot(0), 0.5, Vec3(0.1, 0.1, 0.5)),   // inside box 0
      make_det(unit_at(9), 0.5, onehot(0), 0.5, Vec3(0.79, 0.0, 0.5)),  // 0.29 from box 0
      make_det(unit_at(9), 0.5, onehot(0), 0.5, Vec3(1.5, 0.0, 0.5)),   // 1.0 from both
      make_det(unit_at(9), 0.5, onehot(0), 0.5, Vec3(2.3, 0.0, 0.5)),   // 0.2 from box 1
  };
  const auto a = associate_for_supervision(dets, pseudo, 0.3);
  CHECK(a[0].supervised);
  CHECK(a[0].pseudo_index == 0);
  CHECK(a[0].distance == 0.0);
  CHECK(a[1].supervised);
  CHECK(a[1].distance == doctest::Approx(0.29));
  CHECK_FALSE(a[2].supervised);
  CHECK(a[2].pseudo_index == -1);
  CHECK(a[3].supervised);
  CHECK(a[3].pseudo_index == 1);

  for (const auto& x : associate_for_supervision(dets, {}, 0.3)) CHECK_FALSE(x.supervised);

  // Equidistant targets resolve to the lower index.
  const std::vector<PseudoLabel> twin = {{unit_at(0), 0, 0.5}, {unit_at(2), 0, 0.5}};
  const auto t = associate_for_supervision({make_det(unit_at(9), 0.5, onehot(0), 0.5, Vec3(1, 0, 0.5))}, twin, 0.6);
  CHECK(t[0].pseudo_index == 0);
}

TEST_CASE("JSON round trips") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.3, 0.5;
  const Detection d = make_det(OrientedBox3D(Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 3), 1.0 / 3.0), 0.7,
                               p, 0.123456789, Vec3(0.3, 0.2, 0.1));
  const Detection back = detection_from_json(Json::parse(detection_to_json(d).dump()), "d");
  CHECK(back.box == d.box);
  CHECK(back.class_probs == d.class_probs);
  CHECK(back.pred_iou == d.pred_iou);
  CHECK(back.anchor == d.anchor);

  const PseudoLabel pl{d.box, 2, 0.3};
  CHECK(pseudo_label_from_json(pseudo_label_to_json(pl), "p") == pl);

  const ThresholdConfig k = ThresholdConfig::kitti_per_class();
  CHECK(thresholds_from_json(thresholds_to_json(k), "t") == k);

  Json bad = detection_to_json(d);
  bad["objectness"] = 1.5;
  CHECK_THROWS(detection_from_json(bad, "d"));
}

TEST_CASE("default thresholds") {
  const ThresholdConfig t;
  CHECK(t.tau_obj == 0.9);
  CHECK(t.tau_cls == 0.9);
  CHECK(t.tau_iou == 0.25);
  CHECK(kDefaultSuppressionIoU == 0.25);
}
