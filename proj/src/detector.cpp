#include "ioumatch/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace ioumatch {

void DetectorConfig::validate() const {
  if (num_anchors < 1 || num_neighbors < 1 || hidden < 1 || num_classes < 1 || feature_dim < 1)
    throw std::invalid_argument("detector dimensions must be positive");
  if (iou.num_classes != num_classes || iou.feature_dim != feature_dim)
    throw std::invalid_argument("IoU head classes/features must match the detector");
}

Json detector_config_to_json(const DetectorConfig& c) {
  return Json{{"num_anchors", c.num_anchors}, {"num_neighbors", c.num_neighbors},
              {"hidden", c.hidden},           {"num_classes", c.num_classes},
              {"feature_dim", c.feature_dim}, {"iou", iou_head_config_to_json(c.iou)}};
}

DetectorConfig detector_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  DetectorConfig c;
  detail::read_optional(doc, "num_anchors", path, c.num_anchors);
  detail::read_optional(doc, "num_neighbors", path, c.num_neighbors);
  detail::read_optional(doc, "hidden", path, c.hidden);
  detail::read_optional(doc, "num_classes", path, c.num_classes);
  detail::read_optional(doc, "feature_dim", path, c.feature_dim);
  c.iou.num_classes = c.num_classes;
  c.iou.feature_dim = c.feature_dim;
  if (auto it = doc.find("iou"); it != doc.end()) c.iou = iou_head_config_from_json(*it, path + ".iou");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return c;
}

std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > points.size())
    throw std::invalid_argument("cannot sample " + std::to_string(k) + " of " +
                                std::to_string(points.size()) + " points");
  std::vector<int> picked;
  if (k == 0) return picked;
  picked.reserve(k);
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  int current = 0;
  for (int i = 0; i < k; ++i) {
    picked.push_back(current);
    int next = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < points.size(); ++j) {
      dist[j] = std::min(dist[j], (points[j] - points[current]).squaredNorm());
      if (dist[j] > best) {
        best = dist[j];
        next = static_cast<int>(j);
      }
    }
    current = next;
  }
  return picked;
}

std::vector<int> nearest_points(const std::vector<Vec3>& points, const Vec3& q, int r) {
  if (r < 0 || static_cast<std::size_t>(r) > points.size())
    throw std::invalid_argument("not enough points for the neighborhood");
  std::vector<std::pair<double, int>> d(points.size());
  for (std::size_t j = 0; j < points.size(); ++j)
    d[j] = {(points[j] - q).squaredNorm(), static_cast<int>(j)};
  std::partial_sort(d.begin(), d.begin() + r, d.end());
  std::vector<int> out(r);
  for (int i = 0; i < r; ++i) out[i] = d[i].second;
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Detection decode_detection(const Vec3& anchor, const Eigen::VectorXd& raw, int num_classes) {
  using namespace raw_layout;
  Detection d;
  const Vec3 center = anchor + raw.segment<3>(kCenter);
  Vec3 size;
  for (int a = 0; a < 3; ++a) size(a) = softplus(raw(kSize + a)) + kMinPredictedSize;
  const double yaw = std::atan2(raw(kHeading + 1), raw(kHeading));
  d.box = OrientedBox3D(center, size, yaw);
  d.objectness = sigmoid(raw(kObjectness));
  d.class_probs = softmax(raw.segment(kClass, num_classes));
  d.anchor = anchor;
  return d;
}

Detector::Detector(const DetectorConfig& config)
    : config_(config),
      net_("det", {config.feature_dim + 3, config.hidden, config.hidden},
           {config.hidden, config.hidden, config.raw_dim()}),
      iou_(config.iou, "iou") {
  config_.validate();
}

void Detector::register_params(ParamVector& params) const {
  net_.register_params(params);
  iou_.register_params(params);
}

void Detector::init_params(ParamVector& params, Rng& rng) const {
  net_.init_params(params, rng, 0.1);
  iou_.init_params(params, rng);
}

ParamVector Detector::make_params(std::uint64_t seed) const {
  ParamVector p;
  register_params(p);
  Rng rng(derive_seed(seed, "detector-init"));
  init_params(p, rng);
  return p;
}

Detector::Output Detector::forward(const SceneSample& scene, const ParamVector& params,
                                   bool score_iou) const {
  const int F = config_.feature_dim;
  if (scene.feature_dim() != F)
    throw std::invalid_argument("scene feature width " + std::to_string(scene.feature_dim()) +
                                " does not match the detector (" + std::to_string(F) + ")");
  const std::size_t need =
      static_cast<std::size_t>(std::max(config_.num_anchors, config_.num_neighbors));
  if (scene.size() < need)
    throw std::invalid_argument("scene has " + std::to_string(scene.size()) +
                                " points, the detector needs at least " + std::to_string(need));

  Output out;
  const std::vector<int> anchors = farthest_point_sample(scene.points, config_.num_anchors);
  out.anchors.resize(anchors.size());
  out.detections.reserve(anchors.size());
  RowMatrix elements(config_.num_neighbors, F + 3);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    AnchorState& st = out.anchors[i];
    st.anchor = scene.points[anchors[i]];
    const std::vector<int> nbrs = nearest_points(scene.points, st.anchor, config_.num_neighbors);
    for (int r = 0; r < config_.num_neighbors; ++r) {
      elements.row(r).head(F) = scene.features.row(nbrs[r]);
      elements.row(r).tail<3>() = (scene.points[nbrs[r]] - st.anchor).transpose();
    }
    st.raw = net_.forward(params, elements, &st.cache);
    Detection det = decode_detection(st.anchor, st.raw, config_.num_classes);
    if (score_iou) det.pred_iou = iou_.estimate(det.box, scene, params, det.predicted_class());
    out.detections.push_back(std::move(det));
  }
  return out;
}

void Detector::backward(const ParamVector& params, const Output& out,
                        const std::vector<Eigen::VectorXd>& d_raw, ParamVector& grad) const {
  if (d_raw.size() != out.anchors.size())
    throw std::invalid_argument("one raw gradient per anchor expected");
  for (std::size_t i = 0; i < d_raw.size(); ++i) {
    if (d_raw[i].size() == 0) continue;
    net_.backward(params, out.anchors[i].cache, d_raw[i], grad);
  }
}

std::vector<Detection> detector_forward(const Detector& detector, const SceneSample& scene,
                                        const ParamVector& params) {
  return detector.forward(scene, params, true).detections;
}

}  // namespace ioumatch
