#include "ioumatch/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace ioumatch {

int Detection::predicted_class() const {
  if (class_probs.size() == 0) throw std::invalid_argument("detection has no class distribution");
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < class_probs.size(); ++c)
    if (class_probs(c) > class_probs(best)) best = c;
  return static_cast<int>(best);
}

double Detection::max_class_prob() const { return class_probs(predicted_class()); }

void Detection::validate() const {
  if (class_probs.size() == 0) throw std::invalid_argument("detection has no class distribution");
  if ((class_probs.array() < 0.0).any() || std::abs(class_probs.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("class_probs must be a probability distribution");
  if (!(objectness >= 0.0 && objectness <= 1.0) || !(pred_iou >= 0.0 && pred_iou <= 1.0))
    throw std::invalid_argument("objectness and pred_iou must lie in [0, 1]");
}

double ThresholdConfig::iou_threshold_for(int class_id) const {
  if (per_class_iou.empty()) return tau_iou;
  if (class_id < 0 || class_id >= static_cast<int>(per_class_iou.size()))
    throw std::out_of_range("no IoU threshold for class " + std::to_string(class_id));
  return per_class_iou[class_id];
}

void ThresholdConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  bool ok = in_unit(tau_obj) && in_unit(tau_cls) && in_unit(tau_iou);
  for (double t : per_class_iou) ok = ok && in_unit(t);
  if (!ok) throw std::invalid_argument("thresholds must lie in [0, 1]");
}

ThresholdConfig ThresholdConfig::kitti_per_class() {
  ThresholdConfig t;
  t.per_class_iou = {0.5, 0.25, 0.25};
  return t;
}

std::string to_string(SuppressionMode mode) {
  switch (mode) {
    case SuppressionMode::ObjNms: return "obj-nms";
    case SuppressionMode::IouNms: return "iou-nms";
    case SuppressionMode::IouLhs: return "iou-lhs";
  }
  return "unknown";
}

SuppressionMode suppression_mode_from_string(const std::string& name) {
  if (name == "obj-nms") return SuppressionMode::ObjNms;
  if (name == "iou-nms") return SuppressionMode::IouNms;
  if (name == "iou-lhs") return SuppressionMode::IouLhs;
  throw std::invalid_argument("unknown suppression mode '" + name +
                              "' (expected obj-nms, iou-nms or iou-lhs)");
}

std::vector<Detection> filter_detections(const std::vector<Detection>& dets,
                                         const ThresholdConfig& thresholds) {
  std::vector<Detection> out;
  for (const Detection& d : dets) {
    const int cls = d.predicted_class();
    if (d.objectness > thresholds.tau_obj && d.class_probs(cls) > thresholds.tau_cls &&
        d.pred_iou > thresholds.iou_threshold_for(cls))
      out.push_back(d);
  }
  return out;
}

std::vector<std::vector<int>> cluster_detections(const std::vector<Detection>& dets,
                                                 SuppressionMode mode, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0))
    throw std::invalid_argument("suppression IoU threshold must lie in (0, 1)");
  const int n = static_cast<int>(dets.size());
  std::vector<double> score(n);
  std::vector<int> cls(n);
  for (int i = 0; i < n; ++i) {
    score[i] = mode == SuppressionMode::ObjNms ? dets[i].objectness : dets[i].iou_score();
    cls[i] = dets[i].predicted_class();
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });

  std::vector<bool> taken(n, false);
  std::vector<std::vector<int>> clusters;
  for (int r = 0; r < n; ++r) {
    const int seed = order[r];
    if (taken[seed]) continue;
    taken[seed] = true;
    std::vector<int> members{seed};
    for (int q = r + 1; q < n; ++q) {
      const int j = order[q];
      if (taken[j] || cls[j] != cls[seed]) continue;
      if (iou3d(dets[seed].box, dets[j].box) >= iou_thresh) {
        taken[j] = true;
        members.push_back(j);
      }
    }
    clusters.push_back(std::move(members));
  }
  return clusters;
}

std::vector<int> suppress_indices(const std::vector<Detection>& dets, SuppressionMode mode,
                                  double iou_thresh) {
  std::vector<int> kept;
  for (const auto& cluster : cluster_detections(dets, mode, iou_thresh)) {
    const std::size_t keep =
        mode == SuppressionMode::IouLhs ? (cluster.size() + 1) / 2 : 1;
    kept.insert(kept.end(), cluster.begin(), cluster.begin() + static_cast<long>(keep));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<Detection> suppress(const std::vector<Detection>& dets, SuppressionMode mode,
                                double iou_thresh) {
  std::vector<Detection> out;
  for (int i : suppress_indices(dets, mode, iou_thresh)) out.push_back(dets[i]);
  return out;
}

std::vector<PseudoLabel> finalize_pseudo_labels(const std::vector<Detection>& kept,
                                                const Transform3D& t) {
  std::vector<PseudoLabel> out;
  out.reserve(kept.size());
  for (const Detection& d : kept)
    out.push_back({apply_transform(d.box, t), d.predicted_class(), d.iou_score()});
  return out;
}

std::vector<Association> associate_for_supervision(const std::vector<Detection>& dets,
                                                   const std::vector<PseudoLabel>& pseudo,
                                                   double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("association radius must be positive");
  std::vector<Association> out(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (std::size_t j = 0; j < pseudo.size(); ++j) {
      const double d = point_box_distance(dets[i].anchor, pseudo[j].box);
      if (d < best) {
        best = d;
        best_idx = static_cast<int>(j);
      }
    }
    if (best_idx >= 0 && best <= radius) out[i] = {true, best_idx, best};
  }
  return out;
}

Json detection_to_json(const Detection& det) {
  Json j = box_to_json(det.box);
  j["objectness"] = det.objectness;
  j["class_probs"] = std::vector<double>(det.class_probs.data(),
                                         det.class_probs.data() + det.class_probs.size());
  j["pred_iou"] = det.pred_iou;
  j["anchor"] = detail::vec3_to_json(det.anchor);
  return j;
}

Detection detection_from_json(const Json& doc, const std::string& path) {
  Detection d;
  d.box = box_from_json(doc, path);
  d.objectness = detail::number_at(detail::require(doc, "objectness", path), path + ".objectness");
  const auto probs = detail::numbers_at(detail::require(doc, "class_probs", path), path + ".class_probs");
  d.class_probs = Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(probs.size()));
  d.pred_iou = detail::number_at(detail::require(doc, "pred_iou", path), path + ".pred_iou");
  if (auto it = doc.find("anchor"); it != doc.end()) d.anchor = detail::vec3_at(*it, path + ".anchor");
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return d;
}

Json pseudo_label_to_json(const PseudoLabel& label) {
  Json j = box_to_json(label.box);
  j["class"] = label.class_id;
  j["score"] = label.score;
  return j;
}

PseudoLabel pseudo_label_from_json(const Json& doc, const std::string& path) {
  PseudoLabel p{box_from_json(doc, path), 0, 0.0};
  const Json& cls = detail::require(doc, "class", path);
  if (!cls.is_number_integer()) throw ParseError(path + ".class: expected an integer");
  p.class_id = cls.get<int>();
  p.score = detail::number_at(detail::require(doc, "score", path), path + ".score");
  return p;
}

Json thresholds_to_json(const ThresholdConfig& t) {
  Json j{{"tau_obj", t.tau_obj}, {"tau_cls", t.tau_cls}, {"tau_iou", t.tau_iou}};
  if (!t.per_class_iou.empty()) j["per_class_iou"] = t.per_class_iou;
  return j;
}

ThresholdConfig thresholds_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  ThresholdConfig t;
  detail::read_optional(doc, "tau_obj", path, t.tau_obj);
  detail::read_optional(doc, "tau_cls", path, t.tau_cls);
  detail::read_optional(doc, "tau_iou", path, t.tau_iou);
  if (auto it = doc.find("per_class_iou"); it != doc.end())
    t.per_class_iou = detail::numbers_at(*it, path + ".per_class_iou");
  return t;
}

}  // namespace ioumatch
