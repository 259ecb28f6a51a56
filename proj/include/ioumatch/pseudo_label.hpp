#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ioumatch/geometry.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

/// One proposal: box, objectness s, class distribution p, estimated IoU v,
/// and the anchor point that produced it.
struct Detection {
  OrientedBox3D box;
  double objectness = 0.0;
  Eigen::VectorXd class_probs;
  double pred_iou = 0.0;
  Vec3 anchor = Vec3::Zero();

  /// argmax of class_probs, lowest index on ties.
  int predicted_class() const;
  double max_class_prob() const;
  /// s * v, the IoU-guided ranking score.
  double iou_score() const { return objectness * pred_iou; }
  /// Throws std::invalid_argument if p is not a distribution (1e-6) or s, v
  /// fall outside [0, 1].
  void validate() const;
};

struct ThresholdConfig {
  double tau_obj = 0.9;
  double tau_cls = 0.9;
  double tau_iou = 0.25;
  /// When non-empty, replaces tau_iou with one threshold per class.
  std::vector<double> per_class_iou;

  double iou_threshold_for(int class_id) const;
  void validate() const;

  /// car / pedestrian / cyclist thresholds 0.5 / 0.25 / 0.25.
  static ThresholdConfig kitti_per_class();

  bool operator==(const ThresholdConfig&) const = default;
};

struct PseudoLabel {
  OrientedBox3D box;  // student frame
  int class_id = 0;
  double score = 0.0;  // s * v

  bool operator==(const PseudoLabel&) const = default;
};

enum class SuppressionMode { ObjNms, IouNms, IouLhs };

std::string to_string(SuppressionMode mode);
/// Accepts "obj-nms", "iou-nms", "iou-lhs".
SuppressionMode suppression_mode_from_string(const std::string& name);

inline constexpr double kDefaultSuppressionIoU = 0.25;

/// Keeps detections with s > tau_obj, max(p) > tau_cls and
/// v > tau_iou(argmax class).
std::vector<Detection> filter_detections(const std::vector<Detection>& dets,
                                         const ThresholdConfig& thresholds);

/// Greedy class-aware clustering: the best-ranked unclustered detection
/// seeds a cluster holding every unclustered same-class detection with
/// IoU >= iou_thresh against it. Ranking uses s for ObjNms and s * v
/// otherwise, ties to the lower index. Each cluster lists its members in rank
/// order, seed first.
std::vector<std::vector<int>> cluster_detections(const std::vector<Detection>& dets,
                                                 SuppressionMode mode, double iou_thresh);

/// Indices of the detections that survive, ascending. NMS modes keep each
/// cluster seed; LHS keeps the top ceil(n/2) of every cluster.
std::vector<int> suppress_indices(const std::vector<Detection>& dets, SuppressionMode mode,
                                  double iou_thresh = kDefaultSuppressionIoU);

std::vector<Detection> suppress(const std::vector<Detection>& dets, SuppressionMode mode,
                                double iou_thresh = kDefaultSuppressionIoU);

/// Moves boxes into the student frame and hardens the class distribution.
std::vector<PseudoLabel> finalize_pseudo_labels(const std::vector<Detection>& kept,
                                                const Transform3D& t);

struct Association {
  bool supervised = false;
  int pseudo_index = -1;
  double distance = 0.0;
};

/// A detection is supervised when its anchor lies within radius of some
/// pseudo box; the target is the nearest such box (lower index on ties).
std::vector<Association> associate_for_supervision(const std::vector<Detection>& dets,
                                                   const std::vector<PseudoLabel>& pseudo,
                                                   double radius = 0.3);

Json detection_to_json(const Detection& det);
Detection detection_from_json(const Json& doc, const std::string& path);
Json pseudo_label_to_json(const PseudoLabel& label);
PseudoLabel pseudo_label_from_json(const Json& doc, const std::string& path);
Json thresholds_to_json(const ThresholdConfig& t);
ThresholdConfig thresholds_from_json(const Json& doc, const std::string& path);

}  // namespace ioumatch
