#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ioumatch/geometry.hpp"
#include "ioumatch/pseudo_label.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

struct ScoredBox {
  OrientedBox3D box;
  int class_id = 0;
  double score = 0.0;
};

/// Predictions and ground truth of one scene.
struct EvalScene {
  std::string scene_id;
  std::vector<ScoredBox> predictions;
  std::vector<LabeledBox> ground_truth;
};

enum class ScoreKind { Objectness, ObjectnessTimesIoU };
std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& name);

/// Turns detections into scored boxes labeled with their argmax class,
/// optionally running class-aware suppression first.
std::vector<ScoredBox> to_scored_boxes(const std::vector<Detection>& dets, ScoreKind score,
                                       std::optional<SuppressionMode> suppression = std::nullopt,
                                       double suppression_iou = kDefaultSuppressionIoU);

struct PredictionMatch {
  bool true_positive = false;
  int matched_gt = -1;
};

/// Per scene, per prediction. Within each class, predictions are visited by
/// descending score (ties: scene id, then prediction index) and each takes the
/// unmatched same-class ground truth of its scene with the highest IoU at or
/// above iou_thresh.
std::vector<std::vector<PredictionMatch>> match_detections(const std::vector<EvalScene>& scenes,
                                                           double iou_thresh);

struct ApMode {
  enum class Kind { AllPoint, RecallPoints };
  Kind kind = Kind::AllPoint;
  int recall_points = 40;

  static ApMode all_point() { return {Kind::AllPoint, 0}; }
  static ApMode r_points(int r) { return {Kind::RecallPoints, r}; }
  std::string name() const;  // "all-point" or "r<R>"
  static ApMode from_string(const std::string& name);

  bool operator==(const ApMode&) const = default;
};

/// AP from true-positive flags in descending-score order. All-point mode
/// integrates the precision envelope; r-point mode averages the envelope at
/// recall 1/R, 2/R, ..., 1. Returns 0 when n_gt is 0.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt, ApMode mode);

/// (recall, precision) after each ranked prediction.
std::vector<std::pair<double, double>> pr_curve(const std::vector<bool>& ranked_tp,
                                                std::size_t n_gt);

struct EvalReport {
  double iou_threshold = 0.25;
  ApMode mode;
  std::map<int, double> per_class_ap;      // classes with >= 1 gt
  std::map<int, std::size_t> gt_count;
  double mean_ap = 0.0;
  std::optional<double> coverage;
  /// Ranked TP flags per class, kept for PR-curve export.
  std::map<int, std::vector<bool>> ranked_tp;
};

/// One report per threshold. mAP averages only the classes present in the
/// ground truth; with no ground truth at all it is 0.
std::vector<EvalReport> map_at(const std::vector<EvalScene>& scenes,
                               const std::vector<double>& thresholds, ApMode mode);

/// Class-agnostic recall: fraction of ground-truth boxes (pooled over scenes)
/// overlapped by at least one pseudo label with IoU >= iou_thresh. 0 when
/// there is no ground truth.
double coverage(const std::vector<std::vector<PseudoLabel>>& pseudo,
                const std::vector<std::vector<LabeledBox>>& ground_truth, double iou_thresh);

Json eval_report_to_json(const EvalReport& report);
/// Writes "class,recall,precision" rows for every class of the report.
void write_pr_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace ioumatch
