#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ioumatch/detector.hpp"
#include "ioumatch/eval.hpp"
#include "ioumatch/nn.hpp"
#include "ioumatch/pseudo_label.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

struct AugmentConfig {
  int subsample_points = 320;  // <= 0 keeps every point
  bool flip_x = true;
  bool flip_y = false;
  double flip_prob = 0.5;
  double rotation_range = kPi / 6.0;  // yaw drawn from [-range, range]
  double scale_lo = 0.85;
  double scale_hi = 1.15;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

enum class AugStrength { Weak, Strong };

struct AugmentedScene {
  SceneSample scene;
  Transform3D transform;      // original frame -> augmented frame
  std::vector<int> kept;      // original indices of the kept points, ascending
};

/// Weak: random sub-sampling only, identity transform. Strong: sub-sampling
/// followed by random flips, yaw rotation and uniform scaling, applied to
/// points, feature channels and labels alike.
AugmentedScene augment(const SceneSample& scene, AugStrength strength, const AugmentConfig& cfg,
                       Rng& rng);

struct LossWeights {
  double center = 1.0;
  double size = 1.0;
  double heading = 1.0;
  double cls = 1.0;
  double objectness = 1.0;
  double iou = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossConfig {
  double positive_radius = 0.3;  // anchor-to-box distance for positives
  double negative_radius = 0.6;  // anchors farther than this are negatives
  double smooth_l1_beta = 0.1;
  LossWeights weights;
  /// IoU-head samples per ground-truth box: the box itself plus jitters.
  JitterConfig iou_jitter{0.3, 2};

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Unweighted per-term means; total applies the weights.
struct LossBreakdown {
  double center = 0.0;
  double size = 0.0;
  double heading = 0.0;
  double cls = 0.0;
  double objectness = 0.0;
  double iou = 0.0;
  double total = 0.0;
  int positives = 0;
  int negatives = 0;
};

struct AnchorAssignment {
  std::vector<int> target;     // gt index or -1
  std::vector<bool> negative;
};

/// Positive when the anchor lies within positive_radius of a box (target: the
/// nearest box, lower index on ties); negative beyond negative_radius of
/// every box.
AnchorAssignment assign_anchors(const std::vector<Vec3>& anchors,
                                const std::vector<LabeledBox>& gts, double positive_radius,
                                double negative_radius);

double smooth_l1(double x, double beta);

/// Supervised detector + IoU-head loss on one labeled scene. When grad is
/// given, scale * d(total)/d(params) is added to it. The IoU term regresses
/// the head on ground-truth boxes and their jitters (drawn from iou_seed)
/// against their true best IoU. Throws std::invalid_argument without labels.
LossBreakdown supervised_loss(const Detector& detector, const ParamVector& params,
                              const SceneSample& scene, const Detector::Output& out,
                              const LossConfig& cfg, std::uint64_t iou_seed, double scale,
                              ParamVector* grad);

/// Pseudo-label loss on one unlabeled scene: box and class terms for the
/// associated detections only, no objectness and no IoU term.
LossBreakdown unsupervised_loss(const Detector& detector, const ParamVector& params,
                                const Detector::Output& out,
                                const std::vector<PseudoLabel>& pseudo,
                                const std::vector<Association>& association,
                                const LossConfig& cfg, double scale, ParamVector* grad);

/// teacher <- alpha * teacher + (1 - alpha) * student, element-wise.
/// Throws std::invalid_argument on a layout mismatch or alpha outside [0, 1].
void ema_update(ParamVector& teacher, const ParamVector& student, double alpha);

struct LrSchedule {
  double base = 1e-3;
  int decay_every = 0;  // epochs; 0 keeps the rate constant
  double gamma = 0.1;

  double at(int epoch) const;
  bool operator==(const LrSchedule&) const = default;
};

struct PretrainConfig {
  int epochs = 60;
  int batch_size = 4;
  LrSchedule lr;
  bool augment = true;
  AugmentConfig augmentation;
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  ParamVector params;
  Adam optimizer;
  std::vector<double> loss_history;  // mean total loss per epoch
};

/// Supervised training on labeled scenes. Starts from `initial` when given,
/// otherwise from fresh parameters seeded by cfg.seed. on_epoch sees the
/// parameters after every epoch (1-based).
PretrainResult pretrain(const Detector& detector, const std::vector<SceneSample>& labeled,
                        const PretrainConfig& cfg, const ParamVector* initial = nullptr,
                        const std::function<void(int, const ParamVector&)>& on_epoch = {});

/// Test-time pipeline used for evaluation.
struct EvalProtocol {
  SuppressionMode suppression = SuppressionMode::IouNms;
  double suppression_iou = kDefaultSuppressionIoU;
  ScoreKind score = ScoreKind::Objectness;
  ApMode ap = ApMode::all_point();

  bool operator==(const EvalProtocol&) const = default;
};

struct SSLConfig {
  double lambda_u = 2.0;
  int n_labeled = 4;
  int n_unlabeled = 8;
  double ema_decay = 0.999;
  ThresholdConfig thresholds;
  SuppressionMode suppression = SuppressionMode::IouLhs;
  double suppression_iou = kDefaultSuppressionIoU;
  AugmentConfig augmentation;
  int epochs = 10;
  LrSchedule lr;
  LossConfig loss;
  double association_radius = 0.3;
  int eval_interval = 1;
  EvalProtocol eval;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SSLConfig&) const = default;
};

/// filter -> suppress -> move into the student frame.
std::vector<PseudoLabel> make_pseudo_labels(const std::vector<Detection>& teacher_dets,
                                            const ThresholdConfig& thresholds,
                                            SuppressionMode mode, double suppression_iou,
                                            const Transform3D& to_student);

struct EpochMetrics {
  int epoch = 0;
  double map25 = 0.0;
  double map50 = 0.0;
  double coverage25 = 0.0;
  double coverage50 = 0.0;
  std::size_t pseudo_count = 0;
  double mean_pseudo_iou = 0.0;  // true IoU of pseudo labels vs hidden gt
  double mean_raw_iou = 0.0;     // same for the unfiltered teacher detections
};

struct PseudoStats {
  double coverage25 = 0.0;
  double coverage50 = 0.0;
  std::size_t pseudo_count = 0;
  double mean_pseudo_iou = 0.0;
  double mean_raw_iou = 0.0;
};

/// Teacher pseudo labels on the full unlabeled scenes, scored against the
/// hidden ground truth.
PseudoStats pseudo_label_stats(const Detector& detector, const ParamVector& teacher,
                               const std::vector<SceneSample>& scenes,
                               const std::vector<std::vector<LabeledBox>>& hidden,
                               const SSLConfig& cfg);

/// Detector predictions after the test-time pipeline.
std::vector<ScoredBox> predict_scene(const Detector& detector, const ParamVector& params,
                                     const SceneSample& scene, const EvalProtocol& protocol);

/// mAP reports of the detector over labeled scenes, one per threshold.
std::vector<EvalReport> evaluate_detector(const Detector& detector, const ParamVector& params,
                                          const std::vector<SceneSample>& scenes,
                                          const EvalProtocol& protocol,
                                          const std::vector<double>& thresholds);

struct SSLResult {
  ParamVector student;
  ParamVector teacher;
  Adam optimizer;
  std::vector<EpochMetrics> metrics;  // epoch 0 is the starting point
  std::vector<double> unsup_loss_history;  // unweighted unsupervised loss per step
  int epochs_run = 0;
};

/// Mean-teacher training from pretrained parameters. Metrics are recorded
/// before the first epoch and after every eval_interval epochs (and the last).
SSLResult ssl_train(const Detector& detector, const DatasetSplit& split,
                    const ParamVector& pretrained, const std::vector<SceneSample>& heldout,
                    const SSLConfig& cfg,
                    const std::function<void(const EpochMetrics&)>& on_metrics = {});

/// One CSV row per metrics record; header included.
std::string metrics_csv(const std::vector<EpochMetrics>& metrics);
inline constexpr const char* kMetricsHeader =
    "epoch,map25,map50,coverage25,coverage50,pseudo_count,mean_pseudo_iou";

struct GradCheckResult {
  double relative_error = 0.0;  // ||g - g_fd|| / (||g|| + ||g_fd||)
  double max_abs_error = 0.0;
  std::size_t n_params = 0;
};

/// Central finite differences of supervised_loss(labeled) +
/// lambda_u * unsupervised_loss(unlabeled, pseudo) over every parameter.
GradCheckResult check_total_loss_gradient(const Detector& detector, const ParamVector& params,
                                          const SceneSample& labeled,
                                          const SceneSample& unlabeled,
                                          const std::vector<PseudoLabel>& pseudo,
                                          const LossConfig& cfg, double lambda_u,
                                          double association_radius, double eps = 1e-6);

Json augment_config_to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const Json& doc, const std::string& path);
Json loss_config_to_json(const LossConfig& c);
LossConfig loss_config_from_json(const Json& doc, const std::string& path);
Json pretrain_config_to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const Json& doc, const std::string& path);
Json ssl_config_to_json(const SSLConfig& c);
SSLConfig ssl_config_from_json(const Json& doc, const std::string& path);

}  // namespace ioumatch
