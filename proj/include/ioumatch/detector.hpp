#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "ioumatch/iou_head.hpp"
#include "ioumatch/nn.hpp"
#include "ioumatch/pseudo_label.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

struct DetectorConfig {
  int num_anchors = 32;    // K
  int num_neighbors = 16;  // R, points pooled per anchor
  int hidden = 64;
  int num_classes = 3;
  int feature_dim = 16;
  IoUHeadConfig iou;

  /// Raw head width: center offset (3), size (3), heading (2), objectness (1),
  /// class logits (L).
  int raw_dim() const { return 9 + num_classes; }
  void validate() const;

  bool operator==(const DetectorConfig&) const = default;
};

Json detector_config_to_json(const DetectorConfig& config);
DetectorConfig detector_config_from_json(const Json& doc, const std::string& path);

/// Indices of k farthest-point samples, starting from point 0; ties go to
/// the lower index.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int k);

/// Indices of the r points nearest to q, nearest first (ties: lower index).
std::vector<int> nearest_points(const std::vector<Vec3>& points, const Vec3& q, int r);

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Offsets into the raw head output of one anchor.
namespace raw_layout {
inline constexpr int kCenter = 0;
inline constexpr int kSize = 3;
inline constexpr int kHeading = 6;
inline constexpr int kObjectness = 8;
inline constexpr int kClass = 9;
}  // namespace raw_layout

inline constexpr double kMinPredictedSize = 1e-3;

/// Box, objectness and class distribution decoded from one raw output.
/// pred_iou is left at 0.
Detection decode_detection(const Vec3& anchor, const Eigen::VectorXd& raw, int num_classes);

/// Anchor-based proposal network standing in for a full point-cloud
/// detector, paired with an IoU head that scores its boxes. Both networks
/// share one ParamVector ("det.*" and "iou.*").
class Detector {
 public:
  explicit Detector(const DetectorConfig& config);

  const DetectorConfig& config() const { return config_; }
  const IoUHead& iou_head() const { return iou_; }
  const SetEncoder& network() const { return net_; }

  void register_params(ParamVector& params) const;
  void init_params(ParamVector& params, Rng& rng) const;
  ParamVector make_params(std::uint64_t seed) const;

  struct AnchorState {
    Vec3 anchor = Vec3::Zero();
    Eigen::VectorXd raw;
    SetEncoder::Cache cache;
  };
  struct Output {
    std::vector<AnchorState> anchors;
    std::vector<Detection> detections;
  };

  /// K detections, one per anchor. With score_iou the IoU head fills
  /// pred_iou for the argmax class. Throws std::invalid_argument when the
  /// scene has fewer than max(K, R) points or a mismatched feature width.
  Output forward(const SceneSample& scene, const ParamVector& params, bool score_iou = true) const;

  /// Backpropagates per-anchor raw-output gradients (zero-size entries are
  /// skipped) into grad.
  void backward(const ParamVector& params, const Output& out,
                const std::vector<Eigen::VectorXd>& d_raw, ParamVector& grad) const;

 private:
  DetectorConfig config_;
  SetEncoder net_;
  IoUHead iou_;
};

std::vector<Detection> detector_forward(const Detector& detector, const SceneSample& scene,
                                        const ParamVector& params);

}  // namespace ioumatch
