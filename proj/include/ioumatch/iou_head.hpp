#pragma once

#include <vector>

#include "ioumatch/geometry.hpp"
#include "ioumatch/grid_pool.hpp"
#include "ioumatch/nn.hpp"
#include "ioumatch/rng.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

struct IoUHeadConfig {
  int feature_dim = 16;
  int hidden = 32;
  int num_classes = 3;
  int grid_resolution = 4;  // D
  int num_neighbors = 3;    // k

  bool operator==(const IoUHeadConfig&) const = default;
};

/// Class-aware IoU regressor over grid-pooled features:
/// per-point MLP [F+3, H, H, H] -> max pool -> MLP [H, H, H, L] -> sigmoid.
/// Parameters live under "<prefix>.point.*" and "<prefix>.head.*" in a
/// ParamVector that may also hold other networks.
class IoUHead {
 public:
  explicit IoUHead(const IoUHeadConfig& config, const std::string& prefix = "iou");

  const IoUHeadConfig& config() const { return config_; }
  const SetEncoder& network() const { return net_; }

  void register_params(ParamVector& params) const;
  void init_params(ParamVector& params, Rng& rng) const;

  /// Sigmoid outputs, one per class. Throws std::invalid_argument when the
  /// pooled rows do not have F + 3 columns.
  Eigen::VectorXd forward(const GridPoolResult& pool, const ParamVector& params,
                          SetEncoder::Cache* cache = nullptr) const;

  /// Pools the box and returns the estimate for class_id.
  double estimate(const OrientedBox3D& box, const SceneSample& seeds, const ParamVector& params,
                  int class_id) const;

  struct BoxGradient {
    double value = 0.0;
    Vec3 d_center = Vec3::Zero();
    Vec3 d_size = Vec3::Zero();
    double d_yaw = 0.0;
  };
  /// Estimate for class_id and its derivatives with respect to the box,
  /// through the head and the grid interpolation (k-NN sets held fixed).
  BoxGradient estimate_with_box_gradient(const OrientedBox3D& box, const SceneSample& seeds,
                                         const ParamVector& params, int class_id) const;

  /// Adds d_loss_d_value * d(output[class_id])/d(params) into grad and returns
  /// the output value.
  double accumulate_param_gradient(const GridPoolResult& pool, const ParamVector& params,
                                   int class_id, double d_loss_d_value, ParamVector& grad) const;

 private:
  IoUHeadConfig config_;
  SetEncoder net_;
};

/// A standalone trained head with its shape metadata.
struct IoUHeadParams {
  IoUHeadConfig config;
  ParamVector params;
};

Json iou_head_params_to_json(const IoUHeadParams& head);
IoUHeadParams iou_head_params_from_json(const Json& doc);
Json iou_head_config_to_json(const IoUHeadConfig& config);
IoUHeadConfig iou_head_config_from_json(const Json& doc, const std::string& path);

/// Class-wise IoU estimates in (0, 1).
Eigen::VectorXd head_forward(const GridPoolResult& pool, const IoUHeadParams& head);

/// outputs[class_id]; throws std::out_of_range for an invalid class.
double select_class_iou(const Eigen::VectorXd& outputs, int class_id);

struct JitterConfig {
  double sigma_factor = 0.3;  // noise std per axis = sigma_factor * size
  int n_jitters_per_box = 4;

  bool operator==(const JitterConfig&) const = default;
};

/// Gaussian noise on center and size with per-axis std sigma_factor * size;
/// each size component is kept >= 0.1x its original value. Yaw is unchanged.
OrientedBox3D jitter_box(const OrientedBox3D& box, const JitterConfig& cfg, Rng& rng);

/// Largest IoU between the box and any ground-truth box (0 if none).
double best_iou(const OrientedBox3D& box, const std::vector<LabeledBox>& gts);

struct IoUTrainConfig {
  JitterConfig jitter;
  AdamConfig adam;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct IoUTrainResult {
  IoUHeadParams head;
  std::vector<double> loss_history;  // mean L1 per epoch
};

/// Fits the head on ground-truth boxes and their jitters; the target of each
/// proposal is its best IoU against all ground truth in the scene, the output
/// is selected by the owning ground-truth class. Throws std::invalid_argument
/// when the scenes carry no labels.
IoUTrainResult train_iou_head(const std::vector<SceneSample>& scenes, const IoUHeadConfig& config,
                              const IoUTrainConfig& train);

/// Continues training from the given parameters (same procedure).
IoUTrainResult train_iou_head(const std::vector<SceneSample>& scenes, IoUHeadParams initial,
                              const IoUTrainConfig& train);

struct IoUOptimizeConfig {
  double step = 5e-4;  // lambda, useful range [1e-4, 5e-4]
  int steps = 10;      // T
  double min_size = 1e-3;
};

struct IoUOptimizeResult {
  OrientedBox3D box;
  std::vector<double> trace;  // estimate before each step and after the last (T + 1 values)
};

/// Gradient ascent on the estimated IoU over center and size; yaw is fixed.
IoUOptimizeResult iou_optimize(const OrientedBox3D& box, const SceneSample& seeds,
                               const IoUHead& head, const ParamVector& params, int class_id,
                               const IoUOptimizeConfig& cfg);

}  // namespace ioumatch
