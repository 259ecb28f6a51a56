#include "ioumatch/iou_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace ioumatch {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

IoUHead::IoUHead(const IoUHeadConfig& config, const std::string& prefix)
    : config_(config),
      net_(prefix,
           {config.feature_dim + 3, config.hidden, config.hidden, config.hidden},
           {config.hidden, config.hidden, config.hidden, config.num_classes}) {
  if (config.num_classes < 1) throw std::invalid_argument("IoU head needs at least one class");
}

void IoUHead::register_params(ParamVector& params) const { net_.register_params(params); }

void IoUHead::init_params(ParamVector& params, Rng& rng) const {
  net_.init_params(params, rng, 0.1);
}

Eigen::VectorXd IoUHead::forward(const GridPoolResult& pool, const ParamVector& params,
                                 SetEncoder::Cache* cache) const {
  if (pool.features.cols() != config_.feature_dim || pool.local_coords.size() != pool.size())
    throw std::invalid_argument("grid pool does not match the IoU head input shape (F + 3 = " +
                                std::to_string(config_.feature_dim + 3) + ")");
  const Eigen::VectorXd logits = net_.forward(params, pool.head_input(), cache);
  return logits.unaryExpr([](double x) { return sigmoid(x); });
}

double IoUHead::estimate(const OrientedBox3D& box, const SceneSample& seeds,
                         const ParamVector& params, int class_id) const {
  const GridPoolResult pool =
      grid_pool(box, seeds, config_.grid_resolution, config_.num_neighbors);
  return select_class_iou(forward(pool, params), class_id);
}

IoUHead::BoxGradient IoUHead::estimate_with_box_gradient(const OrientedBox3D& box,
                                                         const SceneSample& seeds,
                                                         const ParamVector& params,
                                                         int class_id) const {
  GridPoolJacobian jac;
  const GridPoolResult pool =
      pool_with_jacobian(box, seeds, config_.grid_resolution, config_.num_neighbors, jac);
  SetEncoder::Cache cache;
  const Eigen::VectorXd out = forward(pool, params, &cache);
  BoxGradient g;
  g.value = select_class_iou(out, class_id);

  Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(out.size());
  d_logits(class_id) = g.value * (1.0 - g.value);
  ParamVector scratch = params.zeros_like();
  const RowMatrix d_input = net_.backward(params, cache, d_logits, scratch);
  for (std::size_t m = 0; m < pool.size(); ++m) {
    const auto row = d_input.row(static_cast<Eigen::Index>(m));
    g.d_center += (row * jac.d_input_d_center[m]).transpose();
    g.d_size += (row * jac.d_input_d_size[m]).transpose();
    g.d_yaw += row.dot(jac.d_input_d_yaw[m]);
  }
  return g;
}

double IoUHead::accumulate_param_gradient(const GridPoolResult& pool, const ParamVector& params,
                                          int class_id, double d_loss_d_value,
                                          ParamVector& grad) const {
  SetEncoder::Cache cache;
  const Eigen::VectorXd out = forward(pool, params, &cache);
  const double v = select_class_iou(out, class_id);
  if (d_loss_d_value != 0.0) {
    Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(out.size());
    d_logits(class_id) = d_loss_d_value * v * (1.0 - v);
    net_.backward(params, cache, d_logits, grad);
  }
  return v;
}

Json iou_head_config_to_json(const IoUHeadConfig& c) {
  return Json{{"feature_dim", c.feature_dim},
              {"hidden", c.hidden},
              {"num_classes", c.num_classes},
              {"grid_resolution", c.grid_resolution},
              {"num_neighbors", c.num_neighbors}};
}

IoUHeadConfig iou_head_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  IoUHeadConfig c;
  detail::read_optional(doc, "feature_dim", path, c.feature_dim);
  detail::read_optional(doc, "hidden", path, c.hidden);
  detail::read_optional(doc, "num_classes", path, c.num_classes);
  detail::read_optional(doc, "grid_resolution", path, c.grid_resolution);
  detail::read_optional(doc, "num_neighbors", path, c.num_neighbors);
  return c;
}

Json iou_head_params_to_json(const IoUHeadParams& head) {
  return Json{{"config", iou_head_config_to_json(head.config)},
              {"params", param_vector_to_json(head.params)}};
}

IoUHeadParams iou_head_params_from_json(const Json& doc) {
  IoUHeadParams h;
  h.config = iou_head_config_from_json(detail::require(doc, "config", "head"), "head.config");
  h.params = param_vector_from_json(detail::require(doc, "params", "head"), "head.params");
  ParamVector expected;
  IoUHead(h.config).register_params(expected);
  if (!expected.same_layout(h.params))
    throw ParseError("head.params: block layout does not match head.config");
  return h;
}

Eigen::VectorXd head_forward(const GridPoolResult& pool, const IoUHeadParams& head) {
  return IoUHead(head.config).forward(pool, head.params);
}

double select_class_iou(const Eigen::VectorXd& outputs, int class_id) {
  if (class_id < 0 || class_id >= outputs.size())
    throw std::out_of_range("class id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(outputs.size()) + ")");
  return outputs(class_id);
}

OrientedBox3D jitter_box(const OrientedBox3D& box, const JitterConfig& cfg, Rng& rng) {
  if (!(cfg.sigma_factor >= 0.0)) throw std::invalid_argument("sigma_factor must be >= 0");
  Vec3 center = box.center();
  Vec3 size = box.size();
  for (int a = 0; a < 3; ++a) {
    const double stddev = cfg.sigma_factor * box.size()(a);
    if (stddev > 0.0) center(a) += normal(rng, 0.0, stddev);
  }
  for (int a = 0; a < 3; ++a) {
    const double stddev = cfg.sigma_factor * box.size()(a);
    if (stddev > 0.0) size(a) += normal(rng, 0.0, stddev);
    size(a) = std::max(size(a), 0.1 * box.size()(a));
  }
  return OrientedBox3D(center, size, box.yaw());
}

double best_iou(const OrientedBox3D& box, const std::vector<LabeledBox>& gts) {
  double best = 0.0;
  for (const LabeledBox& gt : gts) best = std::max(best, iou3d(box, gt.box));
  return best;
}

namespace {

struct IoUSample {
  std::size_t scene;
  OrientedBox3D box;
  int class_id;
  double target;
};

IoUTrainResult run_iou_training(const std::vector<SceneSample>& scenes, IoUHeadParams head,
                                const IoUTrainConfig& train) {
  const IoUHead net(head.config);
  const auto& cfg = head.config;
  std::size_t n_gt = 0;
  for (const SceneSample& s : scenes) n_gt += s.labels ? s.labels->size() : 0;
  if (n_gt == 0) throw std::invalid_argument("IoU head training needs labeled boxes");

  Adam adam(train.adam, head.params);
  Rng rng(derive_seed(train.seed, "iou-train"));
  IoUTrainResult result;
  ParamVector grad = head.params.zeros_like();

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::vector<IoUSample> samples;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      if (!scenes[si].labels) continue;
      const auto& gts = *scenes[si].labels;
      for (const LabeledBox& gt : gts) {
        samples.push_back({si, gt.box, gt.class_id, best_iou(gt.box, gts)});
        for (int j = 0; j < train.jitter.n_jitters_per_box; ++j) {
          const OrientedBox3D jb = jitter_box(gt.box, train.jitter, rng);
          samples.push_back({si, jb, gt.class_id, best_iou(jb, gts)});
        }
      }
    }
    std::shuffle(samples.begin(), samples.end(), rng);

    double epoch_loss = 0.0;
    const std::size_t batch = static_cast<std::size_t>(std::max(1, train.batch_size));
    for (std::size_t start = 0; start < samples.size(); start += batch) {
      const std::size_t end = std::min(samples.size(), start + batch);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const IoUSample& s = samples[i];
        const GridPoolResult pool =
            grid_pool(s.box, scenes[s.scene], cfg.grid_resolution, cfg.num_neighbors);
        SetEncoder::Cache cache;
        const Eigen::VectorXd out = net.forward(pool, head.params, &cache);
        const double v = out(s.class_id);
        const double err = v - s.target;
        epoch_loss += std::abs(err);
        const double sign = (err > 0.0) - (err < 0.0);
        Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(out.size());
        d_logits(s.class_id) = sign * v * (1.0 - v) / static_cast<double>(end - start);
        net.network().backward(head.params, cache, d_logits, grad);
      }
      adam.step(head.params, grad);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  result.head = std::move(head);
  return result;
}

}  // namespace

IoUTrainResult train_iou_head(const std::vector<SceneSample>& scenes, const IoUHeadConfig& config,
                              const IoUTrainConfig& train) {
  IoUHeadParams head{config, {}};
  const IoUHead net(config);
  net.register_params(head.params);
  Rng init_rng(derive_seed(train.seed, "iou-init"));
  net.init_params(head.params, init_rng);
  return run_iou_training(scenes, std::move(head), train);
}

IoUTrainResult train_iou_head(const std::vector<SceneSample>& scenes, IoUHeadParams initial,
                              const IoUTrainConfig& train) {
  return run_iou_training(scenes, std::move(initial), train);
}

IoUOptimizeResult iou_optimize(const OrientedBox3D& box, const SceneSample& seeds,
                               const IoUHead& head, const ParamVector& params, int class_id,
                               const IoUOptimizeConfig& cfg) {
  IoUOptimizeResult r{box, {}};
  if (cfg.steps <= 0) {
    r.trace.push_back(head.estimate(box, seeds, params, class_id));
    return r;
  }
  for (int t = 0; t < cfg.steps; ++t) {
    const auto g = head.estimate_with_box_gradient(r.box, seeds, params, class_id);
    r.trace.push_back(g.value);
    const Vec3 center = r.box.center() + cfg.step * g.d_center;
    const Vec3 size = (r.box.size() + cfg.step * g.d_size).cwiseMax(cfg.min_size);
    r.box = OrientedBox3D(center, size, r.box.yaw());
  }
  r.trace.push_back(head.estimate(r.box, seeds, params, class_id));
  return r;
}

}  // namespace ioumatch
