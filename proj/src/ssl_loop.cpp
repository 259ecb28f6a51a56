#include "ioumatch/ssl_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace ioumatch {

void AugmentConfig::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw std::invalid_argument("flip_prob must lie in [0, 1]");
  if (!(rotation_range >= 0.0)) throw std::invalid_argument("rotation_range must be >= 0");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi))
    throw std::invalid_argument("scale range must satisfy 0 < lo <= hi");
}

AugmentedScene augment(const SceneSample& scene, AugStrength strength, const AugmentConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  const std::size_t n = scene.size();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (cfg.subsample_points > 0 && static_cast<std::size_t>(cfg.subsample_points) < n) {
    const std::size_t m = static_cast<std::size_t>(cfg.subsample_points);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
  }

  AugmentedScene out;
  out.kept = idx;
  SceneSample& s = out.scene;
  s.scene_id = scene.scene_id;
  s.labels = scene.labels;
  s.points.reserve(idx.size());
  s.features.resize(static_cast<Eigen::Index>(idx.size()), scene.features.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    s.points.push_back(scene.points[idx[i]]);
    s.features.row(static_cast<Eigen::Index>(i)) = scene.features.row(idx[i]);
  }
  if (strength == AugStrength::Weak) return out;

  Transform3D& t = out.transform;
  if (cfg.flip_x) t.flip_x = uniform(rng, 0.0, 1.0) < cfg.flip_prob;
  if (cfg.flip_y) t.flip_y = uniform(rng, 0.0, 1.0) < cfg.flip_prob;
  if (cfg.rotation_range > 0.0) t.rot_yaw = uniform(rng, -cfg.rotation_range, cfg.rotation_range);
  if (cfg.scale_hi > cfg.scale_lo) t.scale = uniform(rng, cfg.scale_lo, cfg.scale_hi);
  else t.scale = cfg.scale_lo;
  if (t.is_identity()) return out;

  for (Vec3& p : s.points) p = apply_transform(p, t);
  transform_features(s.features, t);
  if (s.labels)
    for (LabeledBox& lb : *s.labels) lb.box = apply_transform(lb.box, t);
  return out;
}

void LossConfig::validate() const {
  if (!(positive_radius > 0.0 && positive_radius <= negative_radius))
    throw std::invalid_argument("loss radii must satisfy 0 < positive <= negative");
  if (!(smooth_l1_beta > 0.0)) throw std::invalid_argument("smooth_l1_beta must be positive");
  const LossWeights& w = weights;
  for (double x : {w.center, w.size, w.heading, w.cls, w.objectness, w.iou})
    if (!(x >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (iou_jitter.n_jitters_per_box < 0) throw std::invalid_argument("iou jitter count must be >= 0");
}

AnchorAssignment assign_anchors(const std::vector<Vec3>& anchors,
                                const std::vector<LabeledBox>& gts, double positive_radius,
                                double negative_radius) {
  AnchorAssignment a;
  a.target.assign(anchors.size(), -1);
  a.negative.assign(anchors.size(), false);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double d = point_box_distance(anchors[i], gts[g].box);
      if (d < best) {
        best = d;
        best_idx = static_cast<int>(g);
      }
    }
    if (best <= positive_radius) a.target[i] = best_idx;
    else if (best > negative_radius) a.negative[i] = true;
  }
  return a;
}

double smooth_l1(double x, double beta) {
  const double ax = std::abs(x);
  return ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
}

namespace {

double smooth_l1_grad(double x, double beta) {
  if (std::abs(x) < beta) return x / beta;
  return x > 0.0 ? 1.0 : -1.0;
}

double weighted_total(const LossBreakdown& l, const LossWeights& w) {
  return w.center * l.center + w.size * l.size + w.heading * l.heading + w.cls * l.cls +
         w.objectness * l.objectness + w.iou * l.iou;
}

// Center, size, heading and class terms of one anchor against a target box.
// Adds share * term to acc and share * d(weighted terms)/d(raw) to d_raw.
void add_box_terms(const Vec3& anchor, const Eigen::VectorXd& raw, const OrientedBox3D& target,
                   int class_id, int num_classes, const LossConfig& cfg, double share,
                   LossBreakdown& acc, Eigen::VectorXd& d_raw) {
  using namespace raw_layout;
  const LossWeights& w = cfg.weights;
  const double beta = cfg.smooth_l1_beta;

  for (int a = 0; a < 3; ++a) {
    const double diff = anchor(a) + raw(kCenter + a) - target.center()(a);
    acc.center += share * smooth_l1(diff, beta);
    d_raw(kCenter + a) += share * w.center * smooth_l1_grad(diff, beta);
  }
  for (int a = 0; a < 3; ++a) {
    const double r = raw(kSize + a);
    const double diff = softplus(r) + kMinPredictedSize - target.size()(a);
    acc.size += share * smooth_l1(diff, beta);
    d_raw(kSize + a) += share * w.size * smooth_l1_grad(diff, beta) * sigmoid(r);
  }
  const double dc = raw(kHeading) - std::cos(target.yaw());
  const double ds = raw(kHeading + 1) - std::sin(target.yaw());
  acc.heading += share * (dc * dc + ds * ds);
  d_raw(kHeading) += share * w.heading * 2.0 * dc;
  d_raw(kHeading + 1) += share * w.heading * 2.0 * ds;

  const Eigen::VectorXd logits = raw.segment(kClass, num_classes);
  const double lse = logits.maxCoeff() + std::log((logits.array() - logits.maxCoeff()).exp().sum());
  acc.cls += share * (lse - logits(class_id));
  Eigen::VectorXd d_cls = softmax(logits);
  d_cls(class_id) -= 1.0;
  d_raw.segment(kClass, num_classes) += share * w.cls * d_cls;
}

}  // namespace

LossBreakdown supervised_loss(const Detector& detector, const ParamVector& params,
                              const SceneSample& scene, const Detector::Output& out,
                              const LossConfig& cfg, std::uint64_t iou_seed, double scale,
                              ParamVector* grad) {
  if (!scene.labels || scene.labels->empty())
    throw std::invalid_argument("supervised loss needs a labeled scene");
  const auto& gts = *scene.labels;
  const int L = detector.config().num_classes;
  const std::size_t K = out.anchors.size();

  std::vector<Vec3> anchors(K);
  for (std::size_t i = 0; i < K; ++i) anchors[i] = out.anchors[i].anchor;
  const AnchorAssignment asg =
      assign_anchors(anchors, gts, cfg.positive_radius, cfg.negative_radius);

  LossBreakdown loss;
  for (std::size_t i = 0; i < K; ++i) {
    loss.positives += asg.target[i] >= 0;
    loss.negatives += asg.negative[i];
  }

  std::vector<Eigen::VectorXd> d_raw(K, Eigen::VectorXd::Zero(detector.config().raw_dim()));
  if (loss.positives > 0) {
    const double share = 1.0 / loss.positives;
    for (std::size_t i = 0; i < K; ++i) {
      if (asg.target[i] < 0) continue;
      const LabeledBox& gt = gts[asg.target[i]];
      add_box_terms(anchors[i], out.anchors[i].raw, gt.box, gt.class_id, L, cfg, share, loss,
                    d_raw[i]);
    }
  }
  const int n_obj = loss.positives + loss.negatives;
  if (n_obj > 0) {
    const double share = 1.0 / n_obj;
    for (std::size_t i = 0; i < K; ++i) {
      if (asg.target[i] < 0 && !asg.negative[i]) continue;
      const double y = asg.target[i] >= 0 ? 1.0 : 0.0;
      const double x = out.anchors[i].raw(raw_layout::kObjectness);
      loss.objectness += share * (softplus(x) - y * x);
      d_raw[i](raw_layout::kObjectness) += share * cfg.weights.objectness * (sigmoid(x) - y);
    }
  }

  // IoU head on ground-truth boxes and their jitters.
  const IoUHead& head = detector.iou_head();
  const IoUHeadConfig& hc = head.config();
  Rng rng(iou_seed);
  struct Sample {
    OrientedBox3D box;
    int class_id;
  };
  std::vector<Sample> samples;
  for (const LabeledBox& gt : gts) {
    samples.push_back({gt.box, gt.class_id});
    for (int j = 0; j < cfg.iou_jitter.n_jitters_per_box; ++j)
      samples.push_back({jitter_box(gt.box, cfg.iou_jitter, rng), gt.class_id});
  }
  const double iou_share = 1.0 / static_cast<double>(samples.size());
  for (const Sample& s : samples) {
    const GridPoolResult pool = grid_pool(s.box, scene, hc.grid_resolution, hc.num_neighbors);
    SetEncoder::Cache cache;
    const Eigen::VectorXd o = head.forward(pool, params, grad ? &cache : nullptr);
    const double v = select_class_iou(o, s.class_id);
    const double err = v - best_iou(s.box, gts);
    loss.iou += iou_share * std::abs(err);
    if (grad && err != 0.0 && cfg.weights.iou != 0.0) {
      Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(o.size());
      d_logits(s.class_id) =
          scale * cfg.weights.iou * iou_share * (err > 0.0 ? 1.0 : -1.0) * v * (1.0 - v);
      head.network().backward(params, cache, d_logits, *grad);
    }
  }

  if (grad) {
    for (auto& d : d_raw) d *= scale;
    detector.backward(params, out, d_raw, *grad);
  }
  loss.total = weighted_total(loss, cfg.weights);
  return loss;
}

LossBreakdown unsupervised_loss(const Detector& detector, const ParamVector& params,
                                const Detector::Output& out,
                                const std::vector<PseudoLabel>& pseudo,
                                const std::vector<Association>& association,
                                const LossConfig& cfg, double scale, ParamVector* grad) {
  const std::size_t K = out.anchors.size();
  if (association.size() != K) throw std::invalid_argument("one association per detection expected");
  LossBreakdown loss;
  for (const Association& a : association) loss.positives += a.supervised;
  if (loss.positives == 0) return loss;

  const int L = detector.config().num_classes;
  const double share = 1.0 / loss.positives;
  std::vector<Eigen::VectorXd> d_raw(K);
  for (std::size_t i = 0; i < K; ++i) {
    if (!association[i].supervised) continue;
    const PseudoLabel& p = pseudo.at(static_cast<std::size_t>(association[i].pseudo_index));
    d_raw[i] = Eigen::VectorXd::Zero(detector.config().raw_dim());
    add_box_terms(out.anchors[i].anchor, out.anchors[i].raw, p.box, p.class_id, L, cfg, share,
                  loss, d_raw[i]);
    d_raw[i] *= scale;
  }
  if (grad) detector.backward(params, out, d_raw, *grad);
  loss.total = weighted_total(loss, cfg.weights);
  return loss;
}

void ema_update(ParamVector& teacher, const ParamVector& student, double alpha) {
  if (!teacher.same_layout(student))
    throw std::invalid_argument("teacher and student parameter layouts differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("EMA decay must lie in [0, 1]");
  auto& t = teacher.data();
  const auto& s = student.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = alpha * t[i] + (1.0 - alpha) * s[i];
}

double LrSchedule::at(int epoch) const {
  if (decay_every <= 0) return base;
  return base * std::pow(gamma, epoch / decay_every);
}

void PretrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("pretrain needs epochs >= 0 and batch_size >= 1");
  if (!(lr.base > 0.0)) throw std::invalid_argument("learning rate must be positive");
  augmentation.validate();
  loss.validate();
}

PretrainResult pretrain(const Detector& detector, const std::vector<SceneSample>& labeled,
                        const PretrainConfig& cfg, const ParamVector* initial,
                        const std::function<void(int, const ParamVector&)>& on_epoch) {
  cfg.validate();
  if (labeled.empty()) throw std::invalid_argument("pretraining needs labeled scenes");
  PretrainResult r;
  r.params = initial ? *initial : detector.make_params(cfg.seed);
  {
    ParamVector layout;
    detector.register_params(layout);
    if (!layout.same_layout(r.params))
      throw std::invalid_argument("initial parameters do not match the detector layout");
  }
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.lr.base;
  r.optimizer = Adam(adam_cfg, r.params);
  Rng rng(derive_seed(cfg.seed, "pretrain"));
  ParamVector grad = r.params.zeros_like();
  std::vector<std::size_t> order(labeled.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const SceneSample& src = labeled[order[i]];
        const std::uint64_t iou_seed = rng();
        if (cfg.augment) {
          const AugmentedScene view = augment(src, AugStrength::Strong, cfg.augmentation, rng);
          const auto out = detector.forward(view.scene, r.params, false);
          epoch_loss += supervised_loss(detector, r.params, view.scene, out, cfg.loss, iou_seed,
                                        scale, &grad).total;
        } else {
          const auto out = detector.forward(src, r.params, false);
          epoch_loss +=
              supervised_loss(detector, r.params, src, out, cfg.loss, iou_seed, scale, &grad).total;
        }
      }
      r.optimizer.step(r.params, grad, cfg.lr.at(epoch));
    }
    r.loss_history.push_back(epoch_loss / static_cast<double>(labeled.size()));
    if (on_epoch) on_epoch(epoch + 1, r.params);
  }
  return r;
}

void SSLConfig::validate() const {
  if (!(lambda_u >= 0.0)) throw std::invalid_argument("lambda_u must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("ema_decay must lie in [0, 1]");
  if (n_labeled < 0 || n_unlabeled < 1) throw std::invalid_argument("batch needs n_labeled >= 0 and n_unlabeled >= 1");
  if (epochs < 0 || eval_interval < 1) throw std::invalid_argument("epochs >= 0 and eval_interval >= 1 required");
  if (!(suppression_iou > 0.0 && suppression_iou < 1.0) ||
      !(eval.suppression_iou > 0.0 && eval.suppression_iou < 1.0))
    throw std::invalid_argument("suppression IoU thresholds must lie in (0, 1)");
  if (!(association_radius > 0.0)) throw std::invalid_argument("association_radius must be positive");
  if (!(lr.base > 0.0)) throw std::invalid_argument("learning rate must be positive");
  thresholds.validate();
  augmentation.validate();
  loss.validate();
}

std::vector<PseudoLabel> make_pseudo_labels(const std::vector<Detection>& teacher_dets,
                                            const ThresholdConfig& thresholds,
                                            SuppressionMode mode, double suppression_iou,
                                            const Transform3D& to_student) {
  const std::vector<Detection> kept =
      suppress(filter_detections(teacher_dets, thresholds), mode, suppression_iou);
  return finalize_pseudo_labels(kept, to_student);
}

PseudoStats pseudo_label_stats(const Detector& detector, const ParamVector& teacher,
                               const std::vector<SceneSample>& scenes,
                               const std::vector<std::vector<LabeledBox>>& hidden,
                               const SSLConfig& cfg) {
  if (scenes.size() != hidden.size())
    throw std::invalid_argument("one hidden label list per unlabeled scene expected");
  PseudoStats st;
  std::vector<std::vector<PseudoLabel>> pseudo(scenes.size());
  double pseudo_iou = 0.0, raw_iou = 0.0;
  std::size_t n_raw = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto dets = detector.forward(scenes[s], teacher, true).detections;
    for (const Detection& d : dets) raw_iou += best_iou(d.box, hidden[s]);
    n_raw += dets.size();
    pseudo[s] = make_pseudo_labels(dets, cfg.thresholds, cfg.suppression, cfg.suppression_iou, {});
    for (const PseudoLabel& p : pseudo[s]) pseudo_iou += best_iou(p.box, hidden[s]);
    st.pseudo_count += pseudo[s].size();
  }
  st.coverage25 = coverage(pseudo, hidden, 0.25);
  st.coverage50 = coverage(pseudo, hidden, 0.5);
  st.mean_pseudo_iou = st.pseudo_count ? pseudo_iou / static_cast<double>(st.pseudo_count) : 0.0;
  st.mean_raw_iou = n_raw ? raw_iou / static_cast<double>(n_raw) : 0.0;
  return st;
}

std::vector<ScoredBox> predict_scene(const Detector& detector, const ParamVector& params,
                                     const SceneSample& scene, const EvalProtocol& protocol) {
  const auto dets = detector.forward(scene, params, true).detections;
  return to_scored_boxes(dets, protocol.score, protocol.suppression, protocol.suppression_iou);
}

std::vector<EvalReport> evaluate_detector(const Detector& detector, const ParamVector& params,
                                          const std::vector<SceneSample>& scenes,
                                          const EvalProtocol& protocol,
                                          const std::vector<double>& thresholds) {
  std::vector<EvalScene> eval;
  eval.reserve(scenes.size());
  for (const SceneSample& s : scenes) {
    if (!s.labels) throw std::invalid_argument("evaluation scene " + s.scene_id + " has no labels");
    eval.push_back({s.scene_id, predict_scene(detector, params, s, protocol), *s.labels});
  }
  return map_at(eval, thresholds, protocol.ap);
}

SSLResult ssl_train(const Detector& detector, const DatasetSplit& split,
                    const ParamVector& pretrained, const std::vector<SceneSample>& heldout,
                    const SSLConfig& cfg,
                    const std::function<void(const EpochMetrics&)>& on_metrics) {
  cfg.validate();
  {
    ParamVector layout;
    detector.register_params(layout);
    if (!layout.same_layout(pretrained))
      throw std::invalid_argument("pretrained parameters do not match the detector layout");
  }
  if (split.unlabeled.empty()) throw std::invalid_argument("SSL training needs unlabeled scenes");
  if (cfg.n_labeled > 0 && split.labeled.empty())
    throw std::invalid_argument("SSL training with n_labeled > 0 needs labeled scenes");

  SSLResult r;
  r.student = pretrained;
  r.teacher = pretrained;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.lr.base;
  r.optimizer = Adam(adam_cfg, r.student);
  Rng rng(derive_seed(cfg.seed, "ssl"));
  ParamVector grad = r.student.zeros_like();

  auto record = [&](int epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    if (!heldout.empty()) {
      const auto reports = evaluate_detector(detector, r.student, heldout, cfg.eval, {0.25, 0.5});
      m.map25 = reports[0].mean_ap;
      m.map50 = reports[1].mean_ap;
    }
    const PseudoStats st =
        pseudo_label_stats(detector, r.teacher, split.unlabeled, split.hidden_labels, cfg);
    m.coverage25 = st.coverage25;
    m.coverage50 = st.coverage50;
    m.pseudo_count = st.pseudo_count;
    m.mean_pseudo_iou = st.mean_pseudo_iou;
    m.mean_raw_iou = st.mean_raw_iou;
    r.metrics.push_back(m);
    if (on_metrics) on_metrics(m);
  };
  record(0);

  std::vector<std::size_t> labeled_order;
  std::size_t labeled_pos = 0;
  auto next_labeled = [&]() -> const SceneSample& {
    if (labeled_pos == labeled_order.size()) {
      labeled_order.resize(split.labeled.size());
      std::iota(labeled_order.begin(), labeled_order.end(), 0);
      std::shuffle(labeled_order.begin(), labeled_order.end(), rng);
      labeled_pos = 0;
    }
    return split.labeled[labeled_order[labeled_pos++]];
  };

  std::vector<std::size_t> order(split.unlabeled.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr.at(epoch - 1);
    const std::size_t nu = static_cast<std::size_t>(cfg.n_unlabeled);
    for (std::size_t start = 0; start < order.size(); start += nu) {
      const std::size_t end = std::min(order.size(), start + nu);
      grad.set_zero();

      for (int j = 0; j < cfg.n_labeled; ++j) {
        const SceneSample& src = next_labeled();
        const std::uint64_t iou_seed = rng();
        const AugmentedScene view = augment(src, AugStrength::Strong, cfg.augmentation, rng);
        const auto out = detector.forward(view.scene, r.student, false);
        supervised_loss(detector, r.student, view.scene, out, cfg.loss, iou_seed,
                        1.0 / cfg.n_labeled, &grad);
      }

      double unsup = 0.0;
      const double unsup_scale = cfg.lambda_u / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const SceneSample& src = split.unlabeled[order[i]];
        const AugmentedScene weak = augment(src, AugStrength::Weak, cfg.augmentation, rng);
        const AugmentedScene strong = augment(src, AugStrength::Strong, cfg.augmentation, rng);
        const auto teacher_dets = detector.forward(weak.scene, r.teacher, true).detections;
        // The weak view keeps the original frame, so the student transform
        // alone maps teacher boxes into the student frame.
        const auto pseudo = make_pseudo_labels(teacher_dets, cfg.thresholds, cfg.suppression,
                                               cfg.suppression_iou, strong.transform);
        const auto out = detector.forward(strong.scene, r.student, false);
        const auto assoc =
            associate_for_supervision(out.detections, pseudo, cfg.association_radius);
        unsup += unsupervised_loss(detector, r.student, out, pseudo, assoc, cfg.loss, unsup_scale,
                                   &grad).total;
      }
      r.unsup_loss_history.push_back(unsup / static_cast<double>(end - start));

      r.optimizer.step(r.student, grad, lr);
      ema_update(r.teacher, r.student, cfg.ema_decay);
    }
    r.epochs_run = epoch;
    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) record(epoch);
  }
  return r;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[256];
  for (const EpochMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%zu,%.6f\n", m.epoch, m.map25, m.map50,
                  m.coverage25, m.coverage50, m.pseudo_count, m.mean_pseudo_iou);
    out += buf;
  }
  return out;
}

GradCheckResult check_total_loss_gradient(const Detector& detector, const ParamVector& params,
                                          const SceneSample& labeled,
                                          const SceneSample& unlabeled,
                                          const std::vector<PseudoLabel>& pseudo,
                                          const LossConfig& cfg, double lambda_u,
                                          double association_radius, double eps) {
  constexpr std::uint64_t kIoUSeed = 0x5eed;
  auto total = [&](const ParamVector& p, ParamVector* g) {
    const auto out_l = detector.forward(labeled, p, false);
    double value = supervised_loss(detector, p, labeled, out_l, cfg, kIoUSeed, 1.0, g).total;
    const auto out_u = detector.forward(unlabeled, p, false);
    const auto assoc = associate_for_supervision(out_u.detections, pseudo, association_radius);
    value += lambda_u * unsupervised_loss(detector, p, out_u, pseudo, assoc, cfg, lambda_u, g).total;
    return value;
  };

  ParamVector analytic = params.zeros_like();
  total(params, &analytic);
  ParamVector probe = params;
  std::vector<double> numeric(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x = params.data()[i];
    probe.data()[i] = x + eps;
    const double up = total(probe, nullptr);
    probe.data()[i] = x - eps;
    const double down = total(probe, nullptr);
    probe.data()[i] = x;
    numeric[i] = (up - down) / (2.0 * eps);
  }

  GradCheckResult res;
  res.n_params = params.size();
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = analytic.data()[i] - numeric[i];
    diff2 += d * d;
    a2 += analytic.data()[i] * analytic.data()[i];
    n2 += numeric[i] * numeric[i];
    res.max_abs_error = std::max(res.max_abs_error, std::abs(d));
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  res.relative_error = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
  return res;
}

Json augment_config_to_json(const AugmentConfig& c) {
  return Json{{"subsample_points", c.subsample_points},
              {"flip_x", c.flip_x},
              {"flip_y", c.flip_y},
              {"flip_prob", c.flip_prob},
              {"rotation_range", c.rotation_range},
              {"scale_lo", c.scale_lo},
              {"scale_hi", c.scale_hi}};
}

AugmentConfig augment_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  AugmentConfig c;
  detail::read_optional(doc, "subsample_points", path, c.subsample_points);
  detail::read_optional(doc, "flip_x", path, c.flip_x);
  detail::read_optional(doc, "flip_y", path, c.flip_y);
  detail::read_optional(doc, "flip_prob", path, c.flip_prob);
  detail::read_optional(doc, "rotation_range", path, c.rotation_range);
  detail::read_optional(doc, "scale_lo", path, c.scale_lo);
  detail::read_optional(doc, "scale_hi", path, c.scale_hi);
  return c;
}

Json loss_config_to_json(const LossConfig& c) {
  const LossWeights& w = c.weights;
  return Json{{"positive_radius", c.positive_radius},
              {"negative_radius", c.negative_radius},
              {"smooth_l1_beta", c.smooth_l1_beta},
              {"weights",
               {{"center", w.center},
                {"size", w.size},
                {"heading", w.heading},
                {"cls", w.cls},
                {"objectness", w.objectness},
                {"iou", w.iou}}},
              {"iou_jitter_sigma", c.iou_jitter.sigma_factor},
              {"iou_jitters_per_box", c.iou_jitter.n_jitters_per_box}};
}

LossConfig loss_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  LossConfig c;
  detail::read_optional(doc, "positive_radius", path, c.positive_radius);
  detail::read_optional(doc, "negative_radius", path, c.negative_radius);
  detail::read_optional(doc, "smooth_l1_beta", path, c.smooth_l1_beta);
  detail::read_optional(doc, "iou_jitter_sigma", path, c.iou_jitter.sigma_factor);
  detail::read_optional(doc, "iou_jitters_per_box", path, c.iou_jitter.n_jitters_per_box);
  if (auto it = doc.find("weights"); it != doc.end()) {
    const std::string wp = path + ".weights";
    if (!it->is_object()) throw ParseError(wp + ": expected an object");
    detail::read_optional(*it, "center", wp, c.weights.center);
    detail::read_optional(*it, "size", wp, c.weights.size);
    detail::read_optional(*it, "heading", wp, c.weights.heading);
    detail::read_optional(*it, "cls", wp, c.weights.cls);
    detail::read_optional(*it, "objectness", wp, c.weights.objectness);
    detail::read_optional(*it, "iou", wp, c.weights.iou);
  }
  return c;
}

namespace {

Json lr_to_json(const LrSchedule& lr) {
  return Json{{"base", lr.base}, {"decay_every", lr.decay_every}, {"gamma", lr.gamma}};
}

LrSchedule lr_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  LrSchedule lr;
  detail::read_optional(doc, "base", path, lr.base);
  detail::read_optional(doc, "decay_every", path, lr.decay_every);
  detail::read_optional(doc, "gamma", path, lr.gamma);
  return lr;
}

template <typename F>
auto parse_enum(const Json& doc, const char* key, const std::string& path, F parse)
    -> std::optional<decltype(parse(std::string()))> {
  auto it = doc.find(key);
  if (it == doc.end()) return std::nullopt;
  const std::string field = path + "." + key;
  if (!it->is_string()) throw ParseError(field + ": expected a string");
  try {
    return parse(it->get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ParseError(field + ": " + e.what());
  }
}

template <typename T>
T validated(T value, const std::string& path) {
  try {
    value.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return value;
}

}  // namespace

Json pretrain_config_to_json(const PretrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", lr_to_json(c.lr)},
              {"augment", c.augment},
              {"augmentation", augment_config_to_json(c.augmentation)},
              {"loss", loss_config_to_json(c.loss)},
              {"seed", c.seed}};
}

PretrainConfig pretrain_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  PretrainConfig c;
  detail::read_optional(doc, "epochs", path, c.epochs);
  detail::read_optional(doc, "batch_size", path, c.batch_size);
  if (auto it = doc.find("lr"); it != doc.end()) c.lr = lr_from_json(*it, path + ".lr");
  detail::read_optional(doc, "augment", path, c.augment);
  if (auto it = doc.find("augmentation"); it != doc.end())
    c.augmentation = augment_config_from_json(*it, path + ".augmentation");
  if (auto it = doc.find("loss"); it != doc.end()) c.loss = loss_config_from_json(*it, path + ".loss");
  detail::read_optional(doc, "seed", path, c.seed);
  return validated(c, path);
}

Json ssl_config_to_json(const SSLConfig& c) {
  return Json{{"lambda_u", c.lambda_u},
              {"n_labeled", c.n_labeled},
              {"n_unlabeled", c.n_unlabeled},
              {"ema_decay", c.ema_decay},
              {"thresholds", thresholds_to_json(c.thresholds)},
              {"suppression", to_string(c.suppression)},
              {"suppression_iou", c.suppression_iou},
              {"augmentation", augment_config_to_json(c.augmentation)},
              {"epochs", c.epochs},
              {"lr", lr_to_json(c.lr)},
              {"loss", loss_config_to_json(c.loss)},
              {"association_radius", c.association_radius},
              {"eval_interval", c.eval_interval},
              {"eval",
               {{"suppression", to_string(c.eval.suppression)},
                {"suppression_iou", c.eval.suppression_iou},
                {"score", to_string(c.eval.score)},
                {"ap_mode", c.eval.ap.name()}}},
              {"seed", c.seed}};
}

SSLConfig ssl_config_from_json(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  SSLConfig c;
  detail::read_optional(doc, "lambda_u", path, c.lambda_u);
  detail::read_optional(doc, "n_labeled", path, c.n_labeled);
  detail::read_optional(doc, "n_unlabeled", path, c.n_unlabeled);
  detail::read_optional(doc, "ema_decay", path, c.ema_decay);
  if (auto it = doc.find("thresholds"); it != doc.end())
    c.thresholds = thresholds_from_json(*it, path + ".thresholds");
  if (auto m = parse_enum(doc, "suppression", path, suppression_mode_from_string)) c.suppression = *m;
  detail::read_optional(doc, "suppression_iou", path, c.suppression_iou);
  if (auto it = doc.find("augmentation"); it != doc.end())
    c.augmentation = augment_config_from_json(*it, path + ".augmentation");
  detail::read_optional(doc, "epochs", path, c.epochs);
  if (auto it = doc.find("lr"); it != doc.end()) c.lr = lr_from_json(*it, path + ".lr");
  if (auto it = doc.find("loss"); it != doc.end()) c.loss = loss_config_from_json(*it, path + ".loss");
  detail::read_optional(doc, "association_radius", path, c.association_radius);
  detail::read_optional(doc, "eval_interval", path, c.eval_interval);
  if (auto it = doc.find("eval"); it != doc.end()) {
    const std::string ep = path + ".eval";
    if (!it->is_object()) throw ParseError(ep + ": expected an object");
    if (auto m = parse_enum(*it, "suppression", ep, suppression_mode_from_string))
      c.eval.suppression = *m;
    detail::read_optional(*it, "suppression_iou", ep, c.eval.suppression_iou);
    if (auto s = parse_enum(*it, "score", ep, score_kind_from_string)) c.eval.score = *s;
    if (auto a = parse_enum(*it, "ap_mode", ep, ApMode::from_string)) c.eval.ap = *a;
  }
  detail::read_optional(doc, "seed", path, c.seed);
  return validated(c, path);
}

}  // namespace ioumatch
