#include "ioumatch/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace ioumatch {

std::string to_string(ScoreKind kind) {
  return kind == ScoreKind::Objectness ? "objectness" : "sv";
}

ScoreKind score_kind_from_string(const std::string& name) {
  if (name == "objectness") return ScoreKind::Objectness;
  if (name == "sv") return ScoreKind::ObjectnessTimesIoU;
  throw std::invalid_argument("unknown score '" + name + "' (expected objectness or sv)");
}

std::string ApMode::name() const {
  return kind == Kind::AllPoint ? "all-point" : "r" + std::to_string(recall_points);
}

ApMode ApMode::from_string(const std::string& name) {
  if (name == "all-point") return all_point();
  if (name.size() > 1 && name[0] == 'r') {
    const int r = std::stoi(name.substr(1));
    if (r >= 1) return r_points(r);
  }
  throw std::invalid_argument("unknown AP mode '" + name + "' (expected all-point or r<R>)");
}

std::vector<ScoredBox> to_scored_boxes(const std::vector<Detection>& dets, ScoreKind score,
                                       std::optional<SuppressionMode> suppression,
                                       double suppression_iou) {
  const std::vector<Detection> kept =
      suppression ? suppress(dets, *suppression, suppression_iou) : dets;
  std::vector<ScoredBox> out;
  out.reserve(kept.size());
  for (const Detection& d : kept)
    out.push_back({d.box, d.predicted_class(),
                   score == ScoreKind::Objectness ? d.objectness : d.iou_score()});
  return out;
}

namespace {

struct RankedPred {
  double score;
  std::size_t scene;
  std::size_t index;
};

std::set<int> classes_in(const std::vector<EvalScene>& scenes) {
  std::set<int> classes;
  for (const EvalScene& s : scenes) {
    for (const ScoredBox& p : s.predictions) classes.insert(p.class_id);
    for (const LabeledBox& g : s.ground_truth) classes.insert(g.class_id);
  }
  return classes;
}

// Predictions of one class in evaluation order.
std::vector<RankedPred> ranked_predictions(const std::vector<EvalScene>& scenes, int class_id) {
  std::vector<RankedPred> ranked;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t i = 0; i < scenes[s].predictions.size(); ++i)
      if (scenes[s].predictions[i].class_id == class_id)
        ranked.push_back({scenes[s].predictions[i].score, s, i});
  std::sort(ranked.begin(), ranked.end(), [&](const RankedPred& a, const RankedPred& b) {
    if (a.score != b.score) return a.score > b.score;
    const std::string& ia = scenes[a.scene].scene_id;
    const std::string& ib = scenes[b.scene].scene_id;
    return std::tie(ia, a.scene, a.index) < std::tie(ib, b.scene, b.index);
  });
  return ranked;
}

}  // namespace

std::vector<std::vector<PredictionMatch>> match_detections(const std::vector<EvalScene>& scenes,
                                                           double iou_thresh) {
  std::vector<std::vector<PredictionMatch>> out(scenes.size());
  std::vector<std::vector<bool>> gt_used(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    out[s].resize(scenes[s].predictions.size());
    gt_used[s].assign(scenes[s].ground_truth.size(), false);
  }
  for (int cls : classes_in(scenes)) {
    for (const RankedPred& r : ranked_predictions(scenes, cls)) {
      const EvalScene& scene = scenes[r.scene];
      const OrientedBox3D& box = scene.predictions[r.index].box;
      double best = -1.0;
      int best_gt = -1;
      for (std::size_t g = 0; g < scene.ground_truth.size(); ++g) {
        if (gt_used[r.scene][g] || scene.ground_truth[g].class_id != cls) continue;
        const double iou = iou3d(box, scene.ground_truth[g].box);
        if (iou >= iou_thresh && iou > best) {
          best = iou;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0) {
        gt_used[r.scene][best_gt] = true;
        out[r.scene][r.index] = {true, best_gt};
      }
    }
  }
  return out;
}

std::vector<std::pair<double, double>> pr_curve(const std::vector<bool>& ranked_tp,
                                                std::size_t n_gt) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(ranked_tp.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    tp += ranked_tp[i];
    const double recall = n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_gt);
    const double precision = static_cast<double>(tp) / static_cast<double>(i + 1);
    curve.emplace_back(recall, precision);
  }
  return curve;
}

double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt, ApMode mode) {
  if (n_gt == 0) return 0.0;
  const auto curve = pr_curve(ranked_tp, n_gt);
  // envelope[i] = max precision at any point with index >= i
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].second);
    envelope[i] = running;
  }

  if (mode.kind == ApMode::Kind::AllPoint) {
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      if (curve[i].first > prev_recall) {
        ap += (curve[i].first - prev_recall) * envelope[i];
        prev_recall = curve[i].first;
      }
    }
    return ap;
  }

  if (mode.recall_points < 1) throw std::invalid_argument("recall_points must be >= 1");
  double sum = 0.0;
  std::size_t i = 0;
  for (int j = 1; j <= mode.recall_points; ++j) {
    const double r = static_cast<double>(j) / mode.recall_points;
    while (i < curve.size() && curve[i].first < r) ++i;
    if (i < curve.size()) sum += envelope[i];
  }
  return sum / mode.recall_points;
}

std::vector<EvalReport> map_at(const std::vector<EvalScene>& scenes,
                               const std::vector<double>& thresholds, ApMode mode) {
  std::map<int, std::size_t> gt_count;
  for (const EvalScene& s : scenes)
    for (const LabeledBox& g : s.ground_truth) ++gt_count[g.class_id];

  std::vector<EvalReport> reports;
  for (double thresh : thresholds) {
    const auto matches = match_detections(scenes, thresh);
    EvalReport rep;
    rep.iou_threshold = thresh;
    rep.mode = mode;
    rep.gt_count = gt_count;
    for (const auto& [cls, n_gt] : gt_count) {
      std::vector<bool> tp;
      for (const RankedPred& r : ranked_predictions(scenes, cls))
        tp.push_back(matches[r.scene][r.index].true_positive);
      rep.per_class_ap[cls] = average_precision(tp, n_gt, mode);
      rep.ranked_tp[cls] = std::move(tp);
    }
    double total = 0.0;
    for (const auto& [cls, ap] : rep.per_class_ap) total += ap;
    rep.mean_ap = rep.per_class_ap.empty() ? 0.0 : total / static_cast<double>(rep.per_class_ap.size());
    reports.push_back(std::move(rep));
  }
  return reports;
}

double coverage(const std::vector<std::vector<PseudoLabel>>& pseudo,
                const std::vector<std::vector<LabeledBox>>& ground_truth, double iou_thresh) {
  if (pseudo.size() != ground_truth.size())
    throw std::invalid_argument("coverage needs one pseudo-label list per scene");
  std::size_t total = 0, covered = 0;
  for (std::size_t s = 0; s < ground_truth.size(); ++s) {
    for (const LabeledBox& g : ground_truth[s]) {
      ++total;
      covered += std::any_of(pseudo[s].begin(), pseudo[s].end(), [&](const PseudoLabel& p) {
        return iou3d(p.box, g.box) >= iou_thresh;
      });
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

Json eval_report_to_json(const EvalReport& report) {
  Json per_class = Json::object();
  for (const auto& [cls, ap] : report.per_class_ap)
    per_class[std::to_string(cls)] = {{"ap", ap}, {"num_gt", report.gt_count.at(cls)}};
  Json j{{"iou_threshold", report.iou_threshold},
         {"ap_mode", report.mode.name()},
         {"mAP", report.mean_ap},
         {"per_class", std::move(per_class)}};
  if (report.coverage) j["coverage"] = *report.coverage;
  return j;
}

void write_pr_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "class,recall,precision\n";
  char buf[128];
  for (const auto& [cls, tp] : report.ranked_tp) {
    for (const auto& [recall, precision] : pr_curve(tp, report.gt_count.at(cls))) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", cls, recall, precision);
      out << buf;
    }
  }
}

}  // namespace ioumatch
