#include "ioumatch/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ioumatch/diagnostics.hpp"
#include "ioumatch/eval.hpp"
#include "ioumatch/log.hpp"
#include "json_util.hpp"

namespace fs = std::filesystem;

namespace ioumatch {

void ExperimentConfig::validate() const {
  generator.validate();
  if (scenes < 1) throw std::invalid_argument("scenes must be >= 1");
  if (!(label_ratio > 0.0 && label_ratio <= 1.0))
    throw std::invalid_argument("label_ratio must lie in (0, 1]");
  if (pretrain_eval_interval < 1) throw std::invalid_argument("pretrain_eval_interval must be >= 1");
  for (double t : eval_thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("eval thresholds must lie in (0, 1]");
  pretrain.validate();
  ssl.validate();
}

Json experiment_config_to_json(const ExperimentConfig& c) {
  return Json{{"seed", c.seed},
              {"scenes", c.scenes},
              {"label_ratio", c.label_ratio},
              {"heldout_scenes", c.heldout_scenes},
              {"out_dir", c.out_dir},
              {"generator", generator_params_to_json(c.generator)},
              {"detector", detector_config_to_json(c.detector)},
              {"pretrain", pretrain_config_to_json(c.pretrain)},
              {"pretrain_eval_interval", c.pretrain_eval_interval},
              {"ssl", ssl_config_to_json(c.ssl)},
              {"eval_thresholds", c.eval_thresholds}};
}

ExperimentConfig experiment_config_from_json(const Json& doc) {
  const std::string path = "config";
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  ExperimentConfig c;
  detail::read_optional(doc, "seed", path, c.seed);
  detail::read_optional(doc, "scenes", path, c.scenes);
  detail::read_optional(doc, "label_ratio", path, c.label_ratio);
  detail::read_optional(doc, "heldout_scenes", path, c.heldout_scenes);
  detail::read_optional(doc, "out_dir", path, c.out_dir);
  if (auto it = doc.find("generator"); it != doc.end()) c.generator = generator_params_from_json(*it);
  if (auto it = doc.find("detector"); it != doc.end())
    c.detector = detector_config_from_json(*it, path + ".detector");
  if (auto it = doc.find("pretrain"); it != doc.end())
    c.pretrain = pretrain_config_from_json(*it, path + ".pretrain");
  detail::read_optional(doc, "pretrain_eval_interval", path, c.pretrain_eval_interval);
  if (auto it = doc.find("ssl"); it != doc.end()) c.ssl = ssl_config_from_json(*it, path + ".ssl");
  if (auto it = doc.find("eval_thresholds"); it != doc.end())
    c.eval_thresholds = detail::numbers_at(*it, path + ".eval_thresholds");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return c;
}

ExperimentConfig reference_benchmark_config() {
  ExperimentConfig c;
  c.scenes = 200;
  c.label_ratio = 0.1;
  c.heldout_scenes = 50;
  c.pretrain.epochs = 100;
  c.pretrain_eval_interval = 100;
  c.ssl.epochs = 6;
  c.ssl.ema_decay = 0.99;
  return c;
}

std::vector<SceneSample> heldout_scenes(const GeneratorParams& params, std::uint64_t seed,
                                        std::size_t n) {
  std::vector<SceneSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "heldout_%05zu", i);
    out.push_back(generate_scene(derive_seed(seed, "heldout", i), params, id));
  }
  return out;
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

ExperimentConfig load_config(const std::optional<std::string>& path) {
  if (!path) return ExperimentConfig{};
  return experiment_config_from_json(read_json_file(*path));
}

// Detector dimensions always follow the dataset.
DetectorConfig detector_for(const ExperimentConfig& cfg, const GeneratorParams& data) {
  DetectorConfig d = cfg.detector;
  d.feature_dim = data.feature_dim;
  d.num_classes = data.num_classes();
  d.iou.feature_dim = data.feature_dim;
  d.iou.num_classes = data.num_classes();
  d.validate();
  return d;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create directory " + dir.string());
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

EpochMetrics snapshot_metrics(int epoch, const Detector& detector, const ParamVector& student,
                              const ParamVector& teacher, const DatasetSplit& split,
                              const std::vector<SceneSample>& heldout, const SSLConfig& ssl) {
  EpochMetrics m;
  m.epoch = epoch;
  if (!heldout.empty()) {
    const auto reports = evaluate_detector(detector, student, heldout, ssl.eval, {0.25, 0.5});
    m.map25 = reports[0].mean_ap;
    m.map50 = reports[1].mean_ap;
  }
  if (!split.unlabeled.empty()) {
    const PseudoStats st =
        pseudo_label_stats(detector, teacher, split.unlabeled, split.hidden_labels, ssl);
    m.coverage25 = st.coverage25;
    m.coverage50 = st.coverage50;
    m.pseudo_count = st.pseudo_count;
    m.mean_pseudo_iou = st.mean_pseudo_iou;
    m.mean_raw_iou = st.mean_raw_iou;
  }
  return m;
}

std::string metrics_line(const EpochMetrics& m) {
  return "epoch " + std::to_string(m.epoch) + ": mAP@0.25 " + fmt_double(m.map25) + ", mAP@0.5 " +
         fmt_double(m.map50) + ", coverage@0.25 " + fmt_double(m.coverage25) + ", pseudo " +
         std::to_string(m.pseudo_count);
}

struct Checkpoint {
  DetectorConfig detector;
  ParamVector params;   // pretrain params or SSL student
  std::optional<ParamVector> teacher;
  std::string kind;
};

Checkpoint read_checkpoint(const fs::path& path, const std::string& which = "student") {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint " + path.string() + " not found");
  const Json doc = read_json_file(path);
  const std::string p = "checkpoint";
  Checkpoint c;
  const Json& kind = detail::require(doc, "kind", p);
  if (!kind.is_string()) throw ParseError(p + ".kind: expected a string");
  c.kind = kind.get<std::string>();
  c.detector = detector_config_from_json(detail::require(doc, "detector", p), p + ".detector");
  if (c.kind == "pretrain") {
    c.params = param_vector_from_json(detail::require(doc, "params", p), p + ".params");
  } else if (c.kind == "ssl") {
    c.teacher = param_vector_from_json(detail::require(doc, "teacher", p), p + ".teacher");
    c.params = which == "teacher"
                   ? *c.teacher
                   : param_vector_from_json(detail::require(doc, "student", p), p + ".student");
  } else {
    throw ParseError(p + ".kind: expected \"pretrain\" or \"ssl\"");
  }
  ParamVector layout;
  Detector(c.detector).register_params(layout);
  if (!layout.same_layout(c.params))
    throw ParseError(p + ": parameter blocks do not match the detector config");
  return c;
}

// ---- gen ---------------------------------------------------------------------

struct GenFlags {
  std::optional<std::string> config;
  std::optional<std::size_t> scenes;
  std::optional<double> label_ratio;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  ExperimentConfig cfg = load_config(f.config);
  override_with(f.scenes, cfg.scenes);
  override_with(f.label_ratio, cfg.label_ratio);
  override_with(f.seed, cfg.seed);
  if (!(cfg.label_ratio > 0.0 && cfg.label_ratio <= 1.0))
    throw UsageError("--label-ratio must lie in (0, 1]");
  if (cfg.scenes < 1) throw UsageError("--scenes must be >= 1");
  cfg.generator.validate();

  ensure_dir(f.out);
  log_info("generating " + std::to_string(cfg.scenes) + " scenes");
  const DatasetSplit split = make_split(cfg.scenes, cfg.label_ratio, cfg.seed, cfg.generator);
  write_dataset(f.out, split, cfg.generator, cfg.seed);
  std::size_t boxes = 0;
  for (const auto& s : split.labeled) boxes += s.labels->size();
  for (const auto& h : split.hidden_labels) boxes += h.size();
  out << "wrote " << cfg.scenes << " scenes (" << split.labeled.size() << " labeled, "
      << split.unlabeled.size() << " unlabeled, " << boxes << " boxes) to " << f.out << "\n";
  return 0;
}

// ---- pretrain ----------------------------------------------------------------

struct TrainFlags {
  std::optional<std::string> config;
  std::string data;
  std::string out;
  std::optional<std::string> init;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<double> lambda_u;
  std::optional<double> ema_decay;
  std::optional<std::string> suppression;
  std::optional<std::size_t> heldout;
};

int cmd_pretrain(const TrainFlags& f, std::ostream& out) {
  ExperimentConfig cfg = load_config(f.config);
  override_with(f.epochs, cfg.pretrain.epochs);
  override_with(f.seed, cfg.seed);
  override_with(f.lr, cfg.pretrain.lr.base);
  override_with(f.heldout, cfg.heldout_scenes);
  cfg.pretrain.seed = derive_seed(cfg.seed, "pretrain");
  cfg.pretrain.validate();

  const LoadedDataset data = read_dataset(f.data);
  const DetectorConfig dcfg = detector_for(cfg, data.params);
  const Detector detector(dcfg);
  const auto heldout = heldout_scenes(data.params, data.seed, cfg.heldout_scenes);
  ensure_dir(f.out);

  std::vector<EpochMetrics> metrics;
  auto on_epoch = [&](int epoch, const ParamVector& params) {
    if (epoch % cfg.pretrain_eval_interval != 0 && epoch != cfg.pretrain.epochs) return;
    metrics.push_back(
        snapshot_metrics(epoch, detector, params, params, data.split, heldout, cfg.ssl));
    log_info(metrics_line(metrics.back()));
  };
  log_info("pretraining on " + std::to_string(data.split.labeled.size()) + " labeled scenes");
  const PretrainResult r = pretrain(detector, data.split.labeled, cfg.pretrain, nullptr, on_epoch);
  if (cfg.pretrain.epochs == 0)
    metrics.push_back(snapshot_metrics(0, detector, r.params, r.params, data.split, heldout, cfg.ssl));

  Json ckpt{{"kind", "pretrain"},
            {"detector", detector_config_to_json(dcfg)},
            {"params", param_vector_to_json(r.params)},
            {"optimizer", r.optimizer.to_json()},
            {"epoch", cfg.pretrain.epochs},
            {"config", experiment_config_to_json(cfg)},
            {"loss_history", r.loss_history}};
  write_json_file(fs::path(f.out) / "pretrain.json", ckpt);
  write_text_file(fs::path(f.out) / "metrics.csv", metrics_csv(metrics));
  std::string loss = "epoch,loss\n";
  for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i + 1, r.loss_history[i]);
    loss += buf;
  }
  write_text_file(fs::path(f.out) / "loss.csv", loss);
  const EpochMetrics& last = metrics.back();
  out << "pretrained " << cfg.pretrain.epochs << " epochs: held-out mAP@0.25 "
      << fmt_double(last.map25) << ", mAP@0.5 " << fmt_double(last.map50) << "\n";
  return 0;
}

// ---- ssl ---------------------------------------------------------------------

int cmd_ssl(const TrainFlags& f, std::ostream& out) {
  ExperimentConfig cfg = load_config(f.config);
  override_with(f.epochs, cfg.ssl.epochs);
  override_with(f.seed, cfg.seed);
  override_with(f.lr, cfg.ssl.lr.base);
  override_with(f.lambda_u, cfg.ssl.lambda_u);
  override_with(f.ema_decay, cfg.ssl.ema_decay);
  override_with(f.heldout, cfg.heldout_scenes);
  if (f.suppression) cfg.ssl.suppression = suppression_mode_from_string(*f.suppression);
  cfg.ssl.seed = derive_seed(cfg.seed, "ssl");
  cfg.ssl.validate();
  if (!f.init) throw UsageError("ssl needs --init <pretrain checkpoint>");

  const Checkpoint init = read_checkpoint(*f.init);
  const LoadedDataset data = read_dataset(f.data);
  const DetectorConfig expected = detector_for(ExperimentConfig{.detector = init.detector}, data.params);
  if (!(expected == init.detector))
    throw std::runtime_error("checkpoint detector does not match the dataset features/classes");
  const Detector detector(init.detector);
  const auto heldout = heldout_scenes(data.params, data.seed, cfg.heldout_scenes);
  ensure_dir(f.out);

  log_info("SSL training: " + std::to_string(data.split.unlabeled.size()) + " unlabeled scenes");
  const SSLResult r = ssl_train(detector, data.split, init.params, heldout, cfg.ssl,
                                [](const EpochMetrics& m) { log_info(metrics_line(m)); });

  Json ckpt{{"kind", "ssl"},
            {"detector", detector_config_to_json(init.detector)},
            {"student", param_vector_to_json(r.student)},
            {"teacher", param_vector_to_json(r.teacher)},
            {"optimizer", r.optimizer.to_json()},
            {"epoch", r.epochs_run},
            {"config", experiment_config_to_json(cfg)}};
  write_json_file(fs::path(f.out) / "ssl.json", ckpt);
  write_text_file(fs::path(f.out) / "metrics.csv", metrics_csv(r.metrics));
  const EpochMetrics& first = r.metrics.front();
  const EpochMetrics& last = r.metrics.back();
  out << "ssl " << r.epochs_run << " epochs: held-out mAP@0.25 " << fmt_double(first.map25)
      << " -> " << fmt_double(last.map25) << ", coverage@0.25 " << fmt_double(first.coverage25)
      << " -> " << fmt_double(last.coverage25) << "\n";
  return 0;
}

// ---- predict -----------------------------------------------------------------

struct PredictFlags {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string which = "student";
};

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  if (f.which != "student" && f.which != "teacher")
    throw UsageError("--which must be student or teacher");
  const Checkpoint ckpt = read_checkpoint(f.checkpoint, f.which);
  const LoadedDataset data = read_dataset(f.data);
  const Detector detector(ckpt.detector);
  std::vector<const SceneSample*> scenes;
  for (const auto& s : data.split.labeled) scenes.push_back(&s);
  for (const auto& s : data.split.unlabeled) scenes.push_back(&s);
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneSample* a, const SceneSample* b) { return a->scene_id < b->scene_id; });
  Json list = Json::array();
  std::size_t n = 0;
  for (const SceneSample* s : scenes) {
    Json dets = Json::array();
    for (const Detection& d : detector_forward(detector, *s, ckpt.params)) {
      dets.push_back(detection_to_json(d));
      ++n;
    }
    list.push_back({{"scene_id", s->scene_id}, {"detections", std::move(dets)}});
  }
  write_json_file(f.out, Json{{"scenes", std::move(list)}});
  out << "wrote " << n << " detections for " << scenes.size() << " scenes to " << f.out << "\n";
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalFlags {
  std::string predictions;
  std::string data;
  std::vector<double> thresholds{0.25, 0.5};
  std::string ap_mode = "all-point";
  std::string score = "objectness";
  std::string suppress = "none";
  double suppress_iou = kDefaultSuppressionIoU;
  std::optional<std::string> out;
  std::optional<std::string> pr_csv;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  ApMode mode;
  ScoreKind score;
  std::optional<SuppressionMode> suppression;
  try {
    mode = ApMode::from_string(f.ap_mode);
    score = score_kind_from_string(f.score);
    if (f.suppress != "none") suppression = suppression_mode_from_string(f.suppress);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  for (double t : f.thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw UsageError("--thresholds must lie in (0, 1]");

  const LoadedDataset data = read_dataset(f.data);
  std::map<std::string, EvalScene> scenes;
  for (const auto& s : data.split.labeled) scenes[s.scene_id] = {s.scene_id, {}, *s.labels};
  for (std::size_t i = 0; i < data.split.unlabeled.size(); ++i) {
    const auto& s = data.split.unlabeled[i];
    scenes[s.scene_id] = {s.scene_id, {}, data.split.hidden_labels[i]};
  }

  const Json doc = read_json_file(f.predictions);
  const Json& list = detail::require(doc, "scenes", "predictions");
  if (!list.is_array()) throw ParseError("predictions.scenes: expected an array");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string p = "predictions.scenes[" + std::to_string(i) + "]";
    const Json& id = detail::require(list[i], "scene_id", p);
    if (!id.is_string()) throw ParseError(p + ".scene_id: expected a string");
    auto it = scenes.find(id.get<std::string>());
    if (it == scenes.end()) throw ParseError(p + ".scene_id: unknown scene " + id.dump());
    const Json& dets = detail::require(list[i], "detections", p);
    if (!dets.is_array()) throw ParseError(p + ".detections: expected an array");
    std::vector<Detection> parsed;
    for (std::size_t j = 0; j < dets.size(); ++j)
      parsed.push_back(detection_from_json(dets[j], p + ".detections[" + std::to_string(j) + "]"));
    auto boxes = to_scored_boxes(parsed, score, suppression, f.suppress_iou);
    auto& preds = it->second.predictions;
    preds.insert(preds.end(), boxes.begin(), boxes.end());
  }

  std::vector<EvalScene> eval;
  for (auto& [id, s] : scenes) eval.push_back(std::move(s));
  const auto reports = map_at(eval, f.thresholds, mode);
  Json arr = Json::array();
  for (const EvalReport& r : reports) {
    arr.push_back(eval_report_to_json(r));
    out << "mAP@" << r.iou_threshold << " (" << mode.name() << "): " << fmt_double(r.mean_ap) << "\n";
  }
  const Json report{{"score", to_string(score)}, {"suppression", f.suppress}, {"reports", arr}};
  if (f.out) write_json_file(*f.out, report);
  else out << report.dump(2) << "\n";
  if (f.pr_csv) {
    for (const EvalReport& r : reports) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_%g.csv", r.iou_threshold);
      write_pr_csv(*f.pr_csv + suffix, r);
    }
  }
  return 0;
}

// ---- diag --------------------------------------------------------------------

struct DiagFlags {
  std::string kind;
  std::optional<std::size_t> n;
  std::uint64_t seed = 0;
  std::uint64_t samples = 1000000;
  std::optional<std::string> out;
};

int cmd_diag(const DiagFlags& f, std::ostream& out) {
  DiagReport r;
  if (f.kind == "iou-oracle") r = diag_iou_oracle(f.n.value_or(1000), f.seed, f.samples);
  else if (f.kind == "grad-check") r = diag_grad_check(f.n.value_or(100), f.seed);
  else if (f.kind == "lhs-check") r = diag_lhs_check(f.n.value_or(500), f.seed);
  else throw UsageError("unknown diag kind '" + f.kind + "' (iou-oracle, grad-check, lhs-check)");
  char line[256];
  std::snprintf(line, sizeof(line), "%s: %zu cases, max error %.3e (tolerance %.1e) %s\n",
                r.kind.c_str(), r.cases, r.max_error, r.tolerance, r.passed ? "PASS" : "FAIL");
  out << line;
  if (f.out) write_json_file(*f.out, diag_report_to_json(r));
  return r.passed ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"ioumatch: IoU-guided semi-supervised 3D detection on synthetic scenes"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset and its split");
  g->add_option("--config", gen.config, "experiment config JSON");
  g->add_option("--scenes", gen.scenes, "number of scenes");
  g->add_option("--label-ratio", gen.label_ratio, "fraction of labeled scenes, in (0, 1]");
  g->add_option("--seed", gen.seed, "master seed");
  g->add_option("--out", gen.out, "output directory")->required();

  TrainFlags pre;
  auto* p = app.add_subcommand("pretrain", "supervised pretraining on the labeled split");
  p->add_option("--config", pre.config, "experiment config JSON");
  p->add_option("--data", pre.data, "dataset directory")->required();
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_option("--epochs", pre.epochs, "training epochs");
  p->add_option("--seed", pre.seed, "master seed");
  p->add_option("--lr", pre.lr, "learning rate");
  p->add_option("--heldout", pre.heldout, "held-out evaluation scenes");

  TrainFlags ssl;
  auto* s = app.add_subcommand("ssl", "mean-teacher training from a pretrain checkpoint");
  s->add_option("--config", ssl.config, "experiment config JSON");
  s->add_option("--data", ssl.data, "dataset directory")->required();
  s->add_option("--init", ssl.init, "pretrain checkpoint");
  s->add_option("--out", ssl.out, "output directory")->required();
  s->add_option("--epochs", ssl.epochs, "training epochs");
  s->add_option("--seed", ssl.seed, "master seed");
  s->add_option("--lr", ssl.lr, "learning rate");
  s->add_option("--lambda-u", ssl.lambda_u, "unsupervised loss weight");
  s->add_option("--ema-decay", ssl.ema_decay, "teacher EMA decay");
  s->add_option("--suppression", ssl.suppression, "obj-nms, iou-nms or iou-lhs");
  s->add_option("--heldout", ssl.heldout, "held-out evaluation scenes");

  PredictFlags pred;
  auto* pr = app.add_subcommand("predict", "write raw detections of a checkpoint");
  pr->add_option("--checkpoint", pred.checkpoint, "pretrain or ssl checkpoint")->required();
  pr->add_option("--data", pred.data, "dataset directory")->required();
  pr->add_option("--out", pred.out, "predictions JSON")->required();
  pr->add_option("--which", pred.which, "student or teacher (ssl checkpoints)");

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "mAP of a predictions file against a dataset");
  e->add_option("--predictions", ev.predictions, "predictions JSON")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--thresholds", ev.thresholds, "IoU thresholds")->delimiter(',');
  e->add_option("--ap-mode", ev.ap_mode, "all-point or r<R>, e.g. r40");
  e->add_option("--score", ev.score, "objectness or sv");
  e->add_option("--suppress", ev.suppress, "none, obj-nms, iou-nms or iou-lhs");
  e->add_option("--suppress-iou", ev.suppress_iou, "suppression IoU threshold");
  e->add_option("--out", ev.out, "report JSON");
  e->add_option("--pr-csv", ev.pr_csv, "PR curve CSV prefix");

  DiagFlags dg;
  auto* d = app.add_subcommand("diag", "property diagnostics");
  d->add_option("kind", dg.kind, "iou-oracle, grad-check or lhs-check")->required();
  d->add_option("-n", dg.n, "number of cases");
  d->add_option("--seed", dg.seed, "seed");
  d->add_option("--samples", dg.samples, "Monte-Carlo samples per pair (iou-oracle)");
  d->add_option("--out", dg.out, "report JSON");

  std::vector<const char*> argv{"ioumatch"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return 2;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (p->parsed()) return cmd_pretrain(pre, out);
    if (s->parsed()) return cmd_ssl(ssl, out);
    if (pr->parsed()) return cmd_predict(pred, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (d->parsed()) return cmd_diag(dg, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ioumatch
