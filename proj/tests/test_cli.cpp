#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ioumatch/cli.hpp"

using namespace ioumatch;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ioumatch_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small experiment so that training commands finish in seconds.
fs::path write_small_config(const fs::path& dir) {
  ExperimentConfig c;
  c.generator.points_per_object = 24;
  c.generator.background_points = 32;
  c.heldout_scenes = 2;
  c.detector.num_anchors = 8;
  c.detector.num_neighbors = 8;
  c.detector.hidden = 8;
  c.detector.iou.hidden = 8;
  c.detector.iou.grid_resolution = 2;
  c.pretrain.epochs = 2;
  c.pretrain_eval_interval = 1;
  c.ssl.epochs = 2;
  c.ssl.n_labeled = 1;
  c.ssl.n_unlabeled = 2;
  c.ssl.augmentation.subsample_points = 64;
  c.pretrain.augmentation.subsample_points = 64;
  const fs::path p = dir / "config.json";
  std::ofstream(p) << experiment_config_to_json(c).dump(2);
  return p;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("gen writes a deterministic dataset") {
  const fs::path a = fresh("gen_a"), b = fresh("gen_b");
  const Run r = cli({"gen", "--scenes", "100", "--label-ratio", "0.1", "--seed", "7", "--out", a.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("10 labeled, 90 unlabeled") != std::string::npos);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) files += e.path().extension() == ".json";
  CHECK(files == 101);
  CHECK(fs::exists(a / "split.json"));

  CHECK(cli({"gen", "--scenes", "100", "--label-ratio", "0.1", "--seed", "7", "--out", b.string()}).code == 0);
  for (const auto& e : fs::directory_iterator(a))
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
}

TEST_CASE("usage errors") {
  const fs::path d = fresh("usage");
  CHECK(cli({"gen", "--scenes", "10", "--label-ratio", "0", "--out", d.string()}).code == 2);
  CHECK(cli({"gen", "--scenes", "10", "--label-ratio", "1.5", "--out", d.string()}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"diag", "unknown-kind"}).code == 2);
  CHECK(cli({"gen", "--scenes", "x", "--out", d.string()}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("runtime errors exit with 1") {
  const fs::path d = fresh("errors");
  CHECK(cli({"pretrain", "--data", (d / "missing").string(), "--out", d.string()}).code == 1);
  CHECK(cli({"gen", "--scenes", "3", "--out", d.string(), "--config", (d / "nope.json").string()}).code == 1);
  std::ofstream(d / "bad.json") << "{\"scenes\": \"many\"}";
  const Run bad = cli({"gen", "--out", d.string(), "--config", (d / "bad.json").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("scenes") != std::string::npos);
}

TEST_CASE("pretrain, ssl, predict and eval end to end") {
  const fs::path root = fresh("e2e");
  const std::string cfg = write_small_config(root).string();
  const std::string data = (root / "data").string();
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(cli({"gen", "--config", cfg, "--scenes", "5", "--label-ratio", "0.4", "--seed", "3",
               "--out", data}).code == 0);

  const Run pre = cli({"pretrain", "--config", cfg, "--data", data, "--out", (root / "pre").string()});
  REQUIRE(pre.code == 0);
  const auto pre_csv = split_lines(slurp(root / "pre" / "metrics.csv"));
  REQUIRE(pre_csv.size() == 3);
  CHECK(pre_csv[0] == kMetricsHeader);
  CHECK(pre_csv[1].rfind("1,", 0) == 0);
  CHECK(pre_csv[2].rfind("2,", 0) == 0);
  const Json ckpt = Json::parse(slurp(root / "pre" / "pretrain.json"));
  CHECK(ckpt.at("kind") == "pretrain");
  CHECK(ckpt.at("loss_history").size() == 2);

  CHECK(cli({"ssl", "--config", cfg, "--data", data, "--out", (root / "nope").string()}).code == 2);
  CHECK(cli({"ssl", "--config", cfg, "--data", data, "--init", (root / "missing.json").string(),
             "--out", (root / "nope").string()}).code == 1);

  const std::string init = (root / "pre" / "pretrain.json").string();
  const Run ssl = cli({"ssl", "--config", cfg, "--data", data, "--init", init, "--out",
                       (root / "ssl").string()});
  REQUIRE(ssl.code == 0);
  const auto ssl_csv = split_lines(slurp(root / "ssl" / "metrics.csv"));
  REQUIRE(ssl_csv.size() == 4);  // epochs 0, 1, 2
  for (std::size_t i = 1; i < ssl_csv.size(); ++i)
    CHECK(std::count(ssl_csv[i].begin(), ssl_csv[i].end(), ',') == 6);
  const auto t1 = std::chrono::steady_clock::now();
  CHECK(std::chrono::duration<double>(t1 - t0).count() < 60.0);

  // Zero unsupervised weight trains the student exactly like a run that
  // admits no pseudo labels.
  ExperimentConfig closed = experiment_config_from_json(Json::parse(slurp(cfg)));
  closed.ssl.thresholds = ThresholdConfig{1.0, 1.0, 1.0, {}};
  std::ofstream(root / "closed.json") << experiment_config_to_json(closed).dump();
  ExperimentConfig open = closed;
  open.ssl.thresholds = ThresholdConfig{0.0, 0.0, 0.0, {}};
  std::ofstream(root / "open.json") << experiment_config_to_json(open).dump();
  REQUIRE(cli({"ssl", "--config", (root / "open.json").string(), "--lambda-u", "0", "--data", data,
               "--init", init, "--out", (root / "l0").string()}).code == 0);
  REQUIRE(cli({"ssl", "--config", (root / "closed.json").string(), "--data", data, "--init", init,
               "--out", (root / "sup").string()}).code == 0);
  const Json l0 = Json::parse(slurp(root / "l0" / "ssl.json"));
  const Json sup = Json::parse(slurp(root / "sup" / "ssl.json"));
  CHECK(l0.at("student") == sup.at("student"));

  const std::string preds = (root / "preds.json").string();
  REQUIRE(cli({"predict", "--checkpoint", (root / "ssl" / "ssl.json").string(), "--data", data,
               "--out", preds}).code == 0);
  const Json pj = Json::parse(slurp(preds));
  CHECK(pj.at("scenes").size() == 5);
  CHECK(pj.at("scenes")[0].at("detections").size() == 8);
  CHECK(cli({"predict", "--checkpoint", init, "--data", data, "--out", preds, "--which", "both"}).code == 2);

  const Run ev = cli({"eval", "--predictions", preds, "--data", data, "--suppress", "iou-nms",
                      "--out", (root / "report.json").string(), "--pr-csv", (root / "pr").string()});
  CHECK(ev.code == 0);
  const Json rep = Json::parse(slurp(root / "report.json"));
  REQUIRE(rep.at("reports").size() == 2);
  CHECK(rep["reports"][1]["mAP"].get<double>() <= rep["reports"][0]["mAP"].get<double>());
  CHECK(fs::exists(root / "pr_0.25.csv"));
}

TEST_CASE("eval against ground truth") {
  const fs::path root = fresh("evalgt");
  const std::string data = (root / "data").string();
  REQUIRE(cli({"gen", "--scenes", "4", "--label-ratio", "0.5", "--seed", "1", "--out", data}).code == 0);
  const LoadedDataset ds = read_dataset(data);

  Json scenes = Json::array();
  auto add = [&](const std::string& id, const std::vector<LabeledBox>& boxes) {
    Json dets = Json::array();
    for (const auto& b : boxes) {
      Detection d;
      d.box = b.box;
      d.objectness = 1.0;
      d.class_probs = Eigen::VectorXd::Zero(3);
      d.class_probs(b.class_id) = 1.0;
      d.pred_iou = 1.0;
      d.anchor = b.box.center();
      dets.push_back(detection_to_json(d));
    }
    scenes.push_back({{"scene_id", id}, {"detections", dets}});
  };
  for (const auto& s : ds.split.labeled) add(s.scene_id, *s.labels);
  for (std::size_t i = 0; i < ds.split.unlabeled.size(); ++i)
    add(ds.split.unlabeled[i].scene_id, ds.split.hidden_labels[i]);
  std::ofstream(root / "gt.json") << Json{{"scenes", scenes}}.dump();

  for (const std::string mode : {"all-point", "r40"}) {
    const fs::path out = root / ("gt_" + mode + ".json");
    REQUIRE(cli({"eval", "--predictions", (root / "gt.json").string(), "--data", data,
                 "--ap-mode", mode, "--thresholds", "0.25,0.5,0.7", "--out", out.string()}).code == 0);
    const Json rep = Json::parse(slurp(out));
    REQUIRE(rep.at("reports").size() == 3);
    for (const auto& r : rep["reports"]) {
      CHECK(r.at("mAP").get<double>() == 1.0);
      CHECK(r.at("ap_mode") == mode);
    }
  }

  std::ofstream(root / "empty.json") << "{\"scenes\": []}";
  const fs::path out = root / "empty_report.json";
  REQUIRE(cli({"eval", "--predictions", (root / "empty.json").string(), "--data", data, "--out",
               out.string()}).code == 0);
  for (const auto& r : Json::parse(slurp(out)).at("reports")) CHECK(r.at("mAP").get<double>() == 0.0);

  std::ofstream(root / "unknown.json") << "{\"scenes\": [{\"scene_id\": \"nope\", \"detections\": []}]}";
  const Run unk = cli({"eval", "--predictions", (root / "unknown.json").string(), "--data", data});
  CHECK(unk.code == 1);
  CHECK(unk.err.find("scenes[0].scene_id") != std::string::npos);

  std::ofstream(root / "bad.json") << "{\"scenes\": [{\"scene_id\": \"scene_00000\"}]}";
  const Run bad = cli({"eval", "--predictions", (root / "bad.json").string(), "--data", data});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("detections") != std::string::npos);

  CHECK(cli({"eval", "--predictions", (root / "gt.json").string(), "--data", data, "--ap-mode", "voc"}).code == 2);
}

TEST_CASE("diag commands") {
  const fs::path root = fresh("diag");
  const Run iou = cli({"diag", "iou-oracle", "-n", "20", "--samples", "200000", "--seed", "1"});
  CHECK(iou.code == 0);
  CHECK(iou.out.find("PASS") != std::string::npos);
  const Run grad = cli({"diag", "grad-check", "-n", "10", "--out", (root / "g.json").string()});
  CHECK(grad.code == 0);
  const Json g = Json::parse(slurp(root / "g.json"));
  CHECK(g.at("passed") == true);
  CHECK(g.at("max_error").get<double>() < 1e-3);
  CHECK(cli({"diag", "lhs-check", "-n", "100"}).code == 0);
}

TEST_CASE("experiment config round trip") {
  ExperimentConfig c = reference_benchmark_config();
  c.seed = 99;
  c.eval_thresholds = {0.1, 0.7};
  c.ssl.thresholds = ThresholdConfig::kitti_per_class();
  CHECK(experiment_config_from_json(Json::parse(experiment_config_to_json(c).dump())) == c);
  CHECK(experiment_config_from_json(Json::object()) == ExperimentConfig{});
  const ExperimentConfig ref = reference_benchmark_config();
  CHECK(ref.scenes == 200);
  CHECK(ref.label_ratio == 0.1);
}
