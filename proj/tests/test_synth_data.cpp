#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "ioumatch/synth_data.hpp"

using namespace ioumatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ioumatch_synth_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("generate_scene is deterministic") {
  const GeneratorParams params;
  const SceneSample a = generate_scene(7, params, "s");
  const SceneSample b = generate_scene(7, params, "s");
  CHECK(a == b);
  CHECK(scene_to_json(a).dump() == scene_to_json(b).dump());
  CHECK_FALSE(generate_scene(8, params, "s") == a);
}

TEST_CASE("zero objects gives background only") {
  GeneratorParams params;
  params.min_objects = 0;
  params.max_objects = 0;
  const SceneSample s = generate_scene(1, params);
  REQUIRE(s.labels.has_value());
  CHECK(s.labels->empty());
  CHECK(s.size() == static_cast<std::size_t>(params.background_points));
  for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
    // Background pattern slot dominates.
    const int last = params.feature_dim - 1;
    CHECK(s.features(i, last) > 0.5);
  }
}

TEST_CASE("generated scenes satisfy the placement invariants") {
  GeneratorParams params;
  params.min_objects = 5;
  params.max_objects = 5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSample s = generate_scene(seed, params);
    s.validate();
    REQUIRE(s.labels.has_value());
    const auto& labels = *s.labels;
    CHECK(labels.size() == 5);
    CHECK(s.feature_dim() == params.feature_dim);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = i + 1; j < labels.size(); ++j)
        CHECK(iou3d(labels[i].box, labels[j].box) < 0.05);
      const ClassPrior& prior = params.classes.at(labels[i].class_id);
      const double v = volume(labels[i].box);
      CHECK(v >= prior.mean_size.prod() * std::pow(1 - prior.rel_spread, 3) - 1e-12);
      CHECK(v <= prior.mean_size.prod() * std::pow(1 + prior.rel_spread, 3) + 1e-12);
      int enclosed = 0;
      for (const Vec3& p : s.points) enclosed += point_in_box(p, labels[i].box);
      CHECK(enclosed >= 1);
    }
  }
}

TEST_CASE("over-dense parameters raise PlacementError") {
  GeneratorParams params;
  params.min_objects = 40;
  params.max_objects = 40;
  params.room_half_extent = 1.0;
  params.max_placement_retries = 20;
  CHECK_THROWS_AS(generate_scene(3, params), PlacementError);
}

TEST_CASE("make_split sizes and partition") {
  GeneratorParams params;
  const DatasetSplit all = make_split(6, 1.0, 2, params);
  CHECK(all.labeled.size() == 6);
  CHECK(all.unlabeled.empty());

  const DatasetSplit s = make_split(100, 0.1, 5, params);
  CHECK(s.labeled.size() == 10);
  CHECK(s.unlabeled.size() == 90);
  CHECK(s.hidden_labels.size() == 90);
  std::set<std::string> ids;
  for (const auto& x : s.labeled) {
    CHECK(x.labels.has_value());
    ids.insert(x.scene_id);
  }
  for (std::size_t i = 0; i < s.unlabeled.size(); ++i) {
    CHECK_FALSE(s.unlabeled[i].labels.has_value());
    CHECK(ids.insert(s.unlabeled[i].scene_id).second);
  }
  CHECK(ids.size() == 100);

  CHECK(labeled_count(200, 0.1) == 20);
  CHECK(labeled_count(3, 0.5) == 2);
  CHECK(labeled_count(10, 0.3) == 3);
  CHECK_THROWS(make_split(0, 0.5, 1, params));
  CHECK_THROWS(make_split(10, 0.0, 1, params));
  CHECK_THROWS(make_split(10, 1.5, 1, params));
}

TEST_CASE("growing the dataset keeps earlier scenes") {
  GeneratorParams params;
  const DatasetSplit small = make_split(5, 1.0, 9, params);
  const DatasetSplit big = make_split(8, 1.0, 9, params);
  for (const auto& a : small.labeled) {
    bool found = false;
    for (const auto& b : big.labeled) found |= (a == b);
    CHECK(found);
  }
}

TEST_CASE("scene JSON round trip is exact") {
  const SceneSample s = generate_scene(11, GeneratorParams{}, "rt");
  const fs::path dir = temp_dir("rt");
  write_scene(dir / "rt.json", s);
  const SceneSample back = read_scene(dir / "rt.json");
  CHECK(back == s);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(back.points[i] == s.points[i]);

  SceneSample unlabeled = s;
  unlabeled.labels.reset();
  const Json doc = scene_to_json(unlabeled);
  CHECK(doc.at("labels").is_null());
  CHECK_FALSE(scene_from_json(doc).labels.has_value());

  Json omitted = scene_to_json(s);
  omitted.erase("labels");
  CHECK_FALSE(scene_from_json(omitted).labels.has_value());
}

TEST_CASE("malformed scene documents raise ParseError") {
  Json doc = scene_to_json(generate_scene(2, GeneratorParams{}, "bad"));
  Json missing = doc;
  missing.erase("points");
  CHECK_THROWS_AS(scene_from_json(missing), ParseError);

  Json short_point = doc;
  short_point["points"][0] = Json::array({1.0, 2.0});
  CHECK_THROWS_AS(scene_from_json(short_point), ParseError);

  Json mismatch = doc;
  mismatch["features"].erase(0);
  CHECK_THROWS_AS(scene_from_json(mismatch), ParseError);

  Json bad_box = doc;
  bad_box["labels"][0]["size"] = Json::array({1.0, -1.0, 1.0});
  CHECK_THROWS_AS(scene_from_json(bad_box), ParseError);

  const fs::path dir = temp_dir("bad");
  std::ofstream(dir / "broken.json") << "{\"scene_id\": \"x\", \"points\": [";
  CHECK_THROWS_AS(read_scene(dir / "broken.json"), ParseError);
  CHECK_THROWS_AS(read_scene(dir / "absent.json"), std::runtime_error);

  try {
    scene_from_json(missing);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("points") != std::string::npos);
  }
}

TEST_CASE("dataset directory round trip") {
  GeneratorParams params;
  params.background_points = 32;
  const DatasetSplit split = make_split(6, 0.5, 4, params);
  const fs::path dir = temp_dir("ds");
  write_dataset(dir, split, params, 4);
  CHECK(fs::exists(dir / "split.json"));
  const LoadedDataset back = read_dataset(dir);
  CHECK(back.seed == 4);
  CHECK(back.params == params);
  REQUIRE(back.split.labeled.size() == split.labeled.size());
  REQUIRE(back.split.unlabeled.size() == split.unlabeled.size());
  for (std::size_t i = 0; i < split.labeled.size(); ++i)
    CHECK(back.split.labeled[i] == split.labeled[i]);
  for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
    CHECK(back.split.unlabeled[i] == split.unlabeled[i]);
    CHECK(back.split.hidden_labels[i] == split.hidden_labels[i]);
  }
}

TEST_CASE("generator params JSON round trip") {
  GeneratorParams p;
  p.min_objects = 1;
  p.feature_noise = 0.1 / 3.0;
  p.classes.pop_back();
  CHECK(generator_params_from_json(generator_params_to_json(p)) == p);
}

TEST_CASE("transform_features tracks the moved geometry") {
  const SceneSample s = generate_scene(6, GeneratorParams{}, "tf");
  const Transform3D t{true, false, 0.7, 1.3};
  FeatureMatrix f = s.features;
  transform_features(f, t);
  FeatureMatrix back = f;
  transform_features(back, t.inverse());
  CHECK((back - s.features).cwiseAbs().maxCoeff() < 1e-9);
  // The pattern block is untouched.
  const int p = feature_layout::kPattern;
  CHECK((f.rightCols(f.cols() - p) - s.features.rightCols(f.cols() - p)).cwiseAbs().maxCoeff() == 0.0);
}
