#include "ioumatch/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ioumatch/rng.hpp"
#include "json_util.hpp"

namespace ioumatch {

namespace fl = feature_layout;

void SceneSample::validate() const {
  if (points.empty()) throw std::invalid_argument("scene " + scene_id + " has no points");
  if (static_cast<std::size_t>(features.rows()) != points.size())
    throw std::invalid_argument("scene " + scene_id +
                                ": points and features differ in length");
}

bool SceneSample::operator==(const SceneSample& other) const {
  if (scene_id != other.scene_id || points != other.points) return false;
  if (features.rows() != other.features.rows() ||
      features.cols() != other.features.cols())
    return false;
  return features == other.features && labels == other.labels;
}

void GeneratorParams::validate() const {
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("object count range must satisfy 0 <= min <= max");
  if (classes.empty()) throw std::invalid_argument("at least one class prior is required");
  if (feature_dim < fl::kPattern + num_classes() + 1)
    throw std::invalid_argument("feature_dim too small for the class pattern");
  if (room_half_extent <= 0.0 || room_height <= 0.0)
    throw std::invalid_argument("room extent must be positive");
  if (points_per_object < 1 && max_objects > 0)
    throw std::invalid_argument("points_per_object must be >= 1");
  if (background_points < 0 || feature_noise < 0.0)
    throw std::invalid_argument("background_points and feature_noise must be non-negative");
  for (const auto& c : classes) {
    if ((c.mean_size.array() <= 0.0).any() || c.rel_spread < 0.0 || c.rel_spread >= 1.0)
      throw std::invalid_argument("invalid class prior '" + c.name + "'");
  }
}

void transform_features(FeatureMatrix& features, const Transform3D& t) {
  if (features.cols() < fl::kMinDim) return;
  const double mirror = (t.flip_x != t.flip_y) ? -1.0 : 1.0;
  const double c = std::cos(t.rot_yaw);
  const double s = std::sin(t.rot_yaw);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    auto row = features.row(i);
    row(fl::kLocalOffset + 1) *= mirror;
    for (int a = 0; a < 3; ++a) row(fl::kLocalOffset + a) *= t.scale;

    const Vec3 world(row(fl::kWorldOffset), row(fl::kWorldOffset + 1),
                     row(fl::kWorldOffset + 2));
    const Vec3 moved = apply_transform(world, t);
    for (int a = 0; a < 3; ++a) row(fl::kWorldOffset + a) = moved(a);

    double hc = row(fl::kHeading);
    double hs = row(fl::kHeading + 1);
    if (t.flip_x) hc = -hc;
    if (t.flip_y) hs = -hs;
    row(fl::kHeading) = c * hc - s * hs;
    row(fl::kHeading + 1) = s * hc + c * hs;
  }
}

namespace {

Vec3 sample_surface_local(const Vec3& size, Rng& rng) {
  // Top face and the four sides; the bottom rests on the floor and is unseen.
  const double w = size.x(), l = size.y(), h = size.z();
  const std::array<double, 5> areas = {w * l, l * h, l * h, w * h, w * h};
  std::discrete_distribution<int> pick(areas.begin(), areas.end());
  const int face = pick(rng);
  const double u = uniform(rng, -0.5, 0.5);
  const double v = uniform(rng, -0.5, 0.5);
  switch (face) {
    case 0: return {u * w, v * l, 0.5 * h};
    case 1: return {0.5 * w, u * l, v * h};
    case 2: return {-0.5 * w, u * l, v * h};
    case 3: return {u * w, 0.5 * l, v * h};
    default: return {u * w, -0.5 * l, v * h};
  }
}

}  // namespace

SceneSample generate_scene(std::uint64_t seed, const GeneratorParams& params,
                           const std::string& scene_id) {
  params.validate();
  Rng rng(seed);
  const double extent = params.room_half_extent;

  const int n_objects = std::uniform_int_distribution<int>(
      params.min_objects, params.max_objects)(rng);
  std::vector<LabeledBox> labels;
  labels.reserve(n_objects);
  for (int o = 0; o < n_objects; ++o) {
    bool placed = false;
    for (int attempt = 0; attempt < params.max_placement_retries && !placed; ++attempt) {
      const int cls = std::uniform_int_distribution<int>(0, params.num_classes() - 1)(rng);
      const ClassPrior& prior = params.classes[cls];
      Vec3 size;
      for (int a = 0; a < 3; ++a)
        size(a) = prior.mean_size(a) *
                  (1.0 + uniform(rng, -prior.rel_spread, prior.rel_spread));
      const double yaw = uniform(rng, -kPi, kPi);
      const double reach = 0.5 * std::hypot(size.x(), size.y());
      if (reach >= extent || size.z() > params.room_height) continue;
      const Vec3 center(uniform(rng, -extent + reach, extent - reach),
                        uniform(rng, -extent + reach, extent - reach), 0.5 * size.z());
      const OrientedBox3D box(center, size, yaw);
      const bool clear = std::all_of(labels.begin(), labels.end(), [&](const LabeledBox& other) {
        return iou3d(box, other.box) < params.max_pairwise_iou;
      });
      if (clear) {
        labels.push_back({box, cls});
        placed = true;
      }
    }
    if (!placed)
      throw PlacementError("could not place object " + std::to_string(o) + " of " +
                           std::to_string(n_objects) +
                           " within the retry budget; generator params are too dense");
  }

  const int n_points =
      n_objects * params.points_per_object + params.background_points;
  if (n_points == 0) throw std::invalid_argument("generator params yield an empty scene");

  SceneSample scene;
  scene.scene_id = scene_id;
  scene.points.reserve(n_points);
  scene.features = FeatureMatrix::Zero(n_points, params.feature_dim);

  int row = 0;
  for (const LabeledBox& lb : labels) {
    const Mat3 rot = lb.box.rotation();
    for (int p = 0; p < params.points_per_object; ++p, ++row) {
      const Vec3 local = sample_surface_local(lb.box.size(), rng);
      const Vec3 world_offset = rot * local;
      scene.points.push_back(lb.box.center() + world_offset);
      auto f = scene.features.row(row);
      for (int a = 0; a < 3; ++a) {
        f(fl::kLocalOffset + a) = local(a);
        f(fl::kWorldOffset + a) = world_offset(a);
      }
      f(fl::kHeading) = std::cos(lb.box.yaw());
      f(fl::kHeading + 1) = std::sin(lb.box.yaw());
      f(fl::kPattern + lb.class_id) = 1.0;
    }
  }

  for (int p = 0; p < params.background_points; ++p, ++row) {
    Vec3 q;
    bool clear = false;
    for (int attempt = 0; attempt < params.max_placement_retries && !clear; ++attempt) {
      q = Vec3(uniform(rng, -extent, extent), uniform(rng, -extent, extent),
               uniform(rng, 0.0, params.room_height));
      clear = std::all_of(labels.begin(), labels.end(), [&](const LabeledBox& lb) {
        return point_box_distance(q, lb.box) > params.background_clearance;
      });
    }
    if (!clear) throw PlacementError("could not place background clutter clear of objects");
    scene.points.push_back(q);
    scene.features(row, params.feature_dim - 1) = 1.0;
  }

  if (params.feature_noise > 0.0) {
    for (Eigen::Index i = 0; i < scene.features.rows(); ++i)
      for (Eigen::Index j = 0; j < scene.features.cols(); ++j)
        scene.features(i, j) += normal(rng, 0.0, params.feature_noise);
  }

  scene.labels = std::move(labels);
  return scene;
}

std::size_t labeled_count(std::size_t n_scenes, double label_ratio) {
  const double raw = static_cast<double>(n_scenes) * label_ratio;
  const auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(n_scenes, std::max<std::size_t>(n, 1));
}

std::string scene_id_for_index(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05zu", index);
  return buf;
}

DatasetSplit make_split(std::size_t n_scenes, double label_ratio, std::uint64_t seed,
                        const GeneratorParams& params) {
  if (n_scenes == 0) throw std::invalid_argument("n_scenes must be >= 1");
  if (!(label_ratio > 0.0 && label_ratio <= 1.0))
    throw std::invalid_argument("label_ratio must lie in (0, 1]");

  std::vector<SceneSample> scenes;
  scenes.reserve(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i)
    scenes.push_back(generate_scene(derive_seed(seed, "scene", i), params,
                                    scene_id_for_index(i)));

  std::vector<std::size_t> order(n_scenes);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_labeled = labeled_count(n_scenes, label_ratio);
  std::sort(order.begin(), order.begin() + n_labeled);
  std::sort(order.begin() + n_labeled, order.end());

  DatasetSplit split;
  split.label_ratio = label_ratio;
  for (std::size_t k = 0; k < n_scenes; ++k) {
    SceneSample& s = scenes[order[k]];
    if (k < n_labeled) {
      split.labeled.push_back(std::move(s));
    } else {
      split.hidden_labels.push_back(std::move(*s.labels));
      s.labels.reset();
      split.unlabeled.push_back(std::move(s));
    }
  }
  return split;
}

// ---------------------------------------------------------------- JSON

Json box_to_json(const OrientedBox3D& box) {
  return Json{{"center", detail::vec3_to_json(box.center())},
              {"size", detail::vec3_to_json(box.size())},
              {"yaw", box.yaw()}};
}

OrientedBox3D box_from_json(const Json& doc, const std::string& path) {
  const Vec3 center = detail::vec3_at(detail::require(doc, "center", path), path + ".center");
  const Vec3 size = detail::vec3_at(detail::require(doc, "size", path), path + ".size");
  const double yaw = detail::number_at(detail::require(doc, "yaw", path), path + ".yaw");
  try {
    return OrientedBox3D(center, size, yaw);
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Json scene_to_json(const SceneSample& sample) {
  Json points = Json::array();
  for (const Vec3& p : sample.points) points.push_back(detail::vec3_to_json(p));
  Json features = Json::array();
  for (Eigen::Index i = 0; i < sample.features.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < sample.features.cols(); ++j) row.push_back(sample.features(i, j));
    features.push_back(std::move(row));
  }
  Json labels = nullptr;
  if (sample.labels) {
    labels = Json::array();
    for (const LabeledBox& lb : *sample.labels) {
      Json entry = box_to_json(lb.box);
      entry["class"] = lb.class_id;
      labels.push_back(std::move(entry));
    }
  }
  return Json{{"scene_id", sample.scene_id},
              {"points", std::move(points)},
              {"features", std::move(features)},
              {"labels", std::move(labels)}};
}

SceneSample scene_from_json(const Json& doc) {
  if (!doc.is_object()) throw ParseError("scene: expected a JSON object");
  SceneSample s;
  const Json& id = detail::require(doc, "scene_id", "scene");
  if (!id.is_string()) throw ParseError("scene.scene_id: expected a string");
  s.scene_id = id.get<std::string>();

  const Json& points = detail::require(doc, "points", "scene");
  if (!points.is_array()) throw ParseError("scene.points: expected an array");
  s.points.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    s.points.push_back(detail::vec3_at(points[i], "scene.points[" + std::to_string(i) + "]"));

  const Json& features = detail::require(doc, "features", "scene");
  if (!features.is_array()) throw ParseError("scene.features: expected an array");
  if (features.size() != s.points.size())
    throw ParseError("scene.features: expected " + std::to_string(s.points.size()) +
                     " rows, found " + std::to_string(features.size()));
  const std::size_t dim = features.empty() ? 0 : features[0].size();
  s.features.resize(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string path = "scene.features[" + std::to_string(i) + "]";
    if (!features[i].is_array() || features[i].size() != dim)
      throw ParseError(path + ": expected " + std::to_string(dim) + " numbers");
    for (std::size_t j = 0; j < dim; ++j)
      s.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::number_at(features[i][j], path + "[" + std::to_string(j) + "]");
  }

  auto it = doc.find("labels");
  if (it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("scene.labels: expected an array or null");
    std::vector<LabeledBox> labels;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "scene.labels[" + std::to_string(i) + "]";
      const Json& entry = (*it)[i];
      if (!entry.is_object()) throw ParseError(path + ": expected an object");
      const Json& cls = detail::require(entry, "class", path);
      if (!cls.is_number_integer()) throw ParseError(path + ".class: expected an integer");
      labels.push_back({box_from_json(entry, path), cls.get<int>()});
    }
    s.labels = std::move(labels);
  }
  if (s.points.empty()) throw ParseError("scene.points: a scene needs at least one point");
  return s;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_scene(const std::filesystem::path& path, const SceneSample& sample) {
  write_json_file(path, scene_to_json(sample));
}

SceneSample read_scene(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  try {
    return scene_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Json generator_params_to_json(const GeneratorParams& p) {
  Json classes = Json::array();
  for (const ClassPrior& c : p.classes)
    classes.push_back({{"name", c.name},
                       {"mean_size", detail::vec3_to_json(c.mean_size)},
                       {"rel_spread", c.rel_spread}});
  return Json{{"min_objects", p.min_objects},
              {"max_objects", p.max_objects},
              {"classes", std::move(classes)},
              {"room_half_extent", p.room_half_extent},
              {"room_height", p.room_height},
              {"points_per_object", p.points_per_object},
              {"background_points", p.background_points},
              {"background_clearance", p.background_clearance},
              {"feature_dim", p.feature_dim},
              {"feature_noise", p.feature_noise},
              {"max_pairwise_iou", p.max_pairwise_iou},
              {"max_placement_retries", p.max_placement_retries}};
}

GeneratorParams generator_params_from_json(const Json& doc) {
  const std::string path = "generator";
  if (!doc.is_object()) throw ParseError(path + ": expected an object");
  GeneratorParams p;
  detail::read_optional(doc, "min_objects", path, p.min_objects);
  detail::read_optional(doc, "max_objects", path, p.max_objects);
  detail::read_optional(doc, "room_half_extent", path, p.room_half_extent);
  detail::read_optional(doc, "room_height", path, p.room_height);
  detail::read_optional(doc, "points_per_object", path, p.points_per_object);
  detail::read_optional(doc, "background_points", path, p.background_points);
  detail::read_optional(doc, "background_clearance", path, p.background_clearance);
  detail::read_optional(doc, "feature_dim", path, p.feature_dim);
  detail::read_optional(doc, "feature_noise", path, p.feature_noise);
  detail::read_optional(doc, "max_pairwise_iou", path, p.max_pairwise_iou);
  detail::read_optional(doc, "max_placement_retries", path, p.max_placement_retries);
  if (auto it = doc.find("classes"); it != doc.end()) {
    if (!it->is_array()) throw ParseError(path + ".classes: expected an array");
    p.classes.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string cpath = path + ".classes[" + std::to_string(i) + "]";
      const Json& c = (*it)[i];
      ClassPrior prior;
      const Json& name = detail::require(c, "name", cpath);
      if (!name.is_string()) throw ParseError(cpath + ".name: expected a string");
      prior.name = name.get<std::string>();
      prior.mean_size = detail::vec3_at(detail::require(c, "mean_size", cpath), cpath + ".mean_size");
      detail::read_optional(c, "rel_spread", cpath, prior.rel_spread);
      p.classes.push_back(std::move(prior));
    }
  }
  return p;
}

void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split,
                   const GeneratorParams& params, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Json labeled = Json::array();
  Json unlabeled = Json::array();
  for (const SceneSample& s : split.labeled) {
    write_scene(dir / (s.scene_id + ".json"), s);
    labeled.push_back(s.scene_id);
  }
  for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
    // Files keep the hidden ground truth; the split decides who may see it.
    SceneSample s = split.unlabeled[i];
    s.labels = split.hidden_labels.at(i);
    write_scene(dir / (s.scene_id + ".json"), s);
    unlabeled.push_back(s.scene_id);
  }
  write_json_file(dir / "split.json",
                  Json{{"label_ratio", split.label_ratio},
                       {"seed", seed},
                       {"labeled", std::move(labeled)},
                       {"unlabeled", std::move(unlabeled)},
                       {"generator", generator_params_to_json(params)}});
}

LoadedDataset read_dataset(const std::filesystem::path& dir) {
  const Json doc = read_json_file(dir / "split.json");
  const std::string path = "split";
  LoadedDataset out;
  out.split.label_ratio =
      detail::number_at(detail::require(doc, "label_ratio", path), path + ".label_ratio");
  const Json& seed = detail::require(doc, "seed", path);
  if (!seed.is_number_unsigned() && !seed.is_number_integer())
    throw ParseError(path + ".seed: expected an integer");
  out.seed = seed.get<std::uint64_t>();
  out.params = generator_params_from_json(detail::require(doc, "generator", path));

  auto load_ids = [&](const char* key) {
    const Json& ids = detail::require(doc, key, path);
    if (!ids.is_array()) throw ParseError(path + "." + key + ": expected an array");
    std::vector<SceneSample> scenes;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!ids[i].is_string())
        throw ParseError(path + "." + key + "[" + std::to_string(i) + "]: expected a string");
      scenes.push_back(read_scene(dir / (ids[i].get<std::string>() + ".json")));
    }
    return scenes;
  };
  out.split.labeled = load_ids("labeled");
  for (const SceneSample& s : out.split.labeled)
    if (!s.labels) throw ParseError(s.scene_id + ": labeled scene without labels");
  out.split.unlabeled = load_ids("unlabeled");
  for (SceneSample& s : out.split.unlabeled) {
    out.split.hidden_labels.push_back(s.labels.value_or(std::vector<LabeledBox>{}));
    s.labels.reset();
  }
  return out;
}

}  // namespace ioumatch
