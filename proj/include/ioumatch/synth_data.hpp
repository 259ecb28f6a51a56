#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ioumatch/geometry.hpp"
#include "json.hpp"

namespace ioumatch {

using Json = nlohmann::json;
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Malformed scene/dataset/parameter document. The message carries the field
/// path (or the parser's byte offset) of the first problem found.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the generator cannot place objects within its retry budget.
class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledBox {
  OrientedBox3D box;
  int class_id = 0;

  bool operator==(const LabeledBox&) const = default;
};

/// Point cloud with one feature row per point and optional ground truth.
struct SceneSample {
  std::string scene_id;
  std::vector<Vec3> points;
  FeatureMatrix features;  // points.size() x F
  std::optional<std::vector<LabeledBox>> labels;

  std::size_t size() const { return points.size(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  void validate() const;

  bool operator==(const SceneSample& other) const;
};

struct ClassPrior {
  std::string name;
  Vec3 mean_size;
  double rel_spread = 0.15;  // each axis drawn from mean * (1 +- spread)

  bool operator==(const ClassPrior&) const = default;
};

struct GeneratorParams {
  int min_objects = 2;
  int max_objects = 5;
  std::vector<ClassPrior> classes = {
      {"chair", Vec3(0.6, 0.6, 0.9), 0.15},
      {"table", Vec3(1.4, 0.8, 0.75), 0.15},
      {"bed", Vec3(2.0, 1.5, 0.6), 0.15},
  };
  double room_half_extent = 3.0;  // x, y in [-e, e]
  double room_height = 2.5;       // z in [0, h]
  int points_per_object = 64;
  int background_points = 128;
  double background_clearance = 0.05;
  int feature_dim = 16;
  double feature_noise = 0.02;
  double max_pairwise_iou = 0.05;
  int max_placement_retries = 200;

  int num_classes() const { return static_cast<int>(classes.size()); }
  void validate() const;

  bool operator==(const GeneratorParams&) const = default;
};

/// Fixed layout of the generated per-point features.
///
/// Object points carry their offset from the owning box center (box frame and
/// world frame), the box heading, and a one-hot class pattern; background
/// points carry zeros in the geometric channels and a dedicated pattern slot.
/// Gaussian noise is added to every channel.
namespace feature_layout {
inline constexpr int kLocalOffset = 0;  // 3 channels, box frame
inline constexpr int kWorldOffset = 3;  // 3 channels, world frame
inline constexpr int kHeading = 6;      // cos(yaw), sin(yaw)
inline constexpr int kPattern = 8;      // class one-hot, background in last slot
inline constexpr int kMinDim = kPattern + 2;
}  // namespace feature_layout

/// Re-expresses the geometric feature channels after the scene is moved by t,
/// so that features stay consistent with the transformed points.
void transform_features(FeatureMatrix& features, const Transform3D& t);

/// Deterministic scene from (seed, params). Throws PlacementError when the
/// objects cannot be placed without overlap.
SceneSample generate_scene(std::uint64_t seed, const GeneratorParams& params,
                           const std::string& scene_id = "scene");

struct DatasetSplit {
  std::vector<SceneSample> labeled;
  /// Unlabeled scenes have labels stripped; their ground truth lives in
  /// hidden_labels (same order) for evaluation only.
  std::vector<SceneSample> unlabeled;
  std::vector<std::vector<LabeledBox>> hidden_labels;
  double label_ratio = 1.0;
};

/// Number of labeled scenes for a split, ceil(n * ratio) guarded against
/// floating-point noise.
std::size_t labeled_count(std::size_t n_scenes, double label_ratio);

/// Scene i is generated from derive_seed(seed, "scene", i), so growing
/// n_scenes never changes earlier scenes.
DatasetSplit make_split(std::size_t n_scenes, double label_ratio,
                        std::uint64_t seed, const GeneratorParams& params);

std::string scene_id_for_index(std::size_t index);

Json scene_to_json(const SceneSample& sample);
SceneSample scene_from_json(const Json& doc);
void write_scene(const std::filesystem::path& path, const SceneSample& sample);
SceneSample read_scene(const std::filesystem::path& path);

Json generator_params_to_json(const GeneratorParams& params);
GeneratorParams generator_params_from_json(const Json& doc);

Json box_to_json(const OrientedBox3D& box);
OrientedBox3D box_from_json(const Json& doc, const std::string& path);

/// Writes one <scene_id>.json per scene plus split.json.
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split,
                   const GeneratorParams& params, std::uint64_t seed);

struct LoadedDataset {
  DatasetSplit split;
  GeneratorParams params;
  std::uint64_t seed = 0;
};
LoadedDataset read_dataset(const std::filesystem::path& dir);

/// Reads a JSON document from disk, wrapping parse failures in ParseError.
Json read_json_file(const std::filesystem::path& path);
/// Writes compact JSON followed by a newline.
void write_json_file(const std::filesystem::path& path, const Json& doc);

}  // namespace ioumatch
