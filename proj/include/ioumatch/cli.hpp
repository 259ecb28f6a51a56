#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ioumatch/detector.hpp"
#include "ioumatch/ssl_loop.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

/// Everything that determines an experiment. Sub-seeds of the pretraining and
/// SSL stages are derived from `seed` by the commands, so the stage seeds
/// stored here are overwritten at run time.
struct ExperimentConfig {
  GeneratorParams generator;
  std::size_t scenes = 200;
  double label_ratio = 0.1;
  std::size_t heldout_scenes = 50;
  DetectorConfig detector;
  PretrainConfig pretrain;
  int pretrain_eval_interval = 10;
  SSLConfig ssl;
  std::vector<double> eval_thresholds{0.25, 0.5};
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

Json experiment_config_to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; malformed ones raise ParseError with the
/// field path.
ExperimentConfig experiment_config_from_json(const Json& doc);

/// Settings of the reference synthetic benchmark (200 scenes, 10% labeled).
ExperimentConfig reference_benchmark_config();

/// Held-out evaluation scenes for a dataset, generated from its seed.
std::vector<SceneSample> heldout_scenes(const GeneratorParams& params, std::uint64_t seed,
                                        std::size_t n);

/// Runs one command line (args excludes the program name). Exit codes: 0 on
/// success, 1 on runtime errors or failed diagnostics, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace ioumatch
