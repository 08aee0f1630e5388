#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidtrack/detection.hpp"
#include "vidtrack/tensor_ops.hpp"

namespace vidtrack {

/// Frames [start, end) where an object's detection score is multiplied by
/// `factor` in (0, 1).
struct DegradationWindow {
  int start = 0;
  int end = 0;
  double factor = 1.0;
};

/// One moving object. Its box at frame t (birth <= t < death) has center
/// (cx + vx * a, cy + vy * a) and size (w, h) * scale_rate^a, a = t - birth.
struct ObjectSpec {
  int class_id = 0;
  int birth = 0;
  int death = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;
  double vx = 0.0;
  double vy = 0.0;
  double scale_rate = 1.0;
  std::vector<DegradationWindow> degradations;

  Box box_at(int frame) const;
  bool alive_at(int frame) const { return frame >= birth && frame < death; }
};

struct DetectorNoise {
  /// Std-dev (px) of the Gaussian jitter on box center and size.
  double jitter_sigma = 0.0;
  double miss_prob = 0.0;
  /// Mean number of false positives per frame (Poisson).
  double fp_rate = 0.0;
  double misclass_prob = 0.0;
  /// True detections score uniform in [score_min, score_max].
  double score_min = 1.0;
  double score_max = 1.0;
  /// False positives score uniform in [fp_score_min, fp_score_max].
  double fp_score_min = 0.05;
  double fp_score_max = 0.5;
};

struct ScenarioSpec {
  std::string video_id = "synth";
  int image_width = 640;
  int image_height = 480;
  int num_frames = 1;
  int num_classes = 1;
  std::vector<ObjectSpec> objects;
  DetectorNoise noise;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on any invariant violation.
  void validate() const;
};

ScenarioSpec load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const ScenarioSpec& spec);
std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& text);

struct GeneratedVideo {
  /// Ground truth, track id = object index.
  VideoDetectionSet gt;
  VideoDetectionSet dets;
};

GeneratedVideo generate(const ScenarioSpec& spec);

struct FeatureRenderOptions {
  std::vector<int> strides{4, 8};
  int channels_per_level = 4;
  double background_amplitude = 0.01;
};

/// Per-object Gaussian blobs over low-amplitude background noise. Object o
/// paints channel o mod channels_per_level of every level.
FeaturePyramid render_features(const ScenarioSpec& spec, int frame,
                               const FeatureRenderOptions& options = {});

/// Ready-made scenarios used by the CLI presets and the acceptance suite.
ScenarioSpec noiseless_scenario(std::uint64_t seed);
/// Score-attenuation windows, jitter, misses and false positives.
ScenarioSpec degraded_scenario(std::uint64_t seed);
/// Like degraded_scenario, with objects moving farther than their own width
/// per frame.
ScenarioSpec fast_motion_scenario(std::uint64_t seed);
ScenarioSpec preset_scenario(const std::string& name, std::uint64_t seed);

}  // namespace vidtrack
