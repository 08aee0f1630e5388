#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidtrack/geometry.hpp"

namespace vidtrack {

enum class Provenance { kNone, kDetected, kTracked };

std::string_view to_string(Provenance p);
/// Parses "detected" / "tracked"; throws std::invalid_argument otherwise.
Provenance provenance_from_string(std::string_view s);

struct Detection {
  int frame = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
  Provenance provenance = Provenance::kNone;
  std::optional<std::int64_t> track_id;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Detections of one video, indexed by frame. Frame indices are contiguous
/// from 0; `frames[t][i].frame == t`.
struct VideoDetectionSet {
  std::string video_id;
  std::vector<std::vector<Detection>> frames;

  std::size_t num_frames() const { return frames.size(); }
  std::size_t num_detections() const;
  /// Grows `frames` so that index t is valid.
  std::vector<Detection>& frame(int t);

  friend bool operator==(const VideoDetectionSet&, const VideoDetectionSet&) = default;
};

/// A tracker output for one source detection.
struct TrackPrediction {
  Detection source;
  /// Index of the source within its frame's candidate list.
  std::size_t source_index = 0;
  int target_frame = 0;
  Box predicted_box;
  /// Predicted IoU of predicted_box with the true box, in [0, 1].
  double quality = 0.0;

  friend bool operator==(const TrackPrediction&, const TrackPrediction&) = default;
};

}  // namespace vidtrack
