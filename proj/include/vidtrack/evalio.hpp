#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidtrack/detection.hpp"
#include "vidtrack/tensor_ops.hpp"

namespace vidtrack {

/// Malformed input file. `line()` is 1-based, 0 when not line oriented.
/// The message reads "<source>:<line>: <detail>" with empty parts omitted.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& detail, int line = 0, const std::string& source = "");
  int line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  int line_;
  std::string detail_;
};

// Detection files are JSON Lines, one detection per line:
//   {"video": str, "frame": int, "class": int, "score": real,
//    "box": [x1, y1, x2, y2], "track": int|null, "provenance": str|null}
// A line {"video": str, "frames": int} declares a video's frame count so
// trailing empty frames survive a round trip.
void write_detections(std::ostream& os, const std::vector<VideoDetectionSet>& videos);
std::vector<VideoDetectionSet> read_detections(std::istream& is);
void save_detections(const std::filesystem::path& path, const std::vector<VideoDetectionSet>& videos);
std::vector<VideoDetectionSet> load_detections(const std::filesystem::path& path);

// Track prediction files are JSON Lines with one record per prediction:
//   {"video", "frame", "index", "class", "score", "box", "track",
//    "target_frame", "pred_box", "quality"}
// where (frame, index) locate the source detection.
using VideoPredictions = std::vector<std::vector<TrackPrediction>>;
void save_predictions(const std::filesystem::path& path,
                      const std::map<std::string, VideoPredictions>& preds);
std::map<std::string, VideoPredictions> load_predictions(const std::filesystem::path& path);

// Feature files (little-endian):
//   "VTFP" | u32 version=1 | u32 elem_bytes (4 or 8) | u32 image_h | u32 image_w
//   | u32 levels | levels x {u32 stride, u32 C, u32 H, u32 W}
//   | level payloads in order, each C*H*W reals, channel-major.
void write_features(std::ostream& os, const FeaturePyramid& pyr, int elem_bytes = 8);
FeaturePyramid read_features(std::istream& is);
void save_features(const std::filesystem::path& path, const FeaturePyramid& pyr, int elem_bytes = 8);
FeaturePyramid load_features(const std::filesystem::path& path);
/// <dir>/<video>/<frame, 6 digits>.vtf
std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& video,
                                   int frame);

struct EvalResult {
  double iou_threshold = 0.5;
  /// AP of every class with at least one ground-truth instance.
  std::map<int, double> ap;
  std::map<int, int> gt_count;
  double map = 0.0;
};

/// Per-class average precision (area under the precision envelope) and its
/// mean. Predictions are ranked by score, equal scores in input order;
/// each is matched to the highest-IoU unmatched ground truth of its class
/// in the same video and frame.
EvalResult evaluate_map(const std::vector<VideoDetectionSet>& preds,
                        const std::vector<VideoDetectionSet>& gt, double iou_thresh = 0.5);
EvalResult evaluate_map(const VideoDetectionSet& preds, const VideoDetectionSet& gt,
                        double iou_thresh = 0.5);

/// All-point interpolated AP from a ranked TP/FP sequence.
double average_precision(const std::vector<bool>& ranked_tp, int num_gt);

}  // namespace vidtrack
