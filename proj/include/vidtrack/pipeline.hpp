#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidtrack/detection.hpp"

namespace vidtrack {

/// Class score carried by a tracked box. The source detection's class and
/// score are inherited; `kRefresh` replaces them with those of the
/// best-overlapping detection the box absorbs in the merge, `kMax` does so
/// only when that detection scores higher.
enum class TrackedScore { kInherit, kRefresh, kMax };

std::string_view to_string(TrackedScore m);
TrackedScore tracked_score_from_string(std::string_view s);

/// Thresholds of the detection/tracking fusion. Every numeric value lies in [0, 1].
struct PipelineConfig {
  /// Minimum class score for a detection to be tracked into the next frame.
  double detect_to_track_score = 0.03;
  /// Tracks with a lower predicted IoU are dropped.
  double track_quality_min = 0.5;
  /// NMS among tracked boxes, keyed on predicted IoU.
  double track_nms_iou = 0.7;
  /// A detection survives the merge iff its IoU with every tracked box is below this.
  double t_merge = 0.7;
  double final_score_min = 0.03;
  double final_nms_iou = 0.45;
  /// Inter-frame overlap required to link two boxes into a tubelet.
  double link_iou = 0.5;
  TrackedScore tracked_score = TrackedScore::kRefresh;

  void validate() const;
  /// Sets one field by its config-file key; throws std::invalid_argument for
  /// unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Reads `key = value` lines. Blank lines and `#` comments are ignored.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string to_config_text(const PipelineConfig& cfg);

using ScoreKey = std::function<double(const Detection&)>;

double by_score(const Detection& d);

/// Greedy NMS over parallel box/key arrays; returns kept indices in keep
/// order. Equal keys keep the lower index first.
std::vector<std::size_t> nms_indices(std::span<const Box> boxes, std::span<const double> keys,
                                     double iou_thresh);

/// Class-agnostic greedy NMS.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh,
                           const ScoreKey& key = by_score);

/// Greedy NMS applied independently per class; output keeps input order.
std::vector<Detection> nms_per_class(std::span<const Detection> dets, double iou_thresh);

/// Quality filter followed by quality-keyed NMS. Survivors are detections
/// at the target frame carrying the source's class, score and track id.
std::vector<Detection> filter_tracks(std::span<const TrackPrediction> preds,
                                     const PipelineConfig& cfg);
/// Same selection as filter_tracks, as indices into `preds`.
std::vector<std::size_t> filter_track_indices(std::span<const TrackPrediction> preds,
                                              const PipelineConfig& cfg);

/// Tracking-first merge: every tracked box is kept; a detection is kept iff
/// its IoU with every tracked box is below t_merge. Kept detections receive
/// fresh track ids drawn from `next_track_id`. Tracked scores follow
/// cfg.tracked_score.
std::vector<Detection> tfd_merge(std::span<const Detection> tracked,
                                 std::span<const Detection> detected, const PipelineConfig& cfg,
                                 std::int64_t& next_track_id);

/// Where an emitted detection came from.
struct Origin {
  Provenance provenance = Provenance::kNone;
  /// Index into the frame's detector output (detected) or into the previous
  /// frame's emitted list (tracked).
  std::size_t source_index = 0;

  friend bool operator==(const Origin&, const Origin&) = default;
};

struct FrameState {
  int frame = -1;
  std::vector<Detection> emitted;
  std::vector<Origin> origins;
  /// Predictions from the previous frame's candidates into this frame;
  /// source_index refers to the previous emitted list.
  std::vector<TrackPrediction> predictions;
  std::int64_t next_track_id = 0;

  std::vector<std::pair<std::int64_t, Detection>> active_tracks() const;
};

/// Predicts next-frame boxes for the given candidates of one frame.
using TrackFn = std::function<std::vector<TrackPrediction>(std::span<const Detection>)>;

/// Advances the fusion by one frame.
FrameState step(const FrameState& state, std::span<const Detection> detections_next,
                const TrackFn& track_fn, const PipelineConfig& cfg);

/// Per-frame detector output: score threshold then per-class NMS.
std::vector<Detection> final_detections(std::span<const Detection> dets, const PipelineConfig& cfg);

struct TfdResult {
  VideoDetectionSet merged;
  std::vector<std::vector<Origin>> origins;
  /// predictions[t]: predictions made from merged.frames[t] into frame t + 1,
  /// source_index referring to merged.frames[t].
  std::vector<std::vector<TrackPrediction>> predictions;
};

/// Runs `step` over a whole video.
TfdResult run_tfd(const VideoDetectionSet& dets, const TrackFn& track_fn, const PipelineConfig& cfg);

}  // namespace vidtrack
