#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "vidtrack/detection.hpp"

namespace vidtrack {

enum class LinkMode { kSeqNms, kSeqTrackNms };

std::string_view to_string(LinkMode m);
LinkMode link_mode_from_string(std::string_view s);

/// Next-frame box predicted for every detection, aligned with
/// VideoDetectionSet::frames. nullopt marks a detection without a prediction.
using PredictedBoxes = std::vector<std::vector<std::optional<Box>>>;

/// Consecutive-frame link graph over a video's detections. Nodes are
/// (frame, index-in-frame); edges only go from frame t to t + 1.
struct LinkGraph {
  LinkMode constraint = LinkMode::kSeqNms;
  double iou_threshold = 0.5;
  /// successors[t][i]: ascending indices j in frame t + 1 linked from (t, i).
  std::vector<std::vector<std::vector<std::size_t>>> successors;

  std::size_t num_frames() const { return successors.size(); }
  std::size_t num_nodes() const;
  std::size_t num_edges() const;

  friend bool operator==(const LinkGraph&, const LinkGraph&) = default;
};

/// Links same-class boxes whose overlap across consecutive frames exceeds
/// `iou_thresh`.
LinkGraph build_graph_seqnms(const VideoDetectionSet& video, double iou_thresh = 0.5);

/// Links (t, i) -> (t + 1, j) when the box predicted from (t, i) overlaps
/// box (t + 1, j) by more than `iou_thresh` and both share a class.
LinkGraph build_graph_seqtrack(const VideoDetectionSet& video, const PredictedBoxes& preds,
                               double iou_thresh = 0.5);

/// Aligns predictions (source_index into the frame's detection list) with
/// the video. Throws std::invalid_argument on out-of-range sources.
PredictedBoxes align_predictions(const VideoDetectionSet& video,
                                 const std::vector<std::vector<TrackPrediction>>& per_frame);

struct Tubelet {
  int start_frame = 0;
  /// nodes[k] is the detection index in frame start_frame + k.
  std::vector<std::size_t> nodes;
  double path_score = 0.0;
  double rescored = 0.0;

  std::size_t length() const { return nodes.size(); }
};

using NodeScores = std::vector<std::vector<double>>;

/// Maximum-total-score path through the graph. Equal scores prefer the
/// earliest start frame, then the lexicographically smallest node sequence.
/// `alive` (optional, same shape as scores) masks removed nodes. Returns
/// nullopt when no node is available.
std::optional<Tubelet> best_path(const LinkGraph& graph, const NodeScores& scores,
                                 const std::vector<std::vector<char>>* alive = nullptr);

/// Repeatedly extracts the best path, rescores its members to the path mean
/// and removes them together with same-class boxes overlapping a member by
/// more than `nms_iou` in the member's frame. Returns the rescored path
/// members; suppressed detections are dropped.
VideoDetectionSet rescore_and_suppress(const VideoDetectionSet& video, const LinkGraph& graph,
                                       double nms_iou, std::vector<Tubelet>* tubelets = nullptr);

}  // namespace vidtrack
