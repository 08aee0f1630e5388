#include "vidtrack/runner.hpp"

#include <stdexcept>
#include <string>

namespace vidtrack {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kDetector:
      return "detector";
    case Variant::kSeqNms:
      return "seqnms";
    case Variant::kTfdSeqNms:
      return "tfd+seqnms";
    case Variant::kTfdSeqTrackNms:
      return "tfd+seqtracknms";
  }
  return "";
}

Variant variant_from_string(std::string_view s) {
  for (Variant v : {Variant::kDetector, Variant::kSeqNms, Variant::kTfdSeqNms, Variant::kTfdSeqTrackNms}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

bool uses_tracker(Variant v) { return v == Variant::kTfdSeqNms || v == Variant::kTfdSeqTrackNms; }

TrackFn make_oracle_tracker(const VideoDetectionSet& gt, const NoiseParams& noise, std::uint64_t seed,
                            int tau) {
  return [gt, noise, seed, tau](std::span<const Detection> boxes) {
    return oracle_track(boxes, gt, noise, seed, tau);
  };
}

TrackFn make_head_tracker(FeatureSource features, TrackerWeights weights, TrackerConfig cfg) {
  return [features = std::move(features), weights = std::move(weights), cfg](
             std::span<const Detection> boxes) -> std::vector<TrackPrediction> {
    if (boxes.empty()) return {};
    const int frame = boxes.front().frame;
    return track(features(frame), features(frame + cfg.tau), boxes, weights, cfg);
  };
}

VideoDetectionSet link_video(const VideoDetectionSet& dets, LinkMode mode, const PipelineConfig& cfg,
                             const PredictedBoxes* preds) {
  VideoDetectionSet input;
  input.video_id = dets.video_id;
  input.frames.resize(dets.frames.size());
  PredictedBoxes kept_preds;
  if (preds != nullptr) kept_preds.resize(dets.frames.size());
  for (std::size_t t = 0; t < dets.frames.size(); ++t) {
    for (std::size_t i = 0; i < dets.frames[t].size(); ++i) {
      if (dets.frames[t][i].score < cfg.final_score_min) continue;
      input.frames[t].push_back(dets.frames[t][i]);
      if (preds != nullptr) {
        kept_preds[t].push_back(t < preds->size() && i < (*preds)[t].size() ? (*preds)[t][i]
                                                                           : std::nullopt);
      }
    }
  }
  LinkGraph graph;
  if (mode == LinkMode::kSeqNms) {
    graph = build_graph_seqnms(input, cfg.link_iou);
  } else {
    if (preds == nullptr) throw std::invalid_argument("Seq-Track-NMS linking needs track predictions");
    graph = build_graph_seqtrack(input, kept_preds, cfg.link_iou);
  }
  return rescore_and_suppress(input, graph, cfg.final_nms_iou);
}

VariantOutput run_variant(const VideoDetectionSet& dets, Variant variant, const PipelineConfig& cfg,
                          const TrackFn* tracker) {
  cfg.validate();
  VariantOutput out;
  switch (variant) {
    case Variant::kDetector: {
      out.final.video_id = dets.video_id;
      for (const auto& frame : dets.frames) out.final.frames.push_back(final_detections(frame, cfg));
      return out;
    }
    case Variant::kSeqNms:
      out.final = link_video(dets, LinkMode::kSeqNms, cfg);
      return out;
    case Variant::kTfdSeqNms:
    case Variant::kTfdSeqTrackNms:
      break;
  }
  if (tracker == nullptr || !*tracker) {
    throw std::invalid_argument(std::string("variant ") + std::string(to_string(variant)) +
                                " needs a tracker");
  }
  out.tfd = run_tfd(dets, *tracker, cfg);
  if (variant == Variant::kTfdSeqNms) {
    out.final = link_video(out.tfd->merged, LinkMode::kSeqNms, cfg);
  } else {
    const PredictedBoxes preds = align_predictions(out.tfd->merged, out.tfd->predictions);
    out.final = link_video(out.tfd->merged, LinkMode::kSeqTrackNms, cfg, &preds);
  }
  return out;
}

}  // namespace vidtrack
