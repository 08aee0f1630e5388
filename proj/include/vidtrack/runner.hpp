#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

#include "vidtrack/linker.hpp"
#include "vidtrack/pipeline.hpp"
#include "vidtrack/tracker.hpp"

namespace vidtrack {

/// Ablation rows: plain detector, detector + Seq-NMS, TFD + Seq-NMS and
/// TFD + Seq-Track-NMS.
enum class Variant { kDetector, kSeqNms, kTfdSeqNms, kTfdSeqTrackNms };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);
bool uses_tracker(Variant v);

TrackFn make_oracle_tracker(const VideoDetectionSet& gt, const NoiseParams& noise, std::uint64_t seed,
                            int tau = 1);

using FeatureSource = std::function<FeaturePyramid(int frame)>;
TrackFn make_head_tracker(FeatureSource features, TrackerWeights weights, TrackerConfig cfg);

/// Thresholds the detections, links them and rescores the tubelets.
VideoDetectionSet link_video(const VideoDetectionSet& dets, LinkMode mode, const PipelineConfig& cfg,
                             const PredictedBoxes* preds = nullptr);

struct VariantOutput {
  VideoDetectionSet final;
  std::optional<TfdResult> tfd;
};

/// `tracker` is required by the TFD variants and ignored otherwise.
VariantOutput run_variant(const VideoDetectionSet& dets, Variant variant, const PipelineConfig& cfg,
                          const TrackFn* tracker = nullptr);

}  // namespace vidtrack
