#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "vidtrack/detection.hpp"
#include "vidtrack/geometry.hpp"
#include "vidtrack/tensor_ops.hpp"

namespace vidtrack {

/// Fully connected layer, weights laid out [out][in].
struct Linear {
  int out_features = 0;
  int in_features = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  void validate() const;
  std::vector<double> forward(std::span<const double> x) const;
};

/// Parameters of the correlation tracker head.
///
/// Pre-correlation blocks are 1x1 and channel-preserving; with `shared_pre`
/// the template block is applied to both branches and `search_block` is
/// unused. The post-correlation block and the shared head conv keep the
/// correlation map's spatial size. Both FC heads read the flattened head conv
/// output.
struct TrackerWeights {
  bool shared_pre = true;
  ConvBlockWeights template_block;
  ConvBlockWeights search_block;
  ConvBlockWeights post_block;
  ConvLayer head_conv;
  Linear box_fc;
  Linear score_fc;

  static constexpr int kHeadFilters = 256;

  const ConvBlockWeights& search_pre() const { return shared_pre ? template_block : search_block; }
  int input_channels() const { return template_block.conv.in_channels; }

  /// Throws ShapeError unless all shapes chain together for the given
  /// correlation map size.
  void validate(int corr_h, int corr_w) const;
};

struct TrackerConfig {
  double k = 3.0;
  int template_pool = 7;
  int search_pool = 21;
  int tau = 1;
  /// Pyramid level the features are fused to; 0 picks the finest level.
  int fuse_stride = 0;

  void validate() const;
  int correlation_size() const { return search_pool - template_pool + 1; }
};

struct WeightInit {
  int input_channels = 8;
  int post_kernel = 3;
  int head_kernel = 3;
  bool shared_pre = true;
  double range = 0.05;
};

/// Seeded uniform(-range, range) weights with identity batch-norm statistics.
TrackerWeights synthesize_weights(const WeightInit& init, const TrackerConfig& cfg,
                                  std::uint64_t seed);

/// Intermediate tensors of one forward pass.
struct HeadTrace {
  Tensor3 template_features;
  Tensor3 search_features;
  Tensor3 correlation;
  Tensor3 post_correlation;
  Tensor3 head;
  RegressionDelta delta;
  double logit = 0.0;
};

double sigmoid(double x);

/// Runs the head for one box on already fused features.
HeadTrace track_head(const Tensor3& fused_t, const Tensor3& fused_t1, int stride, const Box& box,
                     const TrackerWeights& w, const TrackerConfig& cfg);

/// Predicts where every box of frame t lies in frame t + tau. Output order
/// matches input order.
std::vector<TrackPrediction> track(const FeaturePyramid& feat_t, const FeaturePyramid& feat_t1,
                                   std::span<const Detection> boxes, const TrackerWeights& w,
                                   const TrackerConfig& cfg);

/// (regression target from b_t to g_t1, IoU-score target IoU(p_t1, g_t1)).
std::pair<RegressionDelta, double> tracking_targets(const Box& b_t, const Box& g_t1,
                                                    const Box& p_t1);

double smooth_l1(double x);
double smooth_l1_grad(double x);
double tracking_loss(const std::pair<RegressionDelta, double>& pred,
                     const std::pair<RegressionDelta, double>& target);

/// Noise model of the ground-truth stand-in tracker.
struct NoiseParams {
  /// Center jitter as a fraction of the true box size.
  double center_sigma = 0.0;
  /// Log-space size jitter.
  double scale_sigma = 0.0;
  /// Minimum IoU for a box to be associated with a ground-truth object.
  double match_iou = 0.5;
  /// Unmatched boxes receive quality uniform in [0, unmatched_quality_max).
  double unmatched_quality_max = 0.3;
};

/// Tracker that reads the answer from ground truth: a box associated with a
/// ground-truth object is moved onto that object's box at frame + tau plus
/// seeded noise, with quality equal to the resulting IoU.
std::vector<TrackPrediction> oracle_track(std::span<const Detection> boxes,
                                          const VideoDetectionSet& gt, const NoiseParams& noise,
                                          std::uint64_t seed, int tau = 1);

void save_weights(const std::filesystem::path& path, const TrackerWeights& w);
TrackerWeights load_weights(const std::filesystem::path& path);

}  // namespace vidtrack
