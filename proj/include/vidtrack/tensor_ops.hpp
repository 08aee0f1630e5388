#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "vidtrack/geometry.hpp"

namespace vidtrack {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense channel-major C x H x W array of doubles.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int channels, int height, int width, double fill = 0.0);
  Tensor3(int channels, int height, int width, std::vector<double> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * height_ * width_,
                                                  static_cast<std::size_t>(height_) * width_);
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct PyramidLevel {
  int stride = 1;
  Tensor3 map;

  friend bool operator==(const PyramidLevel&, const PyramidLevel&) = default;
};

/// Multi-stride backbone features of one image. Levels are ordered by
/// strictly increasing stride; each level is about ceil(image / stride).
struct FeaturePyramid {
  int image_height = 0;
  int image_width = 0;
  std::vector<PyramidLevel> levels;

  /// Throws ShapeError when the level invariants do not hold.
  void validate() const;
  const PyramidLevel& level(int stride) const;

  friend bool operator==(const FeaturePyramid&, const FeaturePyramid&) = default;
};

/// Samples per bin axis; 0 selects ceil(bin size) with a minimum of 2.
struct RoiAlignOptions {
  int sampling_ratio = 0;
};

/// Bilinear value of channel `c` at continuous feature coordinates (u, v),
/// where cell (y, x) spans [x, x+1) x [y, y+1). Points outside the map extent
/// read as zero.
double bilinear_sample(const Tensor3& feat, int c, double u, double v);

/// Bin edge lengths in feature cells for pooling `roi` into out_h x out_w.
struct BinSize {
  double height;
  double width;
};
BinSize roi_bin_size(const Box& roi, int out_h, int out_w, double stride);

/// RoIAlign where every bin is the mean over a regular sub-sample grid.
Tensor3 roi_align_full_avg(const Tensor3& feat, const Box& roi, int out_h, int out_w, double stride,
                           const RoiAlignOptions& options = {});

/// RoIAlign with one bilinear sample at each bin center.
Tensor3 roi_align_nearest4(const Tensor3& feat, const Box& roi, int out_h, int out_w,
                           double stride);

/// Per-channel valid cross-correlation of `search` with `templ`.
Tensor3 depthwise_correlate(const Tensor3& templ, const Tensor3& search);

/// 2-D convolution, stride 1, zero same-padding. Kernel size must be odd.
/// Weights are laid out [out][in][ky][kx].
struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 1;
  std::vector<double> weight;
  std::vector<double> bias;

  void validate() const;
};

/// Inference-mode batch normalization with stored statistics.
struct BatchNorm {
  static constexpr double kEpsilon = 1e-5;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;
};

struct ConvBlockWeights {
  ConvLayer conv;
  BatchNorm bn;

  void validate() const;
};

Tensor3 conv2d_same(const Tensor3& input, const ConvLayer& layer);
void relu_inplace(Tensor3& t);
/// conv -> batch norm -> relu.
Tensor3 conv_block(const Tensor3& input, const ConvBlockWeights& weights);

/// Resizes every level to the spatial size of the level with `target_stride`
/// (adaptive max pooling for finer levels, bilinear interpolation for
/// coarser ones) and concatenates channels in stride order.
Tensor3 fuse_pyramid(const FeaturePyramid& pyr, int target_stride);

Tensor3 adaptive_max_pool(const Tensor3& input, int out_h, int out_w);
Tensor3 resize_bilinear(const Tensor3& input, int out_h, int out_w);

}  // namespace vidtrack
