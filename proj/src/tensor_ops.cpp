#include "vidtrack/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vidtrack {

Tensor3::Tensor3(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("tensor dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Tensor3::Tensor3(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("tensor dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(channels) + "x" + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

void FeaturePyramid::validate() const {
  if (levels.empty()) throw ShapeError("empty feature pyramid");
  if (image_height <= 0 || image_width <= 0) throw ShapeError("pyramid image size must be positive");
  int prev = 0;
  for (const auto& lvl : levels) {
    if (lvl.stride <= prev) throw ShapeError("pyramid strides must be positive and increasing");
    prev = lvl.stride;
    if (lvl.map.empty()) throw ShapeError("pyramid level has no data");
    const int eh = (image_height + lvl.stride - 1) / lvl.stride;
    const int ew = (image_width + lvl.stride - 1) / lvl.stride;
    if (std::abs(lvl.map.height() - eh) > 1 || std::abs(lvl.map.width() - ew) > 1) {
      throw ShapeError("level with stride " + std::to_string(lvl.stride) + " has size " +
                       std::to_string(lvl.map.height()) + "x" + std::to_string(lvl.map.width()) +
                       ", expected about " + std::to_string(eh) + "x" + std::to_string(ew));
    }
  }
}

const PyramidLevel& FeaturePyramid::level(int stride) const {
  for (const auto& lvl : levels) {
    if (lvl.stride == stride) return lvl;
  }
  throw ShapeError("no pyramid level with stride " + std::to_string(stride));
}

double bilinear_sample(const Tensor3& feat, int c, double u, double v) {
  const int h = feat.height();
  const int w = feat.width();
  if (u < 0.0 || v < 0.0 || u > w || v > h) return 0.0;
  // Cell centers sit at half-integer coordinates.
  const double fx = std::clamp(u - 0.5, 0.0, static_cast<double>(w - 1));
  const double fy = std::clamp(v - 0.5, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double lx = fx - x0;
  const double ly = fy - y0;
  const double top = (1.0 - lx) * feat.at(c, y0, x0) + lx * feat.at(c, y0, x1);
  const double bottom = (1.0 - lx) * feat.at(c, y1, x0) + lx * feat.at(c, y1, x1);
  return (1.0 - ly) * top + ly * bottom;
}

BinSize roi_bin_size(const Box& roi, int out_h, int out_w, double stride) {
  return {roi.h() / stride / out_h, roi.w() / stride / out_w};
}

namespace {

void check_pool_args(int out_h, int out_w, double stride) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("pooled size must be >= 1");
  if (!(stride > 0.0)) throw std::invalid_argument("stride must be positive");
}

int samples_for(double bin_extent, int ratio) {
  if (ratio > 0) return ratio;
  return std::max(2, static_cast<int>(std::ceil(bin_extent)));
}

}  // namespace

Tensor3 roi_align_full_avg(const Tensor3& feat, const Box& roi, int out_h, int out_w, double stride,
                           const RoiAlignOptions& options) {
  check_pool_args(out_h, out_w, stride);
  Tensor3 out(feat.channels(), out_h, out_w);
  if (!roi.has_positive_area()) return out;

  const BinSize bin = roi_bin_size(roi, out_h, out_w, stride);
  const double u0 = roi.x1() / stride;
  const double v0 = roi.y1() / stride;
  const int sy = samples_for(bin.height, options.sampling_ratio);
  const int sx = samples_for(bin.width, options.sampling_ratio);
  const double inv = 1.0 / (static_cast<double>(sy) * sx);

  for (int c = 0; c < feat.channels(); ++c) {
    for (int by = 0; by < out_h; ++by) {
      for (int bx = 0; bx < out_w; ++bx) {
        double acc = 0.0;
        for (int iy = 0; iy < sy; ++iy) {
          const double v = v0 + (by + (iy + 0.5) / sy) * bin.height;
          for (int ix = 0; ix < sx; ++ix) {
            const double u = u0 + (bx + (ix + 0.5) / sx) * bin.width;
            acc += bilinear_sample(feat, c, u, v);
          }
        }
        out.at(c, by, bx) = acc * inv;
      }
    }
  }
  return out;
}

Tensor3 roi_align_nearest4(const Tensor3& feat, const Box& roi, int out_h, int out_w,
                           double stride) {
  check_pool_args(out_h, out_w, stride);
  Tensor3 out(feat.channels(), out_h, out_w);
  if (!roi.has_positive_area()) return out;

  const BinSize bin = roi_bin_size(roi, out_h, out_w, stride);
  const double u0 = roi.x1() / stride;
  const double v0 = roi.y1() / stride;
  for (int c = 0; c < feat.channels(); ++c) {
    for (int by = 0; by < out_h; ++by) {
      const double v = v0 + (by + 0.5) * bin.height;
      for (int bx = 0; bx < out_w; ++bx) {
        out.at(c, by, bx) = bilinear_sample(feat, c, u0 + (bx + 0.5) * bin.width, v);
      }
    }
  }
  return out;
}

Tensor3 depthwise_correlate(const Tensor3& templ, const Tensor3& search) {
  if (templ.channels() != search.channels()) {
    throw ShapeError("correlation channel mismatch: " + std::to_string(templ.channels()) + " vs " +
                     std::to_string(search.channels()));
  }
  if (templ.height() > search.height() || templ.width() > search.width()) {
    throw ShapeError("correlation template larger than search region");
  }
  const int oh = search.height() - templ.height() + 1;
  const int ow = search.width() - templ.width() + 1;
  Tensor3 out(templ.channels(), oh, ow);
  for (int c = 0; c < templ.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int i = 0; i < templ.height(); ++i) {
          for (int j = 0; j < templ.width(); ++j) {
            acc += templ.at(c, i, j) * search.at(c, y + i, x + j);
          }
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

void ConvLayer::validate() const {
  if (out_channels <= 0 || in_channels <= 0) throw ShapeError("conv channel counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("conv kernel size must be odd");
  const auto expected = static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  if (weight.size() != expected) {
    throw ShapeError("conv weight has " + std::to_string(weight.size()) + " values, expected " +
                     std::to_string(expected));
  }
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("conv bias length mismatch");
  }
}

void ConvBlockWeights::validate() const {
  conv.validate();
  const auto n = static_cast<std::size_t>(conv.out_channels);
  if (bn.gamma.size() != n || bn.beta.size() != n || bn.mean.size() != n || bn.var.size() != n) {
    throw ShapeError("batch-norm parameter length mismatch");
  }
}

Tensor3 conv2d_same(const Tensor3& input, const ConvLayer& layer) {
  layer.validate();
  if (input.channels() != layer.in_channels) {
    throw ShapeError("conv expects " + std::to_string(layer.in_channels) + " input channels, got " +
                     std::to_string(input.channels()));
  }
  const int h = input.height();
  const int w = input.width();
  const int k = layer.kernel;
  const int pad = k / 2;
  Tensor3 out(layer.out_channels, h, w);
  for (int o = 0; o < layer.out_channels; ++o) {
    const double b = layer.bias.empty() ? 0.0 : layer.bias[o];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = b;
        for (int i = 0; i < layer.in_channels; ++i) {
          const double* wk = &layer.weight[((static_cast<std::size_t>(o) * layer.in_channels + i) * k) * k];
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x + kx - pad;
              if (sx < 0 || sx >= w) continue;
              acc += wk[ky * k + kx] * input.at(i, sy, sx);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.data()) v = std::max(0.0, v);
}

Tensor3 conv_block(const Tensor3& input, const ConvBlockWeights& weights) {
  weights.validate();
  Tensor3 out = conv2d_same(input, weights.conv);
  const auto& bn = weights.bn;
  for (int c = 0; c < out.channels(); ++c) {
    const double scale = bn.gamma[c] / std::sqrt(bn.var[c] + BatchNorm::kEpsilon);
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        double& v = out.at(c, y, x);
        v = std::max(0.0, scale * (v - bn.mean[c]) + bn.beta[c]);
      }
    }
  }
  return out;
}

Tensor3 adaptive_max_pool(const Tensor3& input, int out_h, int out_w) {
  const int h = input.height();
  const int w = input.width();
  Tensor3 out(input.channels(), out_h, out_w);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const int ys = (y * h) / out_h;
      const int ye = std::max(ys + 1, ((y + 1) * h + out_h - 1) / out_h);
      for (int x = 0; x < out_w; ++x) {
        const int xs = (x * w) / out_w;
        const int xe = std::max(xs + 1, ((x + 1) * w + out_w - 1) / out_w);
        double m = -std::numeric_limits<double>::infinity();
        for (int sy = ys; sy < std::min(ye, h); ++sy) {
          for (int sx = xs; sx < std::min(xe, w); ++sx) m = std::max(m, input.at(c, sy, sx));
        }
        out.at(c, y, x) = m;
      }
    }
  }
  return out;
}

Tensor3 resize_bilinear(const Tensor3& input, int out_h, int out_w) {
  const int h = input.height();
  const int w = input.width();
  const double ry = static_cast<double>(h) / out_h;
  const double rx = static_cast<double>(w) / out_w;
  Tensor3 out(input.channels(), out_h, out_w);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const double fy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ly = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double fx = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double lx = fx - x0;
        const double top = (1.0 - lx) * input.at(c, y0, x0) + lx * input.at(c, y0, x1);
        const double bottom = (1.0 - lx) * input.at(c, y1, x0) + lx * input.at(c, y1, x1);
        out.at(c, y, x) = (1.0 - ly) * top + ly * bottom;
      }
    }
  }
  return out;
}

Tensor3 fuse_pyramid(const FeaturePyramid& pyr, int target_stride) {
  if (pyr.levels.empty()) throw ShapeError("empty feature pyramid");
  const Tensor3& target = pyr.level(target_stride).map;
  if (pyr.levels.size() == 1) return target;

  const int th = target.height();
  const int tw = target.width();
  int total_channels = 0;
  for (const auto& lvl : pyr.levels) total_channels += lvl.map.channels();

  Tensor3 out(total_channels, th, tw);
  int offset = 0;
  for (const auto& lvl : pyr.levels) {
    Tensor3 resized;
    if (lvl.stride < target_stride) {
      resized = adaptive_max_pool(lvl.map, th, tw);
    } else if (lvl.stride > target_stride) {
      resized = resize_bilinear(lvl.map, th, tw);
    } else {
      resized = lvl.map;
    }
    auto src = resized.data();
    std::copy(src.begin(), src.end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(offset) * th * tw);
    offset += resized.channels();
  }
  return out;
}

}  // namespace vidtrack
