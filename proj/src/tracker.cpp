#include "vidtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vidtrack/array_file.hpp"

namespace vidtrack {

void Linear::validate() const {
  if (out_features <= 0 || in_features <= 0) throw ShapeError("linear layer sizes must be positive");
  if (weight.size() != static_cast<std::size_t>(out_features) * in_features) {
    throw ShapeError("linear weight has " + std::to_string(weight.size()) + " values, expected " +
                     std::to_string(static_cast<std::size_t>(out_features) * in_features));
  }
  if (bias.size() != static_cast<std::size_t>(out_features)) throw ShapeError("linear bias length mismatch");
}

std::vector<double> Linear::forward(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(in_features)) {
    throw ShapeError("linear layer expects " + std::to_string(in_features) + " inputs, got " +
                     std::to_string(x.size()));
  }
  std::vector<double> y(bias);
  for (int o = 0; o < out_features; ++o) {
    const double* row = &weight[static_cast<std::size_t>(o) * in_features];
    double acc = 0.0;
    for (int i = 0; i < in_features; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
  return y;
}

void TrackerWeights::validate(int corr_h, int corr_w) const {
  template_block.validate();
  const int c = template_block.conv.in_channels;
  if (template_block.conv.out_channels != c) {
    throw ShapeError("pre-correlation block must preserve channel count");
  }
  if (!shared_pre) {
    search_block.validate();
    if (search_block.conv.in_channels != c || search_block.conv.out_channels != c) {
      throw ShapeError("search pre-correlation block channel mismatch");
    }
  }
  post_block.validate();
  if (post_block.conv.in_channels != c || post_block.conv.out_channels != c) {
    throw ShapeError("post-correlation block channel mismatch");
  }
  head_conv.validate();
  if (head_conv.in_channels != c) throw ShapeError("head conv input channel mismatch");
  box_fc.validate();
  score_fc.validate();
  const int flat = head_conv.out_channels * corr_h * corr_w;
  if (box_fc.in_features != flat || score_fc.in_features != flat) {
    throw ShapeError("FC heads expect " + std::to_string(box_fc.in_features) +
                     " inputs but the head produces " + std::to_string(flat));
  }
  if (box_fc.out_features != 4 || score_fc.out_features != 1) {
    throw ShapeError("FC heads must output 4 box deltas and 1 score");
  }
}

void TrackerConfig::validate() const {
  if (!(k >= 1.0)) throw std::invalid_argument("search expansion k must be >= 1");
  if (template_pool < 1 || search_pool < template_pool) {
    throw std::invalid_argument("invalid template/search pooled sizes");
  }
  if (std::abs(k * template_pool - search_pool) > 1e-9) {
    throw std::invalid_argument("search pooled size must equal k times the template size");
  }
  if (tau < 1) throw std::invalid_argument("frame gap must be >= 1");
}

namespace {

using Uniform = std::uniform_real_distribution<double>;

std::vector<double> draw(std::mt19937_64& rng, Uniform& dist, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

ConvBlockWeights make_block(std::mt19937_64& rng, Uniform& dist, int in, int out, int kernel) {
  ConvBlockWeights b;
  b.conv = {out, in, kernel, draw(rng, dist, static_cast<std::size_t>(out) * in * kernel * kernel),
            draw(rng, dist, out)};
  b.bn.gamma.assign(out, 1.0);
  b.bn.beta.assign(out, 0.0);
  b.bn.mean.assign(out, 0.0);
  b.bn.var.assign(out, 1.0);
  return b;
}

}  // namespace

TrackerWeights synthesize_weights(const WeightInit& init, const TrackerConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Uniform dist(-init.range, init.range);
  const int c = init.input_channels;
  const int corr = cfg.correlation_size();
  const int flat = TrackerWeights::kHeadFilters * corr * corr;

  TrackerWeights w;
  w.shared_pre = init.shared_pre;
  w.template_block = make_block(rng, dist, c, c, 1);
  if (!init.shared_pre) w.search_block = make_block(rng, dist, c, c, 1);
  w.post_block = make_block(rng, dist, c, c, init.post_kernel);
  w.head_conv = {TrackerWeights::kHeadFilters, c, init.head_kernel,
                 draw(rng, dist, static_cast<std::size_t>(TrackerWeights::kHeadFilters) * c *
                                     init.head_kernel * init.head_kernel),
                 draw(rng, dist, TrackerWeights::kHeadFilters)};
  w.box_fc = {4, flat, draw(rng, dist, static_cast<std::size_t>(4) * flat), draw(rng, dist, 4)};
  w.score_fc = {1, flat, draw(rng, dist, flat), draw(rng, dist, 1)};
  return w;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

HeadTrace track_head(const Tensor3& fused_t, const Tensor3& fused_t1, int stride, const Box& box,
                     const TrackerWeights& w, const TrackerConfig& cfg) {
  if (!box.has_positive_area()) throw std::domain_error("tracked box must have positive area");
  HeadTrace tr;
  tr.template_features = roi_align_full_avg(fused_t, box, cfg.template_pool, cfg.template_pool, stride);
  tr.search_features =
      roi_align_full_avg(fused_t1, expand(box, cfg.k), cfg.search_pool, cfg.search_pool, stride);
  const Tensor3 templ = conv_block(tr.template_features, w.template_block);
  const Tensor3 search = conv_block(tr.search_features, w.search_pre());
  tr.correlation = depthwise_correlate(templ, search);
  tr.post_correlation = conv_block(tr.correlation, w.post_block);
  tr.head = conv2d_same(tr.post_correlation, w.head_conv);
  relu_inplace(tr.head);

  const auto d = w.box_fc.forward(tr.head.data());
  tr.delta = {d[0], d[1], d[2], d[3]};
  tr.logit = w.score_fc.forward(tr.head.data())[0];
  return tr;
}

std::vector<TrackPrediction> track(const FeaturePyramid& feat_t, const FeaturePyramid& feat_t1,
                                   std::span<const Detection> boxes, const TrackerWeights& w,
                                   const TrackerConfig& cfg) {
  cfg.validate();
  if (boxes.empty()) return {};
  feat_t.validate();
  feat_t1.validate();
  if (feat_t.image_height != feat_t1.image_height || feat_t.image_width != feat_t1.image_width) {
    throw ShapeError("feature pyramids come from images of different sizes");
  }
  const int stride = cfg.fuse_stride > 0 ? cfg.fuse_stride : feat_t.levels.front().stride;
  const Tensor3 fused_t = fuse_pyramid(feat_t, stride);
  const Tensor3 fused_t1 = fuse_pyramid(feat_t1, stride);
  if (fused_t.channels() != w.input_channels() || fused_t1.channels() != w.input_channels()) {
    throw ShapeError("tracker weights expect " + std::to_string(w.input_channels()) +
                     " feature channels, pyramid provides " + std::to_string(fused_t.channels()));
  }
  w.validate(cfg.correlation_size(), cfg.correlation_size());

  std::vector<TrackPrediction> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Detection& det = boxes[i];
    const HeadTrace tr = track_head(fused_t, fused_t1, stride, det.box, w, cfg);
    TrackPrediction p;
    p.source = det;
    p.source_index = i;
    p.target_frame = det.frame + cfg.tau;
    p.predicted_box = decode(det.box, tr.delta);
    p.quality = sigmoid(tr.logit);
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<RegressionDelta, double> tracking_targets(const Box& b_t, const Box& g_t1,
                                                    const Box& p_t1) {
  if (!p_t1.has_positive_area()) throw std::domain_error("predicted box must have positive area");
  return {encode(b_t, g_t1), iou(p_t1, g_t1)};
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (std::abs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

double tracking_loss(const std::pair<RegressionDelta, double>& pred,
                     const std::pair<RegressionDelta, double>& target) {
  const auto& p = pred.first;
  const auto& t = target.first;
  return smooth_l1(p.dx - t.dx) + smooth_l1(p.dy - t.dy) + smooth_l1(p.dw - t.dw) +
         smooth_l1(p.dh - t.dh) + smooth_l1(pred.second - target.second);
}

std::vector<TrackPrediction> oracle_track(std::span<const Detection> boxes,
                                          const VideoDetectionSet& gt, const NoiseParams& noise,
                                          std::uint64_t seed, int tau) {
  std::vector<TrackPrediction> out;
  if (boxes.empty()) return out;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(boxes.front().frame)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> low(0.0, noise.unmatched_quality_max);

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Detection& det = boxes[i];
    TrackPrediction p;
    p.source = det;
    p.source_index = i;
    p.target_frame = det.frame + tau;
    p.predicted_box = det.box;

    // Associate with the best-overlapping ground-truth object at frame t.
    const Detection* match = nullptr;
    double best = noise.match_iou;
    if (det.frame >= 0 && static_cast<std::size_t>(det.frame) < gt.frames.size()) {
      for (const auto& g : gt.frames[det.frame]) {
        const double o = iou(det.box, g.box);
        if (o >= best && g.track_id && (match == nullptr || o > best)) {
          best = o;
          match = &g;
        }
      }
    }
    const Detection* next = nullptr;
    if (match != nullptr && static_cast<std::size_t>(p.target_frame) < gt.frames.size()) {
      for (const auto& g : gt.frames[p.target_frame]) {
        if (g.track_id == match->track_id) {
          next = &g;
          break;
        }
      }
    }
    // Noise is drawn for every box so one box's outcome never shifts another's.
    const double ex = normal(rng);
    const double ey = normal(rng);
    const double ew = normal(rng);
    const double eh = normal(rng);
    const double lowq = low(rng);
    if (next != nullptr) {
      const Box& t = next->box;
      p.predicted_box = Box::from_center(t.cx() + noise.center_sigma * ex * t.w(),
                                         t.cy() + noise.center_sigma * ey * t.h(),
                                         t.w() * std::exp(noise.scale_sigma * ew),
                                         t.h() * std::exp(noise.scale_sigma * eh));
      p.quality = iou(p.predicted_box, t);
    } else {
      p.quality = lowq;
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

void push_block(std::vector<NamedArray>& out, const std::string& prefix, const ConvBlockWeights& b) {
  const auto& c = b.conv;
  const std::int64_t o = c.out_channels;
  out.push_back({prefix + ".conv.weight", {o, c.in_channels, c.kernel, c.kernel}, c.weight});
  out.push_back({prefix + ".conv.bias", {static_cast<std::int64_t>(c.bias.size())}, c.bias});
  out.push_back({prefix + ".bn.gamma", {o}, b.bn.gamma});
  out.push_back({prefix + ".bn.beta", {o}, b.bn.beta});
  out.push_back({prefix + ".bn.mean", {o}, b.bn.mean});
  out.push_back({prefix + ".bn.var", {o}, b.bn.var});
}

const NamedArray& find(const std::vector<NamedArray>& arrays, const std::string& name,
                       std::size_t ndim) {
  for (const auto& a : arrays) {
    if (a.name == name) {
      if (a.shape.size() != ndim) throw ShapeError("array '" + name + "' has wrong rank");
      return a;
    }
  }
  throw ShapeError("weights file lacks array '" + name + "'");
}

ConvLayer read_conv(const std::vector<NamedArray>& arrays, const std::string& prefix) {
  const auto& w = find(arrays, prefix + ".weight", 4);
  if (w.shape[2] != w.shape[3]) throw ShapeError("'" + prefix + "' kernel must be square");
  ConvLayer c{static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]),
              static_cast<int>(w.shape[2]), w.data, find(arrays, prefix + ".bias", 1).data};
  c.validate();
  return c;
}

ConvBlockWeights read_block(const std::vector<NamedArray>& arrays, const std::string& prefix) {
  ConvBlockWeights b;
  b.conv = read_conv(arrays, prefix + ".conv");
  b.bn.gamma = find(arrays, prefix + ".bn.gamma", 1).data;
  b.bn.beta = find(arrays, prefix + ".bn.beta", 1).data;
  b.bn.mean = find(arrays, prefix + ".bn.mean", 1).data;
  b.bn.var = find(arrays, prefix + ".bn.var", 1).data;
  b.validate();
  return b;
}

Linear read_linear(const std::vector<NamedArray>& arrays, const std::string& prefix) {
  const auto& w = find(arrays, prefix + ".weight", 2);
  Linear l{static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]), w.data,
           find(arrays, prefix + ".bias", 1).data};
  l.validate();
  return l;
}

}  // namespace

void save_weights(const std::filesystem::path& path, const TrackerWeights& w) {
  std::vector<NamedArray> arrays;
  arrays.push_back({"meta.shared_pre", {1}, {w.shared_pre ? 1.0 : 0.0}});
  push_block(arrays, "template", w.template_block);
  if (!w.shared_pre) push_block(arrays, "search", w.search_block);
  push_block(arrays, "post", w.post_block);
  const auto& h = w.head_conv;
  arrays.push_back({"head.weight", {h.out_channels, h.in_channels, h.kernel, h.kernel}, h.weight});
  arrays.push_back({"head.bias", {static_cast<std::int64_t>(h.bias.size())}, h.bias});
  arrays.push_back({"box_fc.weight", {w.box_fc.out_features, w.box_fc.in_features}, w.box_fc.weight});
  arrays.push_back({"box_fc.bias", {w.box_fc.out_features}, w.box_fc.bias});
  arrays.push_back(
      {"score_fc.weight", {w.score_fc.out_features, w.score_fc.in_features}, w.score_fc.weight});
  arrays.push_back({"score_fc.bias", {w.score_fc.out_features}, w.score_fc.bias});
  save_arrays(path, arrays);
}

TrackerWeights load_weights(const std::filesystem::path& path) {
  const auto arrays = load_arrays(path);
  TrackerWeights w;
  const auto& meta = find(arrays, "meta.shared_pre", 1);
  if (meta.data.size() != 1) throw ShapeError("meta.shared_pre must hold one value");
  w.shared_pre = meta.data[0] != 0.0;
  w.template_block = read_block(arrays, "template");
  if (!w.shared_pre) w.search_block = read_block(arrays, "search");
  w.post_block = read_block(arrays, "post");
  w.head_conv = read_conv(arrays, "head");
  w.box_fc = read_linear(arrays, "box_fc");
  w.score_fc = read_linear(arrays, "score_fc");
  return w;
}

}  // namespace vidtrack
