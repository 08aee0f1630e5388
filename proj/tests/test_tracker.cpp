#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "vidtrack/tracker.hpp"

using namespace vidtrack;
using doctest::Approx;

namespace {

constexpr int kStride = 4;

FeaturePyramid random_pyramid(std::uint64_t seed, int channels = 8, int h = 24, int w = 28) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor3 t(channels, h, w);
  for (double& v : t.data()) v = u(rng);
  return {h * kStride, w * kStride, {{kStride, t}}};
}

Detection det_at(const Box& b, int frame = 0) {
  Detection d;
  d.frame = frame;
  d.score = 0.8;
  d.box = b;
  return d;
}

void zero_fc(TrackerWeights& w) {
  std::fill(w.box_fc.weight.begin(), w.box_fc.weight.end(), 0.0);
  std::fill(w.box_fc.bias.begin(), w.box_fc.bias.end(), 0.0);
  std::fill(w.score_fc.weight.begin(), w.score_fc.weight.end(), 0.0);
  std::fill(w.score_fc.bias.begin(), w.score_fc.bias.end(), 0.0);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero FC layers predict the source box with quality 0.5") {
  const TrackerConfig cfg;
  TrackerWeights w = synthesize_weights({}, cfg, 4);
  zero_fc(w);
  const auto a = random_pyramid(1);
  const auto b = random_pyramid(2);
  const std::vector<Detection> boxes{det_at(Box(10, 12, 40, 50)), det_at(Box(50, 30, 70, 80))};
  const auto preds = track(a, b, boxes, w, cfg);
  REQUIRE(preds.size() == 2);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].predicted_box == boxes[i].box);
    CHECK(preds[i].quality == 0.5);
    CHECK(preds[i].source_index == i);
    CHECK(preds[i].target_frame == 1);
  }
  CHECK(track(a, b, std::vector<Detection>{}, w, cfg).empty());
}

TEST_CASE("head tensor shapes") {
  const TrackerConfig cfg;
  const TrackerWeights w = synthesize_weights({}, cfg, 4);
  const auto a = random_pyramid(1);
  const auto tr = track_head(a.levels[0].map, random_pyramid(2).levels[0].map, kStride, Box(20, 20, 50, 60), w, cfg);
  auto shape = [](const Tensor3& t) { return std::vector<int>{t.channels(), t.height(), t.width()}; };
  CHECK(shape(tr.template_features) == std::vector<int>{8, 7, 7});
  CHECK(shape(tr.search_features) == std::vector<int>{8, 21, 21});
  CHECK(shape(tr.correlation) == std::vector<int>{8, 15, 15});
  CHECK(shape(tr.post_correlation) == std::vector<int>{8, 15, 15});
  CHECK(shape(tr.head) == std::vector<int>{256, 15, 15});
}

TEST_CASE("forward pass matches an independent straight-line oracle") {
  const TrackerConfig cfg;
  WeightInit init;
  init.shared_pre = false;
  init.range = 0.2;
  const TrackerWeights w = synthesize_weights(init, cfg, 77);
  const auto a = random_pyramid(10);
  const auto b = random_pyramid(11);
  // Boxes at most 56 px on a side keep every bin at or below two cells, so the
  // adaptive sampler uses a 2 x 2 grid.
  const std::vector<Detection> boxes{det_at(Box(30, 20, 70, 64)), det_at(Box(-5, 40, 25, 90))};
  const auto got = track(a, b, boxes, w, cfg);

  for (std::size_t n = 0; n < boxes.size(); ++n) {
    const Box& box = boxes[n].box;
    const Tensor3 tf = oracle::roi_pool_oversampled(a.levels[0].map, box, 7, 7, kStride, 2);
    const Box wide = Box::from_center(box.cx(), box.cy(), 3 * box.w(), 3 * box.h());
    const Tensor3 sf = oracle::roi_pool_oversampled(b.levels[0].map, wide, 21, 21, kStride, 2);
    const Tensor3 corr = oracle::correlate(oracle::conv_bn_relu(tf, w.template_block),
                                           oracle::conv_bn_relu(sf, w.search_block));
    Tensor3 head = oracle::conv_same(oracle::conv_bn_relu(corr, w.post_block), w.head_conv);
    for (double& v : head.data()) v = std::max(0.0, v);
    double out[5];
    for (int o = 0; o < 5; ++o) {
      const Linear& fc = o < 4 ? w.box_fc : w.score_fc;
      const int row = o < 4 ? o : 0;
      double s = fc.bias[row];
      for (int i = 0; i < fc.in_features; ++i)
        s += fc.weight[static_cast<std::size_t>(row) * fc.in_features + i] * head.data()[i];
      out[o] = s;
    }
    const double cx = box.cx() + out[0] * box.w();
    const double cy = box.cy() + out[1] * box.h();
    const double pw = box.w() * std::exp(out[2]);
    const double ph = box.h() * std::exp(out[3]);
    const Box& p = got[n].predicted_box;
    CHECK(std::abs(p.x1() - (cx - pw / 2)) <= 1e-9);
    CHECK(std::abs(p.y1() - (cy - ph / 2)) <= 1e-9);
    CHECK(std::abs(p.x2() - (cx + pw / 2)) <= 1e-9);
    CHECK(std::abs(p.y2() - (cy + ph / 2)) <= 1e-9);
    CHECK(std::abs(got[n].quality - 1.0 / (1.0 + std::exp(-out[4]))) <= 1e-9);
  }
}

TEST_CASE("boxes are tracked independently") {
  const TrackerConfig cfg;
  const TrackerWeights w = synthesize_weights({}, cfg, 8);
  const auto a = random_pyramid(3);
  const auto b = random_pyramid(4);
  const Detection d0 = det_at(Box(10, 10, 40, 40));
  const Detection d1 = det_at(Box(60, 20, 90, 70));
  const auto both = track(a, b, std::vector<Detection>{d0, d1}, w, cfg);
  const auto first = track(a, b, std::vector<Detection>{d0}, w, cfg);
  const auto second = track(a, b, std::vector<Detection>{d1}, w, cfg);
  CHECK(both[0].predicted_box == first[0].predicted_box);
  CHECK(both[0].quality == first[0].quality);
  CHECK(both[1].predicted_box == second[0].predicted_box);
  CHECK(both[1].quality == second[0].quality);
}

TEST_CASE("whole-cell translation of features and box leaves the deltas unchanged") {
  const TrackerConfig cfg;
  const TrackerWeights w = synthesize_weights({}, cfg, 12);
  const auto a = random_pyramid(5, 8, 40, 40);
  const auto b = random_pyramid(6, 8, 40, 40);
  const int shift = 3;
  auto shifted = [&](const FeaturePyramid& p) {
    FeaturePyramid q = p;
    Tensor3& m = q.levels[0].map;
    for (int c = 0; c < m.channels(); ++c)
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
          m.at(c, y, x) = (y >= shift && x >= shift) ? p.levels[0].map.at(c, y - shift, x - shift) : 0.0;
    return q;
  };
  const Box box(50, 50, 80, 86);
  const auto base = track_head(a.levels[0].map, b.levels[0].map, kStride, box, w, cfg);
  const auto moved = track_head(shifted(a).levels[0].map, shifted(b).levels[0].map, kStride,
                                box.translated(shift * kStride, shift * kStride), w, cfg);
  CHECK(std::abs(base.delta.dx - moved.delta.dx) <= 1e-12);
  CHECK(std::abs(base.delta.dw - moved.delta.dw) <= 1e-12);
  CHECK(std::abs(base.logit - moved.logit) <= 1e-12);
}

TEST_CASE("shape validation") {
  TrackerConfig cfg;
  TrackerWeights w = synthesize_weights({}, cfg, 1);
  CHECK_NOTHROW(w.validate(15, 15));
  CHECK_THROWS_AS(w.validate(14, 15), ShapeError);
  const auto a = random_pyramid(1, 6);
  CHECK_THROWS_AS(track(a, a, std::vector<Detection>{det_at(Box(0, 0, 10, 10))}, w, cfg), ShapeError);
  cfg.search_pool = 20;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("tracking targets") {
  const Box g = Box::from_center(12, 16, 8, 4);
  CHECK(tracking_targets(g, g, g).second == 1.0);
  const auto t = tracking_targets(g, g, Box(100, 100, 110, 110));
  CHECK(t.first == RegressionDelta{});
  CHECK(t.second == 0.0);
  const Box b = Box::from_center(10, 20, 4, 8);
  const Box p = Box::from_center(12, 18, 8, 4);
  const auto u = tracking_targets(b, g, p);
  CHECK(u.first.dx == Approx(0.5));
  CHECK(u.first.dh == Approx(-std::log(2.0)));
  // Overlap of [8,16]x[16,20] and [8,16]x[14,18]: 8 x 2 = 16 over 32 + 32 - 16.
  CHECK(u.second == Approx(16.0 / 48.0));
}

TEST_CASE("smooth L1") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(-2.0) == 1.5);
  const std::pair<RegressionDelta, double> same{{0.1, -0.2, 0.3, 0.0}, 0.7};
  CHECK(tracking_loss(same, same) == 0.0);
  const std::pair<RegressionDelta, double> other{{0.1, -0.2, 0.3, 2.0}, 0.2};
  CHECK(tracking_loss(other, same) == Approx(1.5 + 0.125));

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 1000) {
    const double x = u(rng);
    if (std::abs(std::abs(x) - 1.0) < 1e-3) continue;
    const double fd = (smooth_l1(x + h) - smooth_l1(x - h)) / (2 * h);
    CHECK(std::abs(fd - smooth_l1_grad(x)) <= 1e-4);
    ++checked;
  }
}

TEST_CASE("ground-truth stand-in tracker") {
  VideoDetectionSet gt;
  gt.video_id = "v";
  auto put = [&](int t, std::int64_t id, Box b) {
    Detection d = det_at(b, t);
    d.track_id = id;
    gt.frame(t).push_back(d);
  };
  put(0, 0, Box(10, 10, 30, 40));
  put(1, 0, Box(40, 12, 60, 42));
  put(0, 1, Box(200, 200, 220, 230));

  const std::vector<Detection> boxes{det_at(Box(11, 10, 31, 40)), det_at(Box(400, 400, 410, 410)),
                                     det_at(Box(200, 200, 220, 230))};
  const auto exact = oracle_track(boxes, gt, {}, 1);
  CHECK(exact[0].predicted_box == Box(40, 12, 60, 42));
  CHECK(exact[0].quality == 1.0);
  CHECK(exact[1].quality < 0.5);
  // Object 1 has no box at frame 1.
  CHECK(exact[2].quality < 0.5);

  NoiseParams noisy;
  noisy.center_sigma = 0.1;
  noisy.scale_sigma = 0.1;
  const auto p1 = oracle_track(boxes, gt, noisy, 5);
  CHECK(p1 == oracle_track(boxes, gt, noisy, 5));
  CHECK(p1[0].quality == Approx(iou(p1[0].predicted_box, Box(40, 12, 60, 42))));
  CHECK(p1 != oracle_track(boxes, gt, noisy, 6));
}

TEST_CASE("weights file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "vidtrack_test_tracker";
  std::filesystem::create_directories(dir);
  for (bool shared : {true, false}) {
    WeightInit init;
    init.shared_pre = shared;
    const TrackerWeights w = synthesize_weights(init, {}, 31);
    save_weights(dir / "a.vtw", w);
    const TrackerWeights r = load_weights(dir / "a.vtw");
    save_weights(dir / "b.vtw", r);
    CHECK(file_bytes(dir / "a.vtw") == file_bytes(dir / "b.vtw"));
    CHECK(r.shared_pre == shared);
    CHECK(r.head_conv.weight == w.head_conv.weight);
    CHECK(r.score_fc.weight == w.score_fc.weight);
  }
  std::ofstream(dir / "junk.vtw") << "nope";
  CHECK_THROWS(load_weights(dir / "junk.vtw"));
  std::filesystem::remove_all(dir);
}
