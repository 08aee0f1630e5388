#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "vidtrack/tensor_ops.hpp"

using namespace vidtrack;
using doctest::Approx;

namespace {

Tensor3 random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor3 t(c, h, w);
  for (double& v : t.data()) v = u(rng);
  return t;
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  REQUIRE(a.channels() == b.channels());
  REQUIRE(a.height() == b.height());
  REQUIRE(a.width() == b.width());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

ConvBlockWeights random_block(std::mt19937_64& rng, int out, int in, int k) {
  std::uniform_real_distribution<double> u(-0.5, 0.5), pos(0.5, 1.5);
  ConvBlockWeights b;
  b.conv = {out, in, k, std::vector<double>(static_cast<std::size_t>(out) * in * k * k), std::vector<double>(out)};
  for (double& v : b.conv.weight) v = u(rng);
  for (double& v : b.conv.bias) v = u(rng);
  for (int o = 0; o < out; ++o) {
    b.bn.gamma.push_back(pos(rng));
    b.bn.beta.push_back(u(rng));
    b.bn.mean.push_back(u(rng));
    b.bn.var.push_back(pos(rng));
  }
  return b;
}

}  // namespace

TEST_CASE("roi_align_full_avg") {
  const Tensor3 m(1, 2, 2, {1, 2, 3, 4});
  CHECK(roi_align_full_avg(m, Box(0, 0, 2, 2), 1, 1, 1).at(0, 0, 0) == Approx(2.5));

  const Tensor3 flat(2, 9, 11, 3.25);
  const Tensor3 p = roi_align_full_avg(flat, Box(6, 5, 30, 22), 3, 4, 4);
  for (double v : p.data()) CHECK(v == Approx(3.25));

  const Tensor3 outside = roi_align_full_avg(flat, Box(100, 100, 140, 120), 2, 2, 4);
  for (double v : outside.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(roi_align_full_avg(flat, Box(0, 0, 4, 4), 0, 2, 4), std::invalid_argument);
}

TEST_CASE("roi_align_full_avg agrees with dense oversampling") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-20, 70), size(2, 50);
  for (int k = 0; k < 20; ++k) {
    const Tensor3 f = random_tensor(rng, 2, 12, 14);
    const Box roi = Box::from_center(pos(rng), pos(rng), size(rng), size(rng));
    const Tensor3 got = roi_align_full_avg(f, roi, 3, 3, 4, {8});
    CHECK(max_abs_diff(got, oracle::roi_pool_oversampled(f, roi, 3, 3, 4, 8)) <= 1e-12);
  }
}

TEST_CASE("roi_align_nearest4") {
  const Tensor3 m(1, 2, 2, {1, 2, 3, 4});
  CHECK(roi_align_nearest4(m, Box(0, 0, 2, 2), 1, 1, 1).at(0, 0, 0) == Approx(2.5));
  // Bin centers land exactly on cell centers.
  const Tensor3 g(1, 3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor3 p = roi_align_nearest4(g, Box(0, 0, 3, 3), 3, 3, 1);
  CHECK(p == g);
  const Tensor3 c(1, 5, 5, -2.0);
  const Tensor3 pc = roi_align_nearest4(c, Box(1, 1, 9, 7), 2, 2, 2);
  for (double v : pc.data()) CHECK(v == -2.0);
  CHECK(bilinear_sample(g, 0, -0.1, 1.0) == 0.0);
  CHECK(bilinear_sample(g, 0, 3.0, 3.0) == 9.0);
}

TEST_CASE("roi_bin_size") {
  const BinSize b = roi_bin_size(Box(0, 0, 56, 28), 7, 7, 4);
  CHECK(b.width == Approx(2.0));
  CHECK(b.height == Approx(1.0));
}

TEST_CASE("depthwise_correlate") {
  const Tensor3 ones_t(1, 2, 2, 1.0);
  const Tensor3 ones_s(1, 3, 3, 1.0);
  const Tensor3 r = depthwise_correlate(ones_t, ones_s);
  CHECK(r.height() == 2);
  CHECK(r.width() == 2);
  for (double v : r.data()) CHECK(v == 4.0);

  std::mt19937_64 rng(5);
  const Tensor3 search = random_tensor(rng, 1, 6, 6);
  Tensor3 hot(1, 3, 3);
  hot.at(0, 1, 2) = 1.0;
  const Tensor3 sifted = depthwise_correlate(hot, search);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(sifted.at(0, y, x) == search.at(0, y + 1, x + 2));

  const Tensor3 t = random_tensor(rng, 3, 7, 7);
  const Tensor3 s = random_tensor(rng, 3, 21, 21);
  const Tensor3 out = depthwise_correlate(t, s);
  CHECK(out.channels() == 3);
  CHECK(out.height() == 15);
  CHECK(max_abs_diff(out, oracle::correlate(t, s)) <= 1e-9);

  CHECK_THROWS_AS(depthwise_correlate(Tensor3(2, 3, 3), Tensor3(3, 5, 5)), ShapeError);
  CHECK_THROWS_AS(depthwise_correlate(Tensor3(1, 6, 3), Tensor3(1, 5, 5)), ShapeError);
}

TEST_CASE("conv_block") {
  std::mt19937_64 rng(9);
  const Tensor3 in = random_tensor(rng, 3, 6, 5, 0.0, 2.0);

  ConvBlockWeights id;
  id.conv = {3, 3, 1, std::vector<double>(9, 0.0), std::vector<double>(3, 0.0)};
  for (int c = 0; c < 3; ++c) id.conv.weight[c * 3 + c] = 1.0;
  id.bn = {{1, 1, 1}, {0, 0, 0}, {0, 0, 0}, std::vector<double>(3, 1.0 - BatchNorm::kEpsilon)};
  CHECK(max_abs_diff(conv_block(in, id), in) <= 1e-9);

  ConvBlockWeights dead = id;
  dead.bn.beta = {-1e6, -1e6, -1e6};
  const Tensor3 zeros = conv_block(in, dead);
  for (double v : zeros.data()) CHECK(v == 0.0);

  const ConvBlockWeights w3 = random_block(rng, 4, 3, 3);
  CHECK(max_abs_diff(conv_block(in, w3), oracle::conv_bn_relu(in, w3)) <= 1e-9);

  ConvLayer even = w3.conv;
  even.kernel = 2;
  CHECK_THROWS_AS(conv2d_same(in, even), ShapeError);
}

TEST_CASE("fuse_pyramid") {
  std::mt19937_64 rng(2);
  FeaturePyramid one{32, 32, {{4, random_tensor(rng, 3, 8, 8)}}};
  CHECK(fuse_pyramid(one, 4) == one.levels[0].map);

  FeaturePyramid two{64, 64, {{4, random_tensor(rng, 8, 16, 16)}, {8, random_tensor(rng, 8, 8, 8)}}};
  const Tensor3 f8 = fuse_pyramid(two, 8);
  CHECK(f8.channels() == 16);
  CHECK(f8.height() == 8);
  CHECK(f8.width() == 8);
  const Tensor3 f4 = fuse_pyramid(two, 4);
  CHECK(f4.height() == 16);

  FeaturePyramid flat{64, 64, {{4, Tensor3(1, 16, 16, 0.7)}, {8, Tensor3(1, 8, 8, 0.2)}}};
  const Tensor3 ff = fuse_pyramid(flat, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(ff.at(0, y, x) == 0.7);
      CHECK(ff.at(1, y, x) == 0.2);
    }
  CHECK_THROWS_AS(fuse_pyramid(FeaturePyramid{}, 4), ShapeError);
  CHECK_THROWS_AS(fuse_pyramid(two, 16), ShapeError);
}

TEST_CASE("pyramid validation") {
  FeaturePyramid bad{64, 64, {{8, Tensor3(1, 8, 8)}, {4, Tensor3(1, 16, 16)}}};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  FeaturePyramid good{64, 64, {{4, Tensor3(1, 16, 16)}, {8, Tensor3(1, 8, 8)}}};
  CHECK_NOTHROW(good.validate());
}
