#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace vidtrack {

/// Axis-aligned rectangle stored by its corners, in continuous pixel units.
///
/// Zero-area boxes are representable; negative extent is rejected at
/// construction. Regression math uses the center form (cx, cy, w, h).
class Box {
 public:
  Box() = default;
  Box(double x1, double y1, double x2, double y2);

  static Box from_center(double cx, double cy, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }

  double cx() const { return 0.5 * (x1_ + x2_); }
  double cy() const { return 0.5 * (y1_ + y2_); }
  double w() const { return x2_ - x1_; }
  double h() const { return y2_ - y1_; }
  double area() const { return w() * h(); }

  bool has_positive_area() const { return w() > 0.0 && h() > 0.0; }

  Box translated(double dx, double dy) const;
  Box scaled(double s) const;

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_ = 0.0;
  double y1_ = 0.0;
  double x2_ = 0.0;
  double y2_ = 0.0;
};

/// Box regression offsets: center shift normalized by the reference size,
/// width/height change in log space.
struct RegressionDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;

  bool is_finite() const;
  friend bool operator==(const RegressionDelta&, const RegressionDelta&) = default;
};

/// Shift/resize coefficients used to perturb a ground-truth box into a
/// training RoI. dx, dy in [-1, 1]; dw, dh in [0.5, 1.5].
struct JitterCoefficients {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 1.0;
  double dh = 1.0;

  static constexpr double kShiftMin = -1.0;
  static constexpr double kShiftMax = 1.0;
  static constexpr double kScaleMin = 0.5;
  static constexpr double kScaleMax = 1.5;

  bool in_range() const;
};

/// Raised when a rejection sampler runs out of its draw budget.
class ExhaustionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double iou(const Box& a, const Box& b);

/// Regression target taking `reference` onto `target`. Both boxes must have
/// positive width and height; throws std::domain_error otherwise.
RegressionDelta encode(const Box& reference, const Box& target);

/// Applies `delta` to `reference`. Inverse of encode.
Box decode(const Box& reference, const RegressionDelta& delta);

/// Scales width and height by `k` about the center. Throws
/// std::invalid_argument for k < 1.
Box expand(const Box& b, double k);

Box jitter_roi(const Box& gt, const JitterCoefficients& coeffs);

/// Overlap filter applied to jittered RoIs. With `keep_below` set, a RoI is
/// kept iff IoU(R, g) < threshold; otherwise iff IoU(R, g) >= threshold.
struct RoiFilter {
  double threshold = 0.5;
  bool keep_below = true;

  bool accepts(double overlap) const {
    return keep_below ? overlap < threshold : overlap >= threshold;
  }
};

/// Draws 2 * n_keep jittered RoIs around `gt`, keeps those passing `filter`
/// and returns a seeded random selection of n_keep of them. Throws
/// ExhaustionError when fewer than n_keep pass.
std::vector<Box> sample_jittered_rois(const Box& gt, int n_keep, std::uint64_t seed,
                                      const RoiFilter& filter = {});

}  // namespace vidtrack
